#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pmfence/classify.hpp"
#include "pmfence/interproc.hpp"
#include "pmfence/parser.hpp"
#include "support/gen.hpp"

using namespace pmfence;

namespace {

Program parse(const std::string& src) {
  ParseResult r = parse_program(src);
  REQUIRE(r.ok());
  return r.program;
}

AnalysisResults run(const Program& p, Mode mode = Mode::Opt) {
  ClassifyResult c = compute_pm_set(p, {"pmalloc"});
  REQUIRE(c.ok());
  return run_interprocedural(p, c.classification, mode);
}

int count_kind(const std::vector<Violation>& vs, ViolationKind k) {
  int n = 0;
  for (const auto& v : vs) n += v.kind == k;
  return n;
}

const Violation* find_kind(const std::vector<Violation>& vs, ViolationKind k) {
  for (const auto& v : vs)
    if (v.kind == k) return &v;
  return nullptr;
}

const ParamState kEscClean{EscapeState::Escaped, PersistState::Clean, {}};
const ParamState kCapClean{EscapeState::Captured, PersistState::Clean, {}};
const ParamState kEscDirty{EscapeState::Escaped, PersistState::Dirty, {}};

SummarizedResult result_with(ParamState arg) {
  SummarizedResult r = optimistic_result(1);
  r.states[0] = arg;
  return r;
}

}  // namespace

TEST_CASE("callsite resolution: exact entry wins and needs no push") {
  SummaryTable t;
  t.entries[{"f", {kEscClean}}] = result_with(kEscDirty);
  ResolveOutcome out = resolve_callsite(t, "f", 1, {kEscClean});
  CHECK(!out.needs_push);
  CHECK(out.result.states[0].persist == PersistState::Dirty);
}

TEST_CASE("callsite resolution: meet of all higher contexts") {
  SummaryTable t;
  t.entries[{"f", {kEscClean}}] =
      result_with({EscapeState::Escaped, PersistState::Clwb, {}});
  t.entries[{"f", {kCapClean}}] = result_with(kCapClean);
  // The query context is below both stored contexts, so both summaries
  // apply and their meet is taken.
  ResolveOutcome out = resolve_callsite(t, "f", 1, {kEscDirty});
  CHECK(out.needs_push);
  CHECK(out.result.states[0].esc == EscapeState::Escaped);
  CHECK(out.result.states[0].persist == PersistState::Clwb);
}

TEST_CASE("callsite resolution: optimistic bootstrap when nothing applies") {
  SummaryTable t;
  t.entries[{"f", {kEscDirty}}] = result_with(kEscDirty);  // lower, not usable
  ResolveOutcome out = resolve_callsite(t, "f", 1, {kEscClean});
  CHECK(out.needs_push);
  REQUIRE(out.result.states.size() == 2);
  CHECK(out.result.states[0] == ParamState{});
  CHECK(out.result.states[1] == ParamState{});
}

TEST_CASE("entry points: harness threads with escaped-clean root arguments") {
  Program p = parse(
      "struct C { v: int @0 atomic } size 8\npmroot x: C\n"
      "func t1(c: ptr<C>) {\n  store_atomic c.v, 1\n  ret\n}\n"
      "func t2(c: ptr<C>, k: int) {\n  load_atomic r, c.v\n  ret\n}\n"
      "harness {\n  thread t1(x)\n  thread t2(x, 3)\n  bounds 100\n}\n");
  ClassifyResult c = compute_pm_set(p, {"pmalloc"});
  REQUIRE(c.ok());
  std::vector<SummaryKey> es = entry_points(p, c.classification);
  REQUIRE(es.size() == 2);
  CHECK(es[0].function == "t1");
  CHECK(es[0].context == CallingContext{kEscClean});
  CHECK(es[1].function == "t2");
  REQUIRE(es[1].context.size() == 2);
  CHECK(es[1].context[0] == kEscClean);
  CHECK(es[1].context[1] == ParamState{});  // scalar argument
}

TEST_CASE("stack push summary records per-field persistency effects") {
  Program p = parse(R"(
struct Node { data: int @0, next: ptr<Node> @8 } size 16
struct Stack { top: ptr<Node> @0 } size 8
pmroot st: Stack
func push(s: ptr<Stack>, v: int) {
  pmalloc n, Node
  store n.data, v
  load t, s.top
  store n.next, t
  store s.top, n
  ret
}
func main() {
  call push(st, 5)
  ret
}
)");
  AnalysisResults res = run(p);

  const SummarizedResult* sum = nullptr;
  for (const auto& [key, r] : res.table.entries)
    if (key.function == "push" && !key.context.empty() &&
        key.context[0].esc == EscapeState::Escaped)
      sum = &r;
  REQUIRE(sum != nullptr);
  REQUIRE(sum->states.size() == 3);  // two parameters plus the return slot

  // The stack header is dirtied at its only field; the freshly allocated
  // node is not visible through any parameter, so its dirty escape is
  // carried as an out-of-band event instead.
  CHECK(sum->states[0].esc == EscapeState::Escaped);
  CHECK(summary_persist_at(sum->states[0], 0) == PersistState::Dirty);
  CHECK(sum->mark_obj_dir_esp);
  CHECK(!sum->performs_release);

  const Violation* v =
      find_kind(res.violations, ViolationKind::DoubleDirtyEscaped);
  REQUIRE(v != nullptr);
  CHECK(count_kind(res.violations, ViolationKind::DoubleDirtyEscaped) == 1);
  CHECK(v->site == Site{"push", "entry", 4});
}

TEST_CASE("recursive functions reach a summary fixpoint") {
  Program p = parse(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func rec(c: ptr<C>, k: int) {\n"
      "  store c.v, k\n  call rec(c, k)\n  ret\n}\n"
      "func main() {\n  call rec(x, 1)\n  ret\n}\n");
  AnalysisResults res = run(p);  // must terminate within the worklist budget
  CHECK(res.contexts_analyzed >= 2);
  bool has_rec = false;
  for (const auto& [key, r] : res.table.entries)
    has_rec = has_rec || key.function == "rec";
  CHECK(has_rec);
}

TEST_CASE("callee dirtying an escaped argument flags foreign dirty state") {
  Program p = parse(
      "struct C { v: int @0 } size 8\npmroot x: C\npmroot y: C\n"
      "func taint(c: ptr<C>) {\n  store c.v, 1\n  ret\n}\n"
      "func main() {\n"
      "  store y.v, 1\n  call taint(x)\n"
      "  flushopt x.v\n  flushopt y.v\n  fence\n  ret\n}\n");
  AnalysisResults res = run(p);
  REQUIRE(count_kind(res.violations, ViolationKind::CallsiteDirtyEscape) == 1);
  const Violation* v =
      find_kind(res.violations, ViolationKind::CallsiteDirtyEscape);
  CHECK(v->site == Site{"main", "entry", 1});
  // The reported location is the caller-held line the callee cannot see.
  REQUIRE(v->locations.size() == 1);
  CHECK(v->locations[0].loc.ref == "y");
  CHECK(v->locations[0].loc.offset == 0);
}

TEST_CASE("invisible dirty-escape events propagate through summaries") {
  Program p = parse(R"(
struct Node { v: int @0 } size 8
struct Box { p: ptr<Node> @0 } size 8
pmroot b: Box
pmroot y: Node
func publish(bx: ptr<Box>) {
  pmalloc n, Node
  store n.v, 1
  store bx.p, n
  flushopt bx.p
  fence
  ret
}
func main() {
  store y.v, 1
  call publish(b)
  flushopt y.v
  fence
  ret
}
)");
  AnalysisResults res = run(p);

  // All parameter and return states of publish are clean at exit -- the
  // dirty node is reachable only through the flushed box pointer -- yet the
  // summary still records the dirty escape.
  const SummarizedResult* sum = nullptr;
  for (const auto& [key, r] : res.table.entries)
    if (key.function == "publish" && !key.context.empty() &&
        key.context[0].esc == EscapeState::Escaped)
      sum = &r;
  REQUIRE(sum != nullptr);
  CHECK(summary_persist_at(sum->states[0], 0) == PersistState::Clean);
  CHECK(sum->mark_obj_dir_esp);

  REQUIRE(count_kind(res.violations, ViolationKind::CallsiteDirtyEscape) == 1);
  const Violation* v =
      find_kind(res.violations, ViolationKind::CallsiteDirtyEscape);
  CHECK(v->site == Site{"main", "entry", 1});
  REQUIRE(v->locations.size() == 1);
  CHECK(v->locations[0].loc.ref == "y");
}

TEST_CASE("release operations in callees surface at dirty callsites") {
  Program p = parse(
      "struct C { v: int @0, f: int @8 atomic } size 16\n"
      "pmroot x: C\npmroot y: C\n"
      "func pub(c: ptr<C>) {\n  store_release c.f, 1\n  ret\n}\n"
      "func main() {\n"
      "  store y.v, 1\n  call pub(x)\n"
      "  flushopt x.f\n  flushopt y.v\n  fence\n  ret\n}\n");
  AnalysisResults res = run(p);

  const SummarizedResult* sum = nullptr;
  for (const auto& [key, r] : res.table.entries)
    if (key.function == "pub" && !key.context.empty() &&
        key.context[0].esc == EscapeState::Escaped)
      sum = &r;
  REQUIRE(sum != nullptr);
  CHECK(sum->performs_release);

  REQUIRE(count_kind(res.violations, ViolationKind::ReleaseWhileDirty) == 1);
  const Violation* v =
      find_kind(res.violations, ViolationKind::ReleaseWhileDirty);
  CHECK(v->site == Site{"main", "entry", 1});
}

TEST_CASE("interprocedural analysis is deterministic over random programs") {
  for (std::uint64_t seed = 1; seed <= 60; seed++) {
    CAPTURE(seed);
    Program p = parse(testsupport::random_program(seed));
    AnalysisResults a = run(p);
    AnalysisResults b = run(p);
    REQUIRE(a.violations.size() == b.violations.size());
    for (size_t i = 0; i < a.violations.size(); i++) {
      CHECK(a.violations[i].kind == b.violations[i].kind);
      CHECK(a.violations[i].site == b.violations[i].site);
    }
    CHECK(a.contexts_analyzed == b.contexts_analyzed);
  }
}
