#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pmfence/analysis.hpp"
#include "pmfence/cfg.hpp"
#include "pmfence/classify.hpp"
#include "pmfence/interproc.hpp"
#include "pmfence/parser.hpp"

using namespace pmfence;

namespace {

const std::set<std::string> kPm{"pmalloc"};

Program parse(const std::string& src) {
  ParseResult r = parse_program(src);
  REQUIRE(r.ok());
  return r.program;
}

struct Fixture {
  Program p;
  ClassifyResult cls;

  explicit Fixture(const std::string& src) : p(parse(src)), cls(compute_pm_set(p, kPm)) {
    REQUIRE(cls.ok());
  }

  FunctionAnalysis analyze(const std::string& fn, bool entry = true) {
    const Function* f = p.find_function(fn);
    REQUIRE(f != nullptr);
    SummaryTable table;
    return analyze_function(p, cls.classification, *f,
                            entry_context(*f, cls.classification), table,
                            Mode::Opt, entry);
  }

  TransferContext ctx(const std::string& fn, Mode mode = Mode::Opt) {
    const Function* f = p.find_function(fn);
    REQUIRE(f != nullptr);
    return TransferContext(p, cls.classification, *f, mode);
  }
};

int count_kind(const std::vector<Violation>& vs, ViolationKind k) {
  int n = 0;
  for (const auto& v : vs) n += v.kind == k;
  return n;
}

const char* kPush = R"(
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
)";

}  // namespace

TEST_CASE("store / flushopt / fence transfer chain") {
  Fixture fx(
      "struct C { v: int @0, w: int @8 } size 16\npmroot x: C\n"
      "func main() {\n  ret\n}\n");
  TransferContext tc = fx.ctx("main");
  AnalysisState s;
  Site site{"main", "entry", 0};

  Instruction st;
  st.op = Opcode::Store;
  st.base = "x";
  st.field = "v";
  st.args.push_back(Operand::constant(1));
  tc.apply(st, site, s);
  CHECK(s.persist_of({"x", 0}).state == PersistState::Dirty);
  CHECK(s.persist_of({"x", 0}).dirty_sites == std::set<Site>{site});

  Instruction fl;
  fl.op = Opcode::FlushOpt;
  fl.base = "x";
  fl.field = "v";
  tc.apply(fl, site, s);
  CHECK(s.persist_of({"x", 0}).state == PersistState::Clwb);
  // Idempotent on non-dirty entries.
  tc.apply(fl, site, s);
  CHECK(s.persist_of({"x", 0}).state == PersistState::Clwb);

  Instruction fe;
  fe.op = Opcode::Fence;
  tc.apply(fe, site, s);
  CHECK(s.persist_of({"x", 0}).state == PersistState::Clean);
}

TEST_CASE("fence upgrades only written-back entries") {
  Fixture fx(
      "struct C { v: int @0, w: int @8 } size 16\npmroot x: C\npmroot y: C\n"
      "func main() {\n  ret\n}\n");
  TransferContext tc = fx.ctx("main");
  AnalysisState s;
  s.pmap[{"x", 0}] = PersistEntry{PersistState::Clwb, {}, false};
  s.pmap[{"y", 0}] = PersistEntry{PersistState::Dirty, {}, false};
  Instruction fe;
  fe.op = Opcode::Fence;
  tc.apply(fe, {"main", "entry", 0}, s);
  CHECK(s.persist_of({"x", 0}).state == PersistState::Clean);
  CHECK(s.persist_of({"y", 0}).state == PersistState::Dirty);
}

TEST_CASE("synchronous flush cleans immediately") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\nfunc main() {\n  ret\n}\n");
  TransferContext tc = fx.ctx("main");
  AnalysisState s;
  s.pmap[{"x", 0}] = PersistEntry{PersistState::Dirty, {}, false};
  Instruction fl;
  fl.op = Opcode::Flush;
  fl.base = "x";
  fl.field = "v";
  tc.apply(fl, {"main", "entry", 0}, s);
  CHECK(s.persist_of({"x", 0}).state == PersistState::Clean);
}

TEST_CASE("escape transfers: store into PM escapes the stored value") {
  Fixture fx(kPush);
  TransferContext tc = fx.ctx("push");
  AnalysisState s;
  Site site{"push", "entry", 0};

  Instruction al;
  al.op = Opcode::Pmalloc;
  al.dst = "n";
  al.field = "Node";
  tc.apply(al, site, s);
  CHECK(s.escape_of("n") == EscapeState::Captured);

  Instruction st;
  st.op = Opcode::Store;
  st.base = "s";
  st.field = "top";
  st.args.push_back(Operand::var("n"));
  tc.apply(st, site, s);
  CHECK(s.escape_of("n") == EscapeState::Escaped);
}

TEST_CASE("assign copies the escape state and joins alias classes") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n  assign p, x\n  ret\n}\n");
  TransferContext tc = fx.ctx("main");
  AnalysisState s;
  s.set_escape("x", EscapeState::Escaped);
  Instruction as;
  as.op = Opcode::Assign;
  as.dst = "p";
  as.base = "x";
  tc.apply(as, {"main", "entry", 0}, s);
  CHECK(s.escape_of("p") == EscapeState::Escaped);
  CHECK(s.alias_set("p").count("x") == 1);
  CHECK(s.alias_set("x").count("p") == 1);
}

TEST_CASE("load gives the destination a fresh alias class") {
  Fixture fx(kPush);
  TransferContext tc = fx.ctx("push");
  AnalysisState s;
  std::set<std::string> cl{"t", "z"};
  s.aliases["t"] = cl;
  s.aliases["z"] = cl;
  Instruction ld;
  ld.op = Opcode::Load;
  ld.dst = "t";
  ld.base = "s";
  ld.field = "top";
  tc.apply(ld, {"push", "entry", 0}, s);
  CHECK(s.alias_set("t") == std::set<std::string>{"t"});
  CHECK(s.alias_set("z") == std::set<std::string>{"z"});
  // A pointer read out of a PM object is escaped: another path may reach it.
  CHECK(s.escape_of("t") == EscapeState::Escaped);
}

TEST_CASE("stack push inline states match the fixpoint") {
  Fixture fx(kPush);
  FunctionAnalysis fa = fx.analyze("push", /*entry=*/false);

  // After pmalloc: n is captured and clean.
  const AnalysisState& s1 = fa.before.at({"entry", 1});
  CHECK(s1.escape_of("n") == EscapeState::Captured);
  CHECK(s1.persist_of({"n", 0}).state == PersistState::Clean);

  // Before the commit store: n still captured, both fields dirty.
  const AnalysisState& s4 = fa.before.at({"entry", 4});
  CHECK(s4.escape_of("n") == EscapeState::Captured);
  CHECK(s4.persist_of({"n", 0}).state == PersistState::Dirty);
  CHECK(s4.persist_of({"n", 8}).state == PersistState::Dirty);

  // The commit store publishes two dirty lines at once.
  CHECK(count_kind(fa.violations, ViolationKind::DoubleDirtyEscaped) == 1);
  const Violation* dde = nullptr;
  for (const auto& v : fa.violations)
    if (v.kind == ViolationKind::DoubleDirtyEscaped) dde = &v;
  REQUIRE(dde != nullptr);
  CHECK(dde->site == Site{"push", "entry", 4});
  bool has0 = false, has8 = false;
  for (const auto& l : dde->locations) {
    has0 = has0 || (l.loc == AbstractLocation{"n", 0});
    has8 = has8 || (l.loc == AbstractLocation{"n", 8});
  }
  CHECK(has0);
  CHECK(has8);

  // At the return n escaped with dirty fields.
  const AnalysisState& s5 = fa.before.at({"entry", 5});
  CHECK(s5.escape_of("n") == EscapeState::Escaped);
}

TEST_CASE("diamond merge keeps the pessimistic persist state") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n"
      "  store x.v, 1\n  load t, x.v\n  brcond t, a, b\n"
      "a:\n  flushopt x.v\n  fence\n  br join\n"
      "b:\n  br join\n"
      "join:\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  // Clean on one arm, dirty on the other: the merge is dirty and the
  // end-of-program check fires.
  const AnalysisState& join = fa.before.at({"join", 0});
  CHECK(join.persist_of({"x", 0}).state == PersistState::Dirty);
  CHECK(count_kind(fa.violations, ViolationKind::Durability) == 1);
}

TEST_CASE("merge of write-back and clean is write-back") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n"
      "  store x.v, 1\n  flushopt x.v\n  load t, x.v\n  brcond t, a, b\n"
      "a:\n  fence\n  br join\n"
      "b:\n  br join\n"
      "join:\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  CHECK(fa.before.at({"join", 0}).persist_of({"x", 0}).state ==
        PersistState::Clwb);
}

TEST_CASE("relax-annotated accesses skip the persist transfer") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n  store x.v, 1 !relax\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  CHECK(fa.violations.empty());
}

TEST_CASE("atomic load dirties its source except under the counter scheme") {
  const char* src =
      "struct C { v: int @0 atomic } size 8\npmroot x: C\n"
      "func main() {\n  load_atomic t, x.v\n  ret\n}\n";
  Fixture fx(src);
  {
    TransferContext tc = fx.ctx("main", Mode::Opt);
    AnalysisState s;
    tc.apply(fx.p.functions[0].blocks[0].insts[0], {"main", "entry", 0}, s);
    CHECK(s.persist_of({"x", 0}).state == PersistState::Dirty);
    CHECK(s.persist_of({"x", 0}).load_induced);
  }
  {
    TransferContext tc = fx.ctx("main", Mode::Flit);
    AnalysisState s;
    tc.apply(fx.p.functions[0].blocks[0].insts[0], {"main", "entry", 0}, s);
    CHECK(s.persist_of({"x", 0}).state == PersistState::Clean);
  }
}

TEST_CASE("rmw acts as fence plus atomic access") {
  Fixture fx(
      "struct C { v: int @0 atomic, w: int @8 } size 16\npmroot x: C\n"
      "func main() {\n  rmw t, x.v, 1\n  ret\n}\n");
  TransferContext tc = fx.ctx("main");
  AnalysisState s;
  s.pmap[{"x", 8}] = PersistEntry{PersistState::Clwb, {}, false};
  tc.apply(fx.p.functions[0].blocks[0].insts[0], {"main", "entry", 0}, s);
  CHECK(s.persist_of({"x", 8}).state == PersistState::Clean);  // fence part
  CHECK(s.persist_of({"x", 0}).state == PersistState::Dirty);  // store part
}

TEST_CASE("release while a line is dirty is flagged") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n  lock m\n  store x.v, 1\n  unlock m\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  CHECK(count_kind(fa.violations, ViolationKind::ReleaseWhileDirty) == 1);
}

TEST_CASE("array stores are tracked per index variable") {
  Fixture fx(
      "struct A { buf: int[4] @0 } size 32\npmroot a: A\n"
      "func main() {\n"
      "  assign i, 0\n  addrof b, a.buf\n  storeidx b[i], 1\n"
      "  flushopt b[i]\n  fence\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  CHECK(fa.violations.empty());
}

TEST_CASE("unflushed array element is reported at exit") {
  Fixture fx(
      "struct A { buf: int[4] @0 } size 32\npmroot a: A\n"
      "func main() {\n"
      "  assign i, 0\n  addrof b, a.buf\n  storeidx b[i], 1\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  CHECK(count_kind(fa.violations, ViolationKind::ArrayUnflushed) == 1);
}

TEST_CASE("redefining a live dirty index variable loses the element") {
  Fixture fx(
      "struct A { buf: int[4] @0 } size 32\npmroot a: A\n"
      "func main() {\n"
      "  assign i, 0\n  addrof b, a.buf\n  storeidx b[i], 1\n"
      "  assign i, 1\n  storeidx b[i], 2\n"
      "  flushopt b[i]\n  fence\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  CHECK(count_kind(fa.violations, ViolationKind::IndexLost) == 1);
}

TEST_CASE("pointer arithmetic before a PM access warns") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n  ptradd p, x, 8\n  store p.v, 1\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  CHECK(count_kind(fa.violations, ViolationKind::PointerArithmetic) == 1);
  for (const auto& v : fa.violations)
    if (v.kind == ViolationKind::PointerArithmetic) CHECK(v.is_warning());

  // An access that is immediately written back and committed is exempt.
  Fixture ok(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n  ptradd p, x, 8\n  store p.v, 1\n"
      "  flushopt p.v\n  fence\n  ret\n}\n");
  FunctionAnalysis fo = ok.analyze("main");
  CHECK(count_kind(fo.violations, ViolationKind::PointerArithmetic) == 0);
}

TEST_CASE("fixpoint terminates within budget on loops") {
  Fixture fx(
      "struct C { v: int @0 } size 8\npmroot x: C\n"
      "func main() {\n  br head\n"
      "head:\n  load t, x.v\n  brcond t, out, body\n"
      "body:\n  store x.v, 1\n  flushopt x.v\n  fence\n  br head\n"
      "out:\n  ret\n}\n");
  FunctionAnalysis fa = fx.analyze("main");
  // 4 blocks, lattice height 2 per key: a handful of sweeps suffices.
  CHECK(fa.iterations <= 4 * 8);
  CHECK(fa.violations.empty());
}
