#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "pmfence/classify.hpp"
#include "pmfence/interproc.hpp"
#include "pmfence/parser.hpp"
#include "pmfence/transform.hpp"
#include "support/gen.hpp"

using namespace pmfence;

namespace {

const std::set<std::string> kPm{"pmalloc"};

Program parse(const std::string& src) {
  ParseResult r = parse_program(src);
  REQUIRE(r.ok());
  return r.program;
}

Program load_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<Opcode> ops_of(const Program& p, const std::string& fn) {
  std::vector<Opcode> ops;
  const Function* f = p.find_function(fn);
  REQUIRE(f != nullptr);
  for (const auto& b : f->blocks)
    for (const auto& in : b.insts) ops.push_back(in.op);
  return ops;
}

bool reanalysis_clean(const Program& p, Mode mode) {
  ClassifyResult c = compute_pm_set(p, kPm);
  REQUIRE(c.ok());
  return !run_interprocedural(p, c.classification, mode).has_errors();
}

int combined(const TransformStats& s) {
  return s.flushopts + s.flushes + s.flushranges + s.fences;
}

}  // namespace

TEST_CASE("pair overwrite: one write-back and one fence, before the second store") {
  Program p = load_file("tests/data/overwrite_pair.pmir");
  TransformResult t = transform_program(p, kPm, Mode::Opt);
  CHECK(t.stats.flushopts == 1);
  CHECK(t.stats.fences == 1);
  CHECK(t.stats.flushes == 0);

  const std::vector<Opcode> want{
      Opcode::Store,    Opcode::FlushOpt, Opcode::Fence,    Opcode::Store,
      Opcode::FlushOpt, Opcode::FlushOpt, Opcode::Fence,    Opcode::Ret};
  CHECK(ops_of(t.program, "main") == want);
  // The inserted write-back covers the first store's line.
  const Instruction& fl = t.program.find_function("main")->blocks[0].insts[1];
  CHECK(fl.base == "x");
  CHECK(reanalysis_clean(t.program, Mode::Opt));
}

TEST_CASE("stack push: both node fields flushed, one fence before the commit") {
  Program p = load_file("tests/data/stack_push.pmir");
  TransformResult t = transform_program(p, kPm, Mode::Opt);
  CHECK(t.stats.flushopts == 3);  // node data, node next, stack header
  CHECK(t.stats.fences == 2);     // before the commit store; before main's exit

  const Function* push = t.program.find_function("push");
  REQUIRE(push != nullptr);
  const auto& insts = push->blocks[0].insts;
  int commit = -1;
  for (size_t i = 0; i < insts.size(); i++)
    if (insts[i].op == Opcode::Store && insts[i].base == "s") commit = static_cast<int>(i);
  REQUIRE(commit >= 3);
  CHECK(insts[commit - 1].op == Opcode::Fence);
  std::set<std::string> flushed;
  for (int i = 0; i < commit - 1; i++)
    if (insts[i].op == Opcode::FlushOpt && insts[i].base == "n")
      flushed.insert(insts[i].field);
  CHECK(flushed == std::set<std::string>{"data", "next"});

  CHECK(reanalysis_clean(t.program, Mode::Opt));
}

TEST_CASE("base mode brackets every persistent store") {
  Program p = load_file("tests/data/two_store.pmir");
  TransformResult t = transform_program(p, kPm, Mode::Base);
  const std::vector<Opcode> want{Opcode::Store, Opcode::FlushOpt, Opcode::Fence,
                                 Opcode::Store, Opcode::FlushOpt, Opcode::Fence,
                                 Opcode::Ret};
  CHECK(ops_of(t.program, "main") == want);
  CHECK(reanalysis_clean(t.program, Mode::Base));
}

TEST_CASE("counter mode brackets atomic stores and help-flushes atomic loads") {
  Program p = load_file("tests/data/msg_pass.pmir");
  TransformResult t = transform_program(p, kPm, Mode::Flit);

  std::vector<Opcode> writer = ops_of(t.program, "writer");
  auto idx = [&](const std::vector<Opcode>& v, Opcode op) {
    for (size_t i = 0; i < v.size(); i++)
      if (v[i] == op) return static_cast<int>(i);
    return -1;
  };
  int inc = idx(writer, Opcode::CntInc);
  int st = idx(writer, Opcode::StoreAtomic);
  int dec = idx(writer, Opcode::CntDec);
  REQUIRE(inc >= 0);
  REQUIRE(dec >= 0);
  CHECK(inc < st);
  CHECK(st < dec);
  // The counter window closes only after the value is written back.
  CHECK(idx(writer, Opcode::Fence) > st);
  CHECK(idx(writer, Opcode::Fence) < dec);

  // Atomic loads get a conditional help-flush, never an unconditional
  // write-back of the loaded line.
  const Function* reader = t.program.find_function("reader");
  REQUIRE(reader != nullptr);
  const auto& rin = reader->blocks[0].insts;
  for (size_t i = 0; i < rin.size(); i++) {
    if (rin[i].op != Opcode::LoadAtomic) continue;
    REQUIRE(i + 1 < rin.size());
    CHECK(rin[i + 1].op == Opcode::HelpFlush);
  }

  CHECK(reanalysis_clean(t.program, Mode::Flit));
}

TEST_CASE("whole-object copies are lowered to field stores with write-backs") {
  Program p = parse(
      "struct Pair { a: int @0, b: int @8 } size 16\n"
      "pmroot d: Pair\n"
      "func main() {\n"
      "  pmalloc s, Pair\n  store s.a, 1\n  store s.b, 2\n"
      "  memcpy d, s, 16\n  ret\n}\n");
  TransformResult t = transform_program(p, kPm, Mode::Opt);
  CHECK(t.stats.lowered_memcpys == 1);
  for (Opcode op : ops_of(t.program, "main")) CHECK(op != Opcode::Memcpy);
  CHECK(reanalysis_clean(t.program, Mode::Opt));
}

TEST_CASE("transformation is idempotent in every mode") {
  for (std::uint64_t seed = 1; seed <= 40; seed++) {
    for (Mode mode : {Mode::Base, Mode::Opt, Mode::Flit}) {
      CAPTURE(seed);
      CAPTURE(static_cast<int>(mode));
      Program p = parse(testsupport::random_program(seed));
      TransformResult once = transform_program(p, kPm, mode);
      TransformResult twice = transform_program(once.program, kPm, mode);
      CHECK(once.program.structurally_equal(twice.program));
      CHECK(twice.stats.total_instrumentation() == 0);
    }
  }
}

TEST_CASE("analysis-driven insertion never exceeds the per-store baseline") {
  for (std::uint64_t seed = 1; seed <= 40; seed++) {
    CAPTURE(seed);
    Program p = parse(testsupport::random_program(seed));
    TransformResult opt = transform_program(p, kPm, Mode::Opt);
    TransformResult base = transform_program(p, kPm, Mode::Base);
    CHECK(combined(opt.stats) <= combined(base.stats));
  }
}

TEST_CASE("repaired programs re-analyze clean") {
  for (std::uint64_t seed = 1; seed <= 40; seed++) {
    for (Mode mode : {Mode::Opt, Mode::Flit}) {
      CAPTURE(seed);
      Program p = parse(testsupport::random_program(seed));
      TransformResult t = transform_program(p, kPm, mode);
      CHECK(reanalysis_clean(t.program, mode));
    }
  }
}
