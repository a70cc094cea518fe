#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "pmfence/oracle.hpp"
#include "pmfence/parser.hpp"
#include "pmfence/transform.hpp"

using namespace pmfence;

namespace {

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

}  // namespace

TEST_CASE("unordered pair of stores is not robust and the witness is exact") {
  Program p = load_file("tests/data/two_store.pmir");
  OracleResult r = check_robustness(p);
  CHECK(!r.racy);
  CHECK(!r.robust);
  CHECK(!r.durable);
  REQUIRE(r.counterexample.has_value());
  // The second store persisted while the first did not -- an image no
  // in-order execution ever exhibits.
  const PmState& img = r.counterexample->image;
  CHECK(img.at("x.v") == 0);
  CHECK(img.at("y.v") == 1);
  CHECK(r.images_checked > 0);
  CHECK(r.strict_states > 0);
}

TEST_CASE("a write-back and fence between the stores restores robustness") {
  Program p = parse(
      "struct Cell { v: int @0 } size 8\n"
      "pmroot x: Cell\npmroot y: Cell\n"
      "func main() {\n"
      "  store x.v, 1\n  flushopt x.v\n  fence\n  store y.v, 1\n  ret\n}\n");
  OracleResult r = check_robustness(p);
  CHECK(!r.racy);
  CHECK(r.robust);
  CHECK(!r.durable);  // y's line may still be in the cache at exit
}

TEST_CASE("interleaving enumeration is exhaustive: two 2-step threads give 6 traces") {
  Program p = parse(
      "struct Cell { v: int @0 } size 8\n"
      "pmroot x: Cell\npmroot y: Cell\n"
      "func t1(c: ptr<Cell>) {\n  store c.v, 1\n  ret\n}\n"
      "func t2(c: ptr<Cell>) {\n  store c.v, 2\n  ret\n}\n"
      "harness {\n  thread t1(x)\n  thread t2(y)\n  bounds 100\n}\n");
  OracleResult r = check_robustness(p);
  CHECK(!r.racy);
  CHECK(r.traces == 6);  // C(4, 2) interleavings of the step sequences
}

TEST_CASE("conflicting plain accesses from two threads are a data race") {
  const char* tmpl =
      "struct Cell { v: int @0%s } size 8\n"
      "pmroot x: Cell\n"
      "func t1(c: ptr<Cell>) {\n  %s\n  ret\n}\n"
      "func t2(c: ptr<Cell>) {\n  %s\n  ret\n}\n"
      "harness {\n  thread t1(x)\n  thread t2(x)\n  bounds 100\n}\n";
  auto prog = [&](const char* attr, const char* s1, const char* s2) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, tmpl, attr, s1, s2);
    return parse(buf);
  };

  SUBCASE("plain store vs plain store races") {
    OracleResult r = check_robustness(prog("", "store c.v, 1", "store c.v, 2"));
    CHECK(r.racy);
  }
  SUBCASE("atomic accesses do not race") {
    OracleResult r = check_robustness(
        prog(" atomic", "store_atomic c.v, 1", "store_atomic c.v, 2"));
    CHECK(!r.racy);
  }
  SUBCASE("mutex-guarded plain stores do not race") {
    OracleResult r = check_robustness(
        prog("", "lock m\n  store c.v, 1\n  unlock m",
             "lock m\n  store c.v, 2\n  unlock m"));
    CHECK(!r.racy);
    CHECK(r.robust);
  }
}

TEST_CASE("durability verdicts") {
  SUBCASE("an unflushed store is not durable") {
    Program p = parse(
        "struct C { v: int @0 } size 8\npmroot x: C\n"
        "func main() {\n  store x.v, 7\n  ret\n}\n");
    OracleResult r = check_robustness(p);
    CHECK(r.robust);  // a single store cannot be reordered with anything
    CHECK(!r.durable);
  }
  SUBCASE("write-back plus fence makes the store durable") {
    Program p = parse(
        "struct C { v: int @0 } size 8\npmroot x: C\n"
        "func main() {\n  store x.v, 7\n  flushopt x.v\n  fence\n  ret\n}\n");
    OracleResult r = check_robustness(p);
    CHECK(r.robust);
    CHECK(r.durable);
  }
}

TEST_CASE("message passing: dependent store can persist before its trigger") {
  Program p = load_file("tests/data/msg_pass.pmir");
  OracleResult r = check_robustness(p);
  CHECK(!r.racy);
  CHECK(!r.robust);
  REQUIRE(r.counterexample.has_value());
  const PmState& img = r.counterexample->image;
  CHECK(img.at("x.v") == 0);
  CHECK(img.at("y.v") == 1);
}

TEST_CASE("repair makes the golden programs robust and durable") {
  for (const char* path :
       {"tests/data/two_store.pmir", "tests/data/stack_push.pmir",
        "tests/data/overwrite_pair.pmir"}) {
    CAPTURE(path);
    Program p = load_file(path);
    TransformResult t = transform_program(p, {"pmalloc"}, Mode::Opt);
    OracleResult r = check_robustness(t.program);
    CHECK(r.robust);
    CHECK(r.durable);
  }
  Program mp = load_file("tests/data/msg_pass.pmir");
  for (Mode mode : {Mode::Opt, Mode::Flit}) {
    TransformResult t = transform_program(mp, {"pmalloc"}, mode);
    OracleResult r = check_robustness(t.program);
    CHECK(r.robust);
  }
}

TEST_CASE("the step bound truncates exploration instead of diverging") {
  Program p = load_file("tests/data/two_store.pmir");
  OracleOptions opts;
  opts.step_bound = 1;
  OracleResult r = check_robustness(p, opts);
  CHECK(r.truncated);
}
