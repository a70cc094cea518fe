#ifndef PMFENCE_ORACLE_HPP
#define PMFENCE_ORACLE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pmfence/ir.hpp"

namespace pmfence {

// Bounded-exhaustive crash-consistency oracle.  Enumerates sequentially
// consistent interleavings of the harness threads; at every step boundary
// it enumerates the memory images a crash could leave behind given the
// flush / fence obligations issued so far, and asks whether each image is
// a state some fully-ordered execution passes through.  Comparison is
// restricted to memory reachable from the roots.

struct OracleOptions {
  int step_bound = 0;                 // 0: harness bound (default 1000)
  std::size_t max_traces = 200000;
  std::size_t max_images_per_point = 8192;
  bool want_counterexample = true;
};

// Reachable persistent state, keyed by object labels ("root.field",
// "t0#1.field", "t0#1.arr[3]").
using PmState = std::map<std::string, std::int64_t>;

struct Counterexample {
  PmState image;                    // reachable contents after the crash
  std::vector<std::string> trace;   // executed steps up to the crash point
};

struct OracleResult {
  bool racy = false;      // a data race was found; no verdict beyond that
  bool robust = true;
  bool durable = true;    // final contents guaranteed persisted at exit
  bool truncated = false; // some interleaving hit the step bound
  std::size_t traces = 0;
  std::size_t strict_states = 0;
  std::size_t images_checked = 0;
  std::optional<Counterexample> counterexample;
};

OracleResult check_robustness(const Program& p, const OracleOptions& opts = {});

}  // namespace pmfence

#endif
