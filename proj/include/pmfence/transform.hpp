#ifndef PMFENCE_TRANSFORM_HPP
#define PMFENCE_TRANSFORM_HPP

#include <set>
#include <string>

#include "pmfence/classify.hpp"
#include "pmfence/interproc.hpp"
#include "pmfence/ir.hpp"

namespace pmfence {

struct TransformStats {
  int flushopts = 0;
  int flushes = 0;
  int fences = 0;
  int flushranges = 0;
  int counter_ops = 0;   // cntinc / cntdec
  int helpflushes = 0;
  int lowered_memcpys = 0;
  int repair_rounds = 0;

  int total_instrumentation() const {
    return flushopts + flushes + fences + flushranges + counter_ops +
           helpflushes;
  }
};

struct TransformResult {
  Program program;
  TransformStats stats;
};

// Base: flush + fence after every PM store and PM atomic load.
// Opt: repair loop driven by the analysis; flushes at the dirty sites of
//      each violation, a fence right before the violating instruction.
// Flit: counter-bracketed atomic stores and help-flushed atomic loads,
//       then the Opt repair loop with atomic loads exempt.
// Idempotent in all modes: instrumentation already present is not repeated.
TransformResult transform_program(const Program& p,
                                  const std::set<std::string>& allocators,
                                  Mode mode);

}  // namespace pmfence

#endif
