#ifndef PMFENCE_INTERPROC_HPP
#define PMFENCE_INTERPROC_HPP

#include <map>
#include <vector>

#include "pmfence/analysis.hpp"

namespace pmfence {

struct AnalysisResults {
  SummaryTable table;
  // Last analysis of each (function, context) pair.
  std::map<SummaryKey, FunctionAnalysis> analyses;
  // Deduplicated, in (site, kind) order.
  std::vector<Violation> violations;
  size_t contexts_analyzed = 0;
  size_t iterations = 0;  // worklist pops

  bool has_errors() const {
    for (const auto& v : violations)
      if (!v.is_warning()) return true;
    return false;
  }
};

// Entry (function, context) pairs: harness threads with their root
// arguments escaped & clean, or `main` when no harness is present.
std::vector<SummaryKey> entry_points(const Program& p, const PmClassification& cls);

AnalysisResults run_interprocedural(const Program& p, const PmClassification& cls,
                                    Mode mode);

}  // namespace pmfence

#endif
