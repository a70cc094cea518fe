#ifndef PMFENCE_ANALYSIS_HPP
#define PMFENCE_ANALYSIS_HPP

#include <map>
#include <string>
#include <vector>

#include "pmfence/cfg.hpp"
#include "pmfence/classify.hpp"
#include "pmfence/ir.hpp"
#include "pmfence/state.hpp"
#include "pmfence/summary.hpp"

namespace pmfence {

enum class Mode { Base, Opt, Flit };

enum class ViolationKind {
  ExitUnflushed,
  DoubleDirtyEscaped,
  ReleaseWhileDirty,
  CallsiteDirtyEscape,
  ArrayUnflushed,
  IndexLost,
  PointerArithmetic,  // warning-grade
  Durability,
};

const char* to_string(ViolationKind k);

// One location involved in a violation, with enough provenance for the
// transformer to place flushes.
struct InvolvedLocation {
  AbstractLocation loc;
  PersistState state = PersistState::Clean;
  std::set<Site> dirty_sites;
  bool load_induced = false;
  bool is_array = false;
  std::string index_var;  // array locations: loc.ref[index_var]
};

struct Violation {
  ViolationKind kind = ViolationKind::ExitUnflushed;
  Site site;
  std::vector<InvolvedLocation> locations;
  CallingContext context;
  bool load_induced = false;

  bool is_warning() const { return kind == ViolationKind::PointerArithmetic; }
};

// Transfer functions of the escape / persistency state machines, exposed
// for unit and property tests.  `site` tags dirty provenance.
class TransferContext {
 public:
  TransferContext(const Program& p, const PmClassification& cls,
                  const Function& f, Mode mode);

  // Applies the escape, persistency and array transfers of `inst` to
  // `state` in place.  Call instructions are not handled here.
  void apply(const Instruction& inst, const Site& site, AnalysisState& state) const;

  bool is_pm_ref(const std::string& ref) const;
  bool ptr_arith_derived(const std::string& ref) const;
  const std::string& struct_of(const std::string& ref) const;
  std::vector<int> field_offsets(const std::string& struct_name) const;
  int offset_of(const Instruction& inst) const;

  const Function& function() const { return func_; }
  Mode mode() const { return mode_; }

  // Escaped & non-clean units keyed by (alias-class representative,
  // offset); arrays are conservatively escaped.
  struct Unit {
    std::string rep;
    int offset = 0;
    bool is_array = false;
    std::string index_var;
    InvolvedLocation involved;

    auto key() const { return std::tie(rep, offset, is_array, index_var); }
  };
  std::vector<Unit> escaped_nonclean_units(const AnalysisState& s) const;

  // Alias-class representative (lexicographic minimum of the class).
  std::string class_rep(const AnalysisState& s, const std::string& ref) const;

 private:
  const Program& prog_;
  const PmClassification& cls_;
  const Function& func_;
  Mode mode_;
  std::map<std::string, Type> var_types_;
  std::set<std::string> ptr_arith_;

  void record_events(AnalysisState& s) const;
  void redefine(const std::string& ref, const Site& site, AnalysisState& s) const;
  friend class FunctionAnalyzer;
};

struct FunctionAnalysis {
  // State immediately before each instruction, keyed by (block, index).
  std::map<std::pair<std::string, int>, AnalysisState> before;
  AnalysisState exit_state;  // meet over all return points
  std::vector<Violation> violations;
  SummarizedResult summary;
  int iterations = 0;
};

// Forward dataflow over one function under one calling context.  Callsites
// are resolved against `table`; dependency edges and worklist pushes are
// recorded through `pushes` when non-null.
FunctionAnalysis analyze_function(const Program& p, const PmClassification& cls,
                                  const Function& f, const CallingContext& ctx,
                                  SummaryTable& table, Mode mode,
                                  bool entry_function,
                                  std::vector<SummaryKey>* pushes = nullptr);

// Entry calling context: AbsRev of the per-parameter states (roots are
// escaped & clean).
CallingContext entry_context(const Function& f, const PmClassification& cls);

}  // namespace pmfence

#endif
