#ifndef PMFENCE_SUMMARY_HPP
#define PMFENCE_SUMMARY_HPP

#include <compare>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pmfence/lattice.hpp"

namespace pmfence {

struct ParamState {
  EscapeState esc = EscapeState::Captured;
  PersistState persist = PersistState::Clean;
  // Per-field refinement of `persist` (absent offset = Clean).  Populated
  // in summaries only; calling contexts keep it empty and compare on the
  // scalar states alone.
  std::map<int, PersistState> by_offset;

  bool operator==(const ParamState&) const = default;
  auto operator<=>(const ParamState&) const = default;
};

inline ParamState meet(const ParamState& a, const ParamState& b) {
  ParamState r{meet(a.esc, b.esc), meet(a.persist, b.persist), a.by_offset};
  for (const auto& [off, st] : b.by_offset) {
    auto it = r.by_offset.find(off);
    if (it == r.by_offset.end())
      r.by_offset[off] = st;
    else
      it->second = meet(it->second, st);
  }
  return r;
}
// Field-level view of a summary state.  A populated map is authoritative
// (absent offset = Clean); an empty map falls back to the scalar so that
// coarse states stay conservative.
inline PersistState summary_persist_at(const ParamState& ps, int off) {
  auto it = ps.by_offset.find(off);
  if (it != ps.by_offset.end()) return it->second;
  return ps.by_offset.empty() ? ps.persist : PersistState::Clean;
}

inline bool geq(const ParamState& a, const ParamState& b) {
  return geq(a.esc, b.esc) && geq(a.persist, b.persist);
}

// Per-parameter abstract states keying a function summary.
using CallingContext = std::vector<ParamState>;

inline bool context_geq(const CallingContext& a, const CallingContext& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); i++)
    if (!geq(a[i], b[i])) return false;
  return true;
}

// Summarized effect of one (function, context) pair: abstract states for
// each parameter plus the return value (index n), parameter/return
// aliasing, and two bits feeding the interprocedural checks.
struct SummarizedResult {
  std::vector<ParamState> states;          // arity n + 1
  std::set<std::pair<int, int>> aliasing;  // position pairs, n = return
  bool mark_obj_dir_esp = false;
  bool performs_release = false;

  bool operator==(const SummarizedResult&) const = default;
};

inline SummarizedResult meet(const SummarizedResult& a, const SummarizedResult& b) {
  SummarizedResult r;
  r.states.resize(a.states.size());
  for (size_t i = 0; i < a.states.size(); i++)
    r.states[i] = meet(a.states[i], b.states[i]);
  r.aliasing = a.aliasing;
  r.aliasing.insert(b.aliasing.begin(), b.aliasing.end());
  r.mark_obj_dir_esp = a.mark_obj_dir_esp || b.mark_obj_dir_esp;
  r.performs_release = a.performs_release || b.performs_release;
  return r;
}

inline SummarizedResult optimistic_result(size_t arity) {
  SummarizedResult r;
  r.states.assign(arity + 1, ParamState{});
  return r;
}

struct SummaryKey {
  std::string function;
  CallingContext context;

  auto operator<=>(const SummaryKey&) const = default;
};

struct SummaryTable {
  std::map<SummaryKey, SummarizedResult> entries;
  // Reverse call-graph edges: callee pair -> caller pairs to re-push when
  // the callee's summary changes.
  std::map<SummaryKey, std::set<SummaryKey>> dependents;
};

struct ResolveOutcome {
  SummarizedResult result;
  bool needs_push = false;  // (F, C) must be (re)analyzed
};

// The three-case callsite rule: exact entry, meet of higher contexts, or
// the optimistic all-(captured, clean) bootstrap.
ResolveOutcome resolve_callsite(const SummaryTable& table,
                                const std::string& function, size_t arity,
                                const CallingContext& context);

}  // namespace pmfence

#endif
