#include "pmfence/summary.hpp"

namespace pmfence {

ResolveOutcome resolve_callsite(const SummaryTable& table,
                                const std::string& function, size_t arity,
                                const CallingContext& context) {
  ResolveOutcome out;
  auto exact = table.entries.find({function, context});
  if (exact != table.entries.end()) {
    out.result = exact->second;  // Case 1
    return out;
  }
  bool merged = false;
  SummarizedResult acc;
  for (const auto& [key, res] : table.entries) {
    if (key.function != function) continue;
    if (!context_geq(key.context, context)) continue;
    acc = merged ? meet(acc, res) : res;
    merged = true;
  }
  out.needs_push = true;
  out.result = merged ? acc : optimistic_result(arity);  // Case 2 / Case 3
  return out;
}

}  // namespace pmfence
