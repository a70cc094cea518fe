#include "pmfence/interproc.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <stdexcept>

namespace pmfence {

std::vector<SummaryKey> entry_points(const Program& p,
                                     const PmClassification& cls) {
  std::vector<SummaryKey> entries;
  if (p.harness) {
    for (const auto& t : p.harness->threads) {
      const Function* f = p.find_function(t.function);
      if (!f) continue;
      CallingContext ctx;
      for (size_t i = 0; i < f->params.size(); i++) {
        ParamState ps;
        if (i < t.args.size() && !t.args[i].is_const &&
            p.find_root(t.args[i].ref))
          ps = {EscapeState::Escaped, PersistState::Clean, {}};
        ctx.push_back(ps);
      }
      entries.push_back({f->name, ctx});
    }
  } else if (const Function* f = p.find_function("main")) {
    entries.push_back({f->name, entry_context(*f, cls)});
  }
  return entries;
}

namespace {

// Dedup key: kind, site and the involved locations (by identity, not
// provenance).
std::tuple<int, Site, std::vector<std::tuple<std::string, int, bool, std::string>>>
violation_key(const Violation& v) {
  std::vector<std::tuple<std::string, int, bool, std::string>> locs;
  for (const auto& l : v.locations)
    locs.emplace_back(l.loc.ref, l.loc.offset, l.is_array, l.index_var);
  std::sort(locs.begin(), locs.end());
  return {static_cast<int>(v.kind), v.site, std::move(locs)};
}

}  // namespace

AnalysisResults run_interprocedural(const Program& p,
                                    const PmClassification& cls, Mode mode) {
  AnalysisResults res;
  std::vector<SummaryKey> entries = entry_points(p, cls);
  std::set<SummaryKey> entry_set(entries.begin(), entries.end());

  std::deque<SummaryKey> work;
  std::set<SummaryKey> queued;
  auto enqueue = [&](const SummaryKey& k) {
    if (queued.insert(k).second) work.push_back(k);
  };
  for (const auto& f : p.functions)
    enqueue({f.name, CallingContext(f.params.size(), ParamState{})});
  for (const auto& e : entries) enqueue(e);

  size_t max_pops = p.functions.size() * 2048 + 64;
  while (!work.empty()) {
    SummaryKey key = work.front();
    work.pop_front();
    queued.erase(key);
    if (++res.iterations > max_pops)
      throw std::runtime_error("interprocedural worklist budget exceeded");

    const Function* f = p.find_function(key.function);
    if (!f || key.context.size() != f->params.size()) continue;

    std::vector<SummaryKey> pushes;
    FunctionAnalysis fa =
        analyze_function(p, cls, *f, key.context, res.table, mode,
                         entry_set.count(key) > 0, &pushes);

    auto it = res.table.entries.find(key);
    bool changed;
    if (it == res.table.entries.end()) {
      res.table.entries[key] = fa.summary;
      changed = true;
    } else {
      SummarizedResult merged = meet(it->second, fa.summary);
      changed = !(merged == it->second);
      it->second = merged;
    }
    res.analyses[key] = std::move(fa);

    for (const auto& pk : pushes)
      if (!res.table.entries.count(pk)) enqueue(pk);
    if (changed)
      for (const auto& dep : res.table.dependents[key]) enqueue(dep);
  }

  res.contexts_analyzed = res.analyses.size();

  // Report only pairs reachable from the entry points; the optimistic seed
  // pairs exist to bootstrap summaries, not to describe real executions.
  std::map<SummaryKey, std::set<SummaryKey>> callees;
  for (const auto& [callee, callers] : res.table.dependents)
    for (const auto& caller : callers) callees[caller].insert(callee);
  std::set<SummaryKey> reachable(entry_set);
  std::deque<SummaryKey> bfs(entries.begin(), entries.end());
  while (!bfs.empty()) {
    SummaryKey k = bfs.front();
    bfs.pop_front();
    for (const auto& c : callees[k])
      if (reachable.insert(c).second) bfs.push_back(c);
  }

  std::set<decltype(violation_key(Violation{}))> seen;
  for (const auto& [key, fa] : res.analyses) {
    if (!entries.empty() && !reachable.count(key)) continue;
    for (const auto& v : fa.violations)
      if (seen.insert(violation_key(v)).second) res.violations.push_back(v);
  }
  std::sort(res.violations.begin(), res.violations.end(),
            [](const Violation& a, const Violation& b) {
              if (a.site != b.site) return a.site < b.site;
              return static_cast<int>(a.kind) < static_cast<int>(b.kind);
            });
  return res;
}

}  // namespace pmfence
