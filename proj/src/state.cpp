#include "pmfence/state.hpp"

namespace pmfence {

AnalysisState meet(const AnalysisState& a, const AnalysisState& b) {
  AnalysisState r;
  for (const auto& [k, v] : a.emap) r.emap[k] = meet(v, b.escape_of(k));
  for (const auto& [k, v] : b.emap)
    if (!r.emap.count(k)) r.emap[k] = meet(v, a.escape_of(k));

  r.aliases = a.aliases;
  for (const auto& [k, s] : b.aliases) r.aliases[k].insert(s.begin(), s.end());
  for (auto& [k, s] : r.aliases) s.insert(k);

  for (const auto& [k, v] : a.pmap) r.pmap[k] = meet(v, b.persist_of(k));
  for (const auto& [k, v] : b.pmap)
    if (!r.pmap.count(k)) r.pmap[k] = meet(v, a.persist_of(k));

  auto apersist = [](const AnalysisState& s, const std::pair<std::string, std::string>& k) {
    auto it = s.apmap.find(k);
    return it == s.apmap.end() ? PersistEntry{} : it->second;
  };
  for (const auto& [k, v] : a.apmap) r.apmap[k] = meet(v, apersist(b, k));
  for (const auto& [k, v] : b.apmap)
    if (!r.apmap.count(k)) r.apmap[k] = meet(v, apersist(a, k));

  r.dirty_escape_event = a.dirty_escape_event || b.dirty_escape_event;
  r.event_refs = a.event_refs;
  r.event_refs.insert(b.event_refs.begin(), b.event_refs.end());
  r.normalize();
  return r;
}

bool geq(const AnalysisState& a, const AnalysisState& b) {
  for (const auto& [k, v] : a.emap)
    if (!geq(v, b.escape_of(k))) return false;
  for (const auto& [k, v] : b.emap)
    if (!geq(a.escape_of(k), v)) return false;
  for (const auto& [k, v] : a.pmap)
    if (!geq(v.state, b.persist_of(k).state)) return false;
  for (const auto& [k, v] : b.pmap)
    if (!geq(a.persist_of(k).state, v.state)) return false;
  auto apersist = [](const AnalysisState& s,
                     const std::pair<std::string, std::string>& k) {
    auto it = s.apmap.find(k);
    return it == s.apmap.end() ? PersistState::Clean : it->second.state;
  };
  for (const auto& [k, v] : a.apmap)
    if (!geq(v.state, apersist(b, k))) return false;
  for (const auto& [k, v] : b.apmap)
    if (!geq(apersist(a, k), v.state)) return false;
  // More aliasing is lower: require a's classes to be contained in b's...
  // note the direction: a ⊒ b means a is more optimistic (fewer aliases).
  for (const auto& [k, s] : a.aliases) {
    auto bs = b.alias_set(k);
    for (const auto& m : s)
      if (m != k && !bs.count(m)) return false;
  }
  return true;
}

}  // namespace pmfence
