#ifndef PMFENCE_STATE_HPP
#define PMFENCE_STATE_HPP

#include <map>
#include <set>
#include <string>

#include "pmfence/ir.hpp"
#include "pmfence/lattice.hpp"

namespace pmfence {

// One PM memory location: a reference plus a non-negative byte offset.
struct AbstractLocation {
  std::string ref;
  int offset = 0;

  bool operator==(const AbstractLocation&) const = default;
  auto operator<=>(const AbstractLocation&) const = default;
};

// Persistency state for one location, with the sites that last made it
// dirty (used by the transformer to place flushes) and whether the
// non-clean state is solely due to atomic loads.
struct PersistEntry {
  PersistState state = PersistState::Clean;
  std::set<Site> dirty_sites;
  bool load_induced = false;

  bool operator==(const PersistEntry& o) const { return state == o.state; }
};

inline PersistEntry meet(const PersistEntry& a, const PersistEntry& b) {
  PersistEntry r;
  r.state = meet(a.state, b.state);
  r.dirty_sites = a.dirty_sites;
  r.dirty_sites.insert(b.dirty_sites.begin(), b.dirty_sites.end());
  bool a_nc = a.state != PersistState::Clean;
  bool b_nc = b.state != PersistState::Clean;
  if (a_nc && b_nc)
    r.load_induced = a.load_induced && b.load_induced;
  else if (a_nc)
    r.load_induced = a.load_induced;
  else
    r.load_induced = b.load_induced;
  return r;
}

// Per-program-point analysis state.  Missing emap entries denote Captured
// (roots are seeded Escaped at entry); missing pmap entries denote Clean.
struct AnalysisState {
  std::map<std::string, EscapeState> emap;
  std::map<std::string, std::set<std::string>> aliases;
  std::map<AbstractLocation, PersistEntry> pmap;
  // Array persistency: (array reference, index variable) -> state.
  std::map<std::pair<std::string, std::string>, PersistEntry> apmap;
  bool dirty_escape_event = false;
  std::set<std::string> event_refs;  // refs escaped & non-clean at some point

  EscapeState escape_of(const std::string& ref) const {
    auto it = emap.find(ref);
    return it == emap.end() ? EscapeState::Captured : it->second;
  }
  void set_escape(const std::string& ref, EscapeState e) { emap[ref] = e; }

  std::set<std::string> alias_set(const std::string& ref) const {
    auto it = aliases.find(ref);
    if (it != aliases.end()) return it->second;
    return {ref};
  }

  PersistEntry persist_of(const AbstractLocation& loc) const {
    auto it = pmap.find(loc);
    return it == pmap.end() ? PersistEntry{} : it->second;
  }

  // Drops entries equal to their map's default so fixpoint equality is
  // well-defined.
  void normalize() {
    for (auto it = emap.begin(); it != emap.end();)
      it = it->second == EscapeState::Captured ? emap.erase(it) : std::next(it);
    for (auto it = pmap.begin(); it != pmap.end();)
      it = it->second.state == PersistState::Clean ? pmap.erase(it) : std::next(it);
    for (auto it = apmap.begin(); it != apmap.end();)
      it = it->second.state == PersistState::Clean ? apmap.erase(it) : std::next(it);
    for (auto it = aliases.begin(); it != aliases.end();) {
      if (it->second.size() == 1 && *it->second.begin() == it->first)
        it = aliases.erase(it);
      else
        ++it;
    }
  }

  bool same_dataflow(const AnalysisState& o) const {
    return emap == o.emap && pmap == o.pmap && apmap == o.apmap &&
           aliases == o.aliases;
  }
};

// Pointwise meet; missing keys are treated as the map's top default.
AnalysisState meet(const AnalysisState& a, const AnalysisState& b);

// Pointwise ordering on emap/pmap/apmap (a ⊒ b); alias maps are compared
// by inclusion (more aliasing is lower).
bool geq(const AnalysisState& a, const AnalysisState& b);

}  // namespace pmfence

#endif
