#ifndef PMFENCE_CFG_HPP
#define PMFENCE_CFG_HPP

#include <map>
#include <string>
#include <vector>

#include "pmfence/ir.hpp"

namespace pmfence {

// Control-flow graph over a validated function.  Nodes are block indices in
// declaration order; a deterministic reverse-postorder numbering is attached.
struct CFG {
  std::vector<std::string> labels;                // node -> label
  std::vector<std::vector<int>> successors;       // node -> succ nodes
  std::vector<std::vector<int>> predecessors;     // node -> pred nodes
  std::vector<int> rpo_index;                     // node -> RPO position
  std::vector<int> rpo_order;                     // RPO position -> node
  std::vector<int> unreachable;                   // nodes unreachable from entry

  int node_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); i++)
      if (labels[i] == label) return static_cast<int>(i);
    return -1;
  }
  size_t edge_count() const {
    size_t n = 0;
    for (const auto& s : successors) n += s.size();
    return n;
  }
};

CFG build_cfg(const Function& f);

}  // namespace pmfence

#endif
