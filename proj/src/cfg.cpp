#include "pmfence/cfg.hpp"

#include <algorithm>
#include <functional>

namespace pmfence {

CFG build_cfg(const Function& f) {
  CFG g;
  const int n = static_cast<int>(f.blocks.size());
  g.labels.resize(n);
  g.successors.resize(n);
  g.predecessors.resize(n);
  for (int i = 0; i < n; i++) g.labels[i] = f.blocks[i].label;

  for (int i = 0; i < n; i++) {
    const Instruction& term = f.blocks[i].insts.back();
    auto add_edge = [&](const std::string& label) {
      int t = g.node_of(label);
      g.successors[i].push_back(t);
      g.predecessors[t].push_back(i);
    };
    if (term.op == Opcode::Br) {
      add_edge(term.label1);
    } else if (term.op == Opcode::BrCond) {
      add_edge(term.label1);
      add_edge(term.label2);
    }
  }

  // Deterministic RPO via iterative DFS following successor order.
  std::vector<int> state(n, 0);  // 0 unvisited, 1 on stack, 2 done
  std::vector<int> postorder;
  std::function<void(int)> dfs = [&](int u) {
    state[u] = 1;
    for (int v : g.successors[u])
      if (state[v] == 0) dfs(v);
    state[u] = 2;
    postorder.push_back(u);
  };
  auto flush_component = [&]() {
    g.rpo_order.insert(g.rpo_order.end(), postorder.rbegin(), postorder.rend());
    postorder.clear();
  };
  if (n > 0) {
    dfs(0);
    flush_component();
  }
  for (int i = 0; i < n; i++)
    if (state[i] == 0) {
      g.unreachable.push_back(i);
      dfs(i);
      flush_component();
    }
  g.rpo_index.resize(n);
  for (int i = 0; i < n; i++) g.rpo_index[g.rpo_order[i]] = i;
  return g;
}

}  // namespace pmfence
