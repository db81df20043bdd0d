#include "divlab/cfg.hpp"

namespace divlab {

std::string_view ToString(EdgeKind k) {
  switch (k) {
    case EdgeKind::kFallthrough:
      return "fallthrough";
    case EdgeKind::kJump:
      return "jump";
    case EdgeKind::kBranchTaken:
      return "branch-taken";
  }
  return "?";
}

std::vector<int> Cfg::successors(int node) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.from == node) out.push_back(e.to);
  }
  return out;
}

std::vector<int> Cfg::predecessors(int node) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.to == node) out.push_back(e.from);
  }
  return out;
}

Cfg BuildCfg(const Function& f) {
  Cfg g;
  const int n = static_cast<int>(f.blocks.size());
  for (int i = 0; i < n; ++i) {
    const BasicBlock& b = f.blocks[i];
    g.nodes.push_back(b.label);
    auto& h = g.histograms.emplace_back();
    for (const auto& insn : b.instructions) ++h[insn.op];
    if (const Instruction* t = b.terminator(); t != nullptr && IsBranch(t->op)) {
      g.edges.push_back({i, f.block_index(t->label()),
                         t->op == Mnemonic::kJmp ? EdgeKind::kJump : EdgeKind::kBranchTaken});
    }
    if (b.falls_through() && i + 1 < n) g.edges.push_back({i, i + 1, EdgeKind::kFallthrough});
  }
  return g;
}

}  // namespace divlab
