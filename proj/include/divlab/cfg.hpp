#ifndef DIVLAB_CFG_HPP
#define DIVLAB_CFG_HPP

#include <map>
#include <string>
#include <vector>

#include "divlab/isa.hpp"

namespace divlab {

enum class EdgeKind : std::uint8_t { kFallthrough, kJump, kBranchTaken };

std::string_view ToString(EdgeKind k);

struct CfgEdge {
  int from = 0;
  int to = 0;
  EdgeKind kind = EdgeKind::kFallthrough;

  friend bool operator==(const CfgEdge&, const CfgEdge&) = default;
};

// Intraprocedural CFG; node i is block i of the function.
struct Cfg {
  std::vector<std::string> nodes;
  std::vector<CfgEdge> edges;
  std::vector<std::map<Mnemonic, int>> histograms;

  std::vector<int> successors(int node) const;
  std::vector<int> predecessors(int node) const;
};

Cfg BuildCfg(const Function& f);

}  // namespace divlab

#endif  // DIVLAB_CFG_HPP
