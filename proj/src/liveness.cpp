#include "divlab/liveness.hpp"

#include "divlab/cfg.hpp"

namespace divlab {

Liveness ComputeLiveness(const Function& f) {
  const Cfg g = BuildCfg(f);
  const int n = static_cast<int>(f.blocks.size());
  const RegMask sp = RegBit(Register::Sp());
  Liveness result;
  result.live.resize(n);
  for (int b = 0; b < n; ++b) result.live[b].assign(f.blocks[b].instructions.size() + 1, sp);

  std::vector<std::vector<int>> succ(n);
  for (const auto& e : g.edges) succ[e.from].push_back(e.to);

  bool changed = true;
  while (changed) {
    changed = false;
    for (int b = n - 1; b >= 0; --b) {
      auto& live = result.live[b];
      RegMask out = sp;
      for (int s : succ[b]) out |= result.live[s].front();
      live.back() = out;
      const auto& insns = f.blocks[b].instructions;
      for (int i = static_cast<int>(insns.size()) - 1; i >= 0; --i) {
        const Effects e = EffectsOf(insns[i]);
        RegMask in = static_cast<RegMask>(((live[i + 1] & ~e.defs) | e.uses) | sp);
        if (in != live[i]) {
          live[i] = in;
          changed = true;
        }
      }
    }
  }
  return result;
}

std::string FormatRegMask(RegMask m) {
  std::string out = "{";
  bool first = true;
  for (int r = 0; r < Register::kCount; ++r) {
    if (m & (1u << r)) {
      if (!first) out += ", ";
      out += Register::R(r).ToString();
      first = false;
    }
  }
  if (m & kFlagsBit) {
    if (!first) out += ", ";
    out += "flags";
  }
  return out + "}";
}

}  // namespace divlab
