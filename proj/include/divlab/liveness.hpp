#ifndef DIVLAB_LIVENESS_HPP
#define DIVLAB_LIVENESS_HPP

#include <string>
#include <vector>

#include "divlab/isa.hpp"

namespace divlab {

// live[b][i] is the set live immediately before instruction i of block b;
// live[b][size] is the block's live-out. sp is always included.
struct Liveness {
  std::vector<std::vector<RegMask>> live;

  RegMask before(int block, int index) const { return live[block][index]; }
  RegMask live_in(int block) const { return live[block].front(); }
  RegMask live_out(int block) const { return live[block].back(); }
};

Liveness ComputeLiveness(const Function& f);

// Human-readable register set, e.g. "{r0, r3, sp}".
std::string FormatRegMask(RegMask m);

}  // namespace divlab

#endif  // DIVLAB_LIVENESS_HPP
