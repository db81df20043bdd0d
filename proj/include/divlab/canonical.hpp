#ifndef DIVLAB_CANONICAL_HPP
#define DIVLAB_CANONICAL_HPP

#include <map>
#include <string>
#include <vector>

#include "divlab/isa.hpp"

namespace divlab {

Program StripNops(const Program& p);

// lea rd, rs, 0 -> mov rd, rs; xor rd, rd -> movi rd, 0; subi rd, m with
// m <= 0 -> addi rd, -m; addi rd, k with k < 0 -> subi rd, -k. Forms with
// INT_MIN immediates are left alone.
Program NormalizeSubstitutions(const Program& p);

// Per function, instructions with registers replaced by first-use ordinals
// (ρ0, ρ1, ...) and labels by block or function indices.
std::vector<std::vector<std::string>> CanonicalRegisterAbstraction(const Program& p);

// Threads jump-only blocks, merges single-predecessor goto successors, then
// lays blocks out breadth-first from the entry (taken successor before
// fallthrough). Unreachable blocks follow, ordered by their histogram and
// exit kind. Labels become b0, b1, ...
Program CanonicalBlockOrder(const Program& p);

struct BlockSummary {
  // Register-erased instruction text -> count.
  std::map<std::string, int> histogram;
  std::string exit;  // goto, ret, halt, or the conditional mnemonic
  std::vector<int> successors;

  friend bool operator==(const BlockSummary&, const BlockSummary&) = default;
};

struct CanonicalForm {
  std::vector<std::vector<BlockSummary>> functions;
  std::string text;
  std::string digest;  // SHA-256 of `text`
};

// strip_nops -> normalize_substitutions -> canonical_block_order -> block
// summaries -> digest. Data is not part of the form.
CanonicalForm Canonicalize(const Program& p);

// Equal digests. A likelihood signal only: distinct programs can collide.
bool CanonicalMatch(const Program& a, const Program& b);

}  // namespace divlab

#endif  // DIVLAB_CANONICAL_HPP
