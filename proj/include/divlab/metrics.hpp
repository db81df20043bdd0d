#ifndef DIVLAB_METRICS_HPP
#define DIVLAB_METRICS_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "divlab/isa.hpp"

namespace divlab {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Gram = std::vector<Mnemonic>;

struct NgramHistogram {
  int n = 1;
  std::map<Gram, std::uint64_t> counts;
  std::uint64_t total = 0;

  friend bool operator==(const NgramHistogram&, const NgramHistogram&) = default;
};

// Counts runs of n mnemonics inside each basic block.
NgramHistogram MnemonicHistogram(const Program& p, int n);

// counts[key] / total; throws MetricError when total is 0.
double Freq(const NgramHistogram& h, const Gram& key);

// 1 - sum over the union of keys of |freq_a - freq_b|^2 / 2.
double SimilarityS(const NgramHistogram& a, const NgramHistogram& b);
// |A ∩ B| / |A ∪ B| over (key, count) pairs.
double JaccardPairs(const NgramHistogram& a, const NgramHistogram& b);
// sum min(count) / sum max(count).
double JaccardWeighted(const NgramHistogram& a, const NgramHistogram& b);

// Block fingerprint: in-degree, out-degree, log2 bucket of the instruction
// count, terminator kind.
struct BlockFingerprint {
  int in_degree = 0;
  int out_degree = 0;
  int size_bucket = 0;
  int terminator = 0;  // opcode byte of the terminator, -1 for fallthrough

  friend auto operator<=>(const BlockFingerprint&, const BlockFingerprint&) = default;
};

struct CfgProfile {
  std::map<BlockFingerprint, std::uint64_t> blocks;
  // (from fingerprint, to fingerprint, edge kind) multiset.
  std::map<std::tuple<BlockFingerprint, BlockFingerprint, int>, std::uint64_t> edges;
};

CfgProfile BuildCfgProfile(const Program& p);
// Mean of the weighted Jaccard over block fingerprints and over edges.
double CfgSimilarity(const CfgProfile& a, const CfgProfile& b);
double CfgSimilarity(const Program& a, const Program& b);

enum class Metric : std::uint8_t { kS, kJaccardPairs, kJaccardWeighted, kCfg };

std::string_view ToString(Metric m);
Metric MetricFromName(std::string_view name);

struct SimilarityMatrix {
  Metric metric = Metric::kS;
  int n = 1;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;
  std::vector<std::string> warnings;

  // Mean over all unordered pairs of distinct members in `group`.
  double WithinMean(const std::vector<int>& group) const;
  double WithinMin(const std::vector<int>& group) const;
  // Mean over all pairs (i in a, j in b).
  double CrossMean(const std::vector<int>& a, const std::vector<int>& b) const;
};

SimilarityMatrix PairwiseMatrix(const std::vector<Program>& population,
                                const std::vector<std::string>& labels, Metric metric, int n = 1);

// Header row of labels, then one row per member; values with 4 decimals.
std::string MatrixToCsv(const SimilarityMatrix& m);

std::string GramToString(const Gram& g);

}  // namespace divlab

#endif  // DIVLAB_METRICS_HPP
