#include "divlab/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <limits>
#include <sstream>

#include "divlab/cfg.hpp"

namespace divlab {

NgramHistogram MnemonicHistogram(const Program& p, int n) {
  if (n < 1) throw MetricError("n-gram length must be at least 1");
  NgramHistogram h;
  h.n = n;
  for (const auto& f : p.functions) {
    for (const auto& b : f.blocks) {
      const auto& insns = b.instructions;
      for (std::size_t i = 0; i + n <= insns.size(); ++i) {
        Gram g;
        g.reserve(n);
        for (int k = 0; k < n; ++k) g.push_back(insns[i + k].op);
        ++h.counts[g];
        ++h.total;
      }
    }
  }
  return h;
}

double Freq(const NgramHistogram& h, const Gram& key) {
  if (h.total == 0) throw MetricError("frequency of an empty histogram");
  auto it = h.counts.find(key);
  if (it == h.counts.end()) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(h.total);
}

namespace {

void CheckSameN(const NgramHistogram& a, const NgramHistogram& b) {
  if (a.n != b.n) throw MetricError("histograms have different n");
}

template <typename Map, typename F>
void ForUnion(const Map& a, const Map& b, F&& f) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      f(ia->second, 0);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      f(0, ib->second);
      ++ib;
    } else {
      f(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
}

template <typename Map>
double Weighted(const Map& a, const Map& b) {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
  ForUnion(a, b, [&](std::uint64_t x, std::uint64_t y) {
    lo += std::min(x, y);
    hi += std::max(x, y);
  });
  if (hi == 0) return 1.0;
  return static_cast<double>(lo) / static_cast<double>(hi);
}

}  // namespace

double SimilarityS(const NgramHistogram& a, const NgramHistogram& b) {
  CheckSameN(a, b);
  if (a.total == 0 || b.total == 0) throw MetricError("S of an empty histogram");
  const double ta = static_cast<double>(a.total);
  const double tb = static_cast<double>(b.total);
  double sum = 0.0;
  ForUnion(a.counts, b.counts, [&](std::uint64_t x, std::uint64_t y) {
    const double d = static_cast<double>(x) / ta - static_cast<double>(y) / tb;
    sum += d * d;
  });
  return std::clamp(1.0 - sum / 2.0, 0.0, 1.0);
}

double JaccardPairs(const NgramHistogram& a, const NgramHistogram& b) {
  CheckSameN(a, b);
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
  ForUnion(a.counts, b.counts, [&](std::uint64_t x, std::uint64_t y) {
    if (x == y) {
      ++inter;
      ++uni;
    } else {
      uni += (x != 0) + (y != 0);
    }
  });
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double JaccardWeighted(const NgramHistogram& a, const NgramHistogram& b) {
  CheckSameN(a, b);
  return Weighted(a.counts, b.counts);
}

CfgProfile BuildCfgProfile(const Program& p) {
  CfgProfile prof;
  for (const auto& f : p.functions) {
    const Cfg g = BuildCfg(f);
    const int n = static_cast<int>(g.nodes.size());
    std::vector<BlockFingerprint> fp(n);
    for (const auto& e : g.edges) {
      ++fp[e.from].out_degree;
      ++fp[e.to].in_degree;
    }
    for (int i = 0; i < n; ++i) {
      const auto size = f.blocks[i].instructions.size();
      fp[i].size_bucket = size == 0 ? 0 : static_cast<int>(std::bit_width(size));
      const Instruction* t = f.blocks[i].terminator();
      fp[i].terminator = t == nullptr ? -1 : static_cast<int>(t->op);
      ++prof.blocks[fp[i]];
    }
    for (const auto& e : g.edges) {
      ++prof.edges[{fp[e.from], fp[e.to], static_cast<int>(e.kind)}];
    }
  }
  return prof;
}

double CfgSimilarity(const CfgProfile& a, const CfgProfile& b) {
  return (Weighted(a.blocks, b.blocks) + Weighted(a.edges, b.edges)) / 2.0;
}

double CfgSimilarity(const Program& a, const Program& b) {
  return CfgSimilarity(BuildCfgProfile(a), BuildCfgProfile(b));
}

std::string_view ToString(Metric m) {
  switch (m) {
    case Metric::kS:
      return "s";
    case Metric::kJaccardPairs:
      return "jaccard";
    case Metric::kJaccardWeighted:
      return "jaccard-weighted";
    case Metric::kCfg:
      return "cfg";
  }
  return "?";
}

Metric MetricFromName(std::string_view name) {
  for (Metric m : {Metric::kS, Metric::kJaccardPairs, Metric::kJaccardWeighted, Metric::kCfg}) {
    if (ToString(m) == name) return m;
  }
  if (name == "jaccard-pairs") return Metric::kJaccardPairs;
  throw MetricError("unknown metric: " + std::string(name));
}

double SimilarityMatrix::WithinMean(const std::vector<int>& group) const {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t j = i + 1; j < group.size(); ++j) {
      sum += values[group[i]][group[j]];
      ++count;
    }
  }
  if (count == 0) return group.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : values[group[0]][group[0]];
  return sum / count;
}

double SimilarityMatrix::WithinMin(const std::vector<int>& group) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t j = i + 1; j < group.size(); ++j) best = std::min(best, values[group[i]][group[j]]);
  }
  if (group.size() < 2) {
    return group.empty() ? std::numeric_limits<double>::quiet_NaN() : values[group[0]][group[0]];
  }
  return best;
}

double SimilarityMatrix::CrossMean(const std::vector<int>& a, const std::vector<int>& b) const {
  double sum = 0.0;
  for (int i : a) {
    for (int j : b) sum += values[i][j];
  }
  if (a.empty() || b.empty()) return std::numeric_limits<double>::quiet_NaN();
  return sum / static_cast<double>(a.size() * b.size());
}

SimilarityMatrix PairwiseMatrix(const std::vector<Program>& population,
                                const std::vector<std::string>& labels, Metric metric, int n) {
  if (population.empty()) throw MetricError("empty population");
  if (labels.size() != population.size()) throw MetricError("label count mismatch");
  SimilarityMatrix m;
  m.metric = metric;
  m.n = n;
  m.labels = labels;
  const std::size_t size = population.size();
  m.values.assign(size, std::vector<double>(size, 0.0));

  std::vector<NgramHistogram> hist;
  std::vector<CfgProfile> prof;
  for (const auto& p : population) {
    if (metric == Metric::kCfg) {
      prof.push_back(BuildCfgProfile(p));
    } else {
      hist.push_back(MnemonicHistogram(p, n));
    }
  }
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = i; j < size; ++j) {
      double v = 0.0;
      switch (metric) {
        case Metric::kS:
          if (hist[i].total == 0 || hist[j].total == 0) {
            v = hist[i].total == hist[j].total ? 1.0 : 0.0;
            m.warnings.push_back("empty histogram in pair (" + labels[i] + ", " + labels[j] + ")");
          } else {
            v = SimilarityS(hist[i], hist[j]);
          }
          break;
        case Metric::kJaccardPairs:
          v = JaccardPairs(hist[i], hist[j]);
          break;
        case Metric::kJaccardWeighted:
          v = JaccardWeighted(hist[i], hist[j]);
          break;
        case Metric::kCfg:
          v = CfgSimilarity(prof[i], prof[j]);
          break;
      }
      m.values[i][j] = m.values[j][i] = v;
    }
  }
  return m;
}

std::string MatrixToCsv(const SimilarityMatrix& m) {
  std::ostringstream os;
  os << "member";
  for (const auto& l : m.labels) os << ',' << l;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    os << m.labels[i];
    for (std::size_t j = 0; j < m.labels.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.4f", m.values[i][j]);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string GramToString(const Gram& g) {
  std::string out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) out += ' ';
    out += Name(g[i]);
  }
  return out;
}

}  // namespace divlab
