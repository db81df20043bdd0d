#include "divlab/signature.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "divlab/rng.hpp"
#include "divlab/suffix_array.hpp"

namespace divlab {

namespace {

using DocMask = std::uint64_t;

struct Frame {
  int lcp;
  int lb;
  std::vector<DocMask> child_masks;
};

}  // namespace

std::vector<SharedSubstring> SharedSubstrings(const std::vector<std::vector<std::uint8_t>>& docs,
                                              std::size_t min_len, int quorum) {
  const int m = static_cast<int>(docs.size());
  if (m == 0) throw SignatureError("empty population");
  if (m > 64) throw SignatureError("at most 64 members supported");
  if (min_len < 1) throw SignatureError("min_len must be at least 1");
  if (quorum < 2) throw SignatureError("quorum must be at least 2");
  if (quorum > m) throw SignatureError("quorum exceeds population size");

  std::vector<int> text;
  std::vector<int> doc_of;
  std::vector<std::uint32_t> offset_of;
  for (int d = 0; d < m; ++d) {
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      text.push_back(docs[d][i]);
      doc_of.push_back(d);
      offset_of.push_back(static_cast<std::uint32_t>(i));
    }
    text.push_back(256 + d);
    doc_of.push_back(d);
    offset_of.push_back(static_cast<std::uint32_t>(docs[d].size()));
  }
  const int n = static_cast<int>(text.size());
  const int alphabet = 256 + m;
  const std::vector<int> sa = BuildSuffixArray(text, alphabet);
  const std::vector<int> lcp = BuildLcpArray(text, sa);

  // Left-context scratch: symbol + 1 (0 means start of text).
  std::vector<DocMask> left(static_cast<std::size_t>(alphabet) + 1, 0);
  std::vector<int> touched;

  std::vector<SharedSubstring> out;
  auto process = [&](const Frame& f, int rb) -> DocMask {
    if (f.lcp < static_cast<int>(min_len)) return 0;
    DocMask mask = 0;
    for (int i = f.lb; i <= rb; ++i) mask |= DocMask{1} << doc_of[sa[i]];
    if (std::popcount(mask) < quorum) return mask;
    for (DocMask c : f.child_masks) {
      if (c == mask) return mask;
    }
    bool left_closed = true;
    for (int i = f.lb; i <= rb; ++i) {
      const int pos = sa[i];
      const int sym = pos == 0 ? 0 : text[pos - 1] + 1;
      if (left[sym] == 0) touched.push_back(sym);
      left[sym] |= DocMask{1} << doc_of[pos];
    }
    for (int sym : touched) {
      if (left[sym] == mask) left_closed = false;
      left[sym] = 0;
    }
    touched.clear();
    if (!left_closed) return mask;

    SharedSubstring s;
    const int first = sa[f.lb];
    for (int k = 0; k < f.lcp; ++k) s.bytes.push_back(static_cast<std::uint8_t>(text[first + k]));
    for (int d = 0; d < m; ++d) {
      if (mask & (DocMask{1} << d)) s.support.push_back(d);
    }
    for (int i = f.lb; i <= rb; ++i) {
      s.occurrences.push_back({doc_of[sa[i]], offset_of[sa[i]], RegionKind::kCode});
    }
    std::sort(s.occurrences.begin(), s.occurrences.end(), [](const auto& a, const auto& b) {
      return std::tie(a.member, a.offset) < std::tie(b.member, b.offset);
    });
    out.push_back(std::move(s));
    return mask;
  };

  std::vector<Frame> stack;
  stack.push_back({0, 0, {}});
  for (int i = 1; i <= n; ++i) {
    const int cur = i < n ? lcp[i] : 0;
    int lb = i - 1;
    std::optional<DocMask> last;
    while (cur < stack.back().lcp) {
      Frame f = std::move(stack.back());
      stack.pop_back();
      const DocMask mask = process(f, i - 1);
      lb = f.lb;
      if (cur <= stack.back().lcp) {
        stack.back().child_masks.push_back(mask);
      } else {
        last = mask;
      }
    }
    if (cur > stack.back().lcp) {
      Frame f{cur, lb, {}};
      if (last) f.child_masks.push_back(*last);
      stack.push_back(std::move(f));
    }
  }

  std::sort(out.begin(), out.end(), [](const SharedSubstring& a, const SharedSubstring& b) {
    if (a.bytes.size() != b.bytes.size()) return a.bytes.size() > b.bytes.size();
    return a.bytes < b.bytes;
  });
  return out;
}

std::vector<SharedSubstring> SharedSubstrings(std::span<const ByteImage> images,
                                              std::size_t min_len, int quorum) {
  std::vector<std::vector<std::uint8_t>> docs;
  for (const auto& img : images) {
    auto bytes = img.searchable();
    docs.emplace_back(bytes.begin(), bytes.end());
  }
  auto subs = SharedSubstrings(docs, min_len, quorum);
  for (auto& s : subs) {
    for (auto& o : s.occurrences) {
      const Region* code = images[o.member].region(RegionKind::kCode);
      o.region = code != nullptr && o.offset < code->end() ? RegionKind::kCode : RegionKind::kData;
    }
  }
  return subs;
}

std::map<std::size_t, std::size_t> LengthHistogram(const std::vector<SharedSubstring>& subs) {
  std::map<std::size_t, std::size_t> h;
  for (const auto& s : subs) ++h[s.bytes.size()];
  return h;
}

std::string_view ToString(SubseqCategory c) {
  switch (c) {
    case SubseqCategory::kNopSled:
      return "nop_sled";
    case SubseqCategory::kCallSequence:
      return "call_sequence";
    case SubseqCategory::kMovSequence:
      return "mov_sequence";
    case SubseqCategory::kStartCode:
      return "start_code";
    case SubseqCategory::kPotentialSignature:
      return "potential_signature";
  }
  return "?";
}

ImageView MakeImageView(const ByteImage& img) {
  ImageView v;
  v.image = &img;
  auto code = img.region_bytes(RegionKind::kCode);
  v.code_length = static_cast<std::uint32_t>(code.size());
  for (std::uint32_t pc = 0; pc < code.size();) {
    DecodedInsn d;
    try {
      d = DecodeAt(code, pc);
    } catch (const DecodeError&) {
      break;
    }
    v.starts.push_back(pc);
    v.insns.push_back(d);
    pc += d.size;
  }
  if (v.starts.empty()) return v;

  std::set<std::uint32_t> function_starts = {0, img.entry_offset};
  for (const auto& d : v.insns) {
    if (d.op == Mnemonic::kCall) function_starts.insert(d.target);
  }
  auto index_of = [&](std::uint32_t pc) -> int {
    auto it = std::lower_bound(v.starts.begin(), v.starts.end(), pc);
    if (it == v.starts.end() || *it != pc) return -1;
    return static_cast<int>(it - v.starts.begin());
  };
  std::uint32_t pc = img.entry_offset;
  std::set<std::uint32_t> seen;
  while (seen.insert(pc).second) {
    const int idx = index_of(pc);
    if (idx < 0) break;
    const DecodedInsn& d = v.insns[idx];
    v.start_code.emplace_back(pc, pc + d.size);
    if (d.op == Mnemonic::kCall) {
      if (d.target != img.entry_offset) {
        auto next = function_starts.upper_bound(d.target);
        v.start_code.emplace_back(d.target,
                                  next == function_starts.end() ? v.code_length : *next);
      }
      break;
    }
    if (d.op == Mnemonic::kJmp) {
      pc = d.target;
    } else if (IsTerminator(d.op)) {
      break;
    } else {
      pc += d.size;
    }
  }
  return v;
}

namespace {

bool IsMovClass(Mnemonic op) {
  return op == Mnemonic::kMov || op == Mnemonic::kMovi || op == Mnemonic::kLea ||
         op == Mnemonic::kLoad || op == Mnemonic::kStore;
}

}  // namespace

Classification ClassifySubsequence(const SharedSubstring& s, const std::vector<ImageView>& views) {
  Classification c;
  const auto len = static_cast<std::uint32_t>(s.bytes.size());
  if (std::all_of(s.bytes.begin(), s.bytes.end(), [](std::uint8_t b) { return b == 0; })) {
    c.category = SubseqCategory::kNopSled;
    return c;
  }
  const Occurrence* first = nullptr;
  for (const auto& o : s.occurrences) {
    if (o.offset < views.at(o.member).code_length) {
      first = &o;
      break;
    }
  }
  if (first == nullptr) {
    c.data_only = true;
    return c;
  }
  const ImageView& v = views[first->member];
  const std::uint32_t end = std::min(first->offset + len, v.code_length);
  auto it = std::lower_bound(v.starts.begin(), v.starts.end(), first->offset);
  std::vector<Mnemonic> ops;
  for (auto k = static_cast<std::size_t>(it - v.starts.begin()); k < v.starts.size(); ++k) {
    if (v.starts[k] + v.insns[k].size > end) break;
    ops.push_back(v.insns[k].op);
  }
  if (ops.empty()) {
    c.undecodable = true;
    return c;
  }
  bool saw_push = false;
  for (Mnemonic op : ops) {
    if (op == Mnemonic::kPush) saw_push = true;
    if (op == Mnemonic::kCall && saw_push) {
      c.category = SubseqCategory::kCallSequence;
      return c;
    }
  }
  const auto movs = std::count_if(ops.begin(), ops.end(), IsMovClass);
  if (5 * movs >= 4 * static_cast<std::ptrdiff_t>(ops.size())) {
    c.category = SubseqCategory::kMovSequence;
    return c;
  }
  for (const auto& o : s.occurrences) {
    for (const auto& [b, e] : views.at(o.member).start_code) {
      if (o.offset < e && b < o.offset + len) {
        c.category = SubseqCategory::kStartCode;
        return c;
      }
    }
  }
  return c;
}

std::optional<Signature> ExtractSignature(std::span<const ByteImage> subset, std::size_t min_len) {
  if (subset.size() < 2) throw SignatureError("signature extraction needs at least 2 images");
  auto subs = SharedSubstrings(subset, min_len, static_cast<int>(subset.size()));
  if (subs.empty()) return std::nullopt;
  std::vector<ImageView> views;
  for (const auto& img : subset) views.push_back(MakeImageView(img));
  const SharedSubstring* pick = &subs.front();
  for (const auto& s : subs) {
    if (s.bytes.size() != subs.front().bytes.size()) break;
    if (ClassifySubsequence(s, views).category == SubseqCategory::kPotentialSignature) {
      pick = &s;
      break;
    }
  }
  return Signature{pick->bytes, pick->support};
}

bool MatchSignature(const Signature& sig, const ByteImage& img) {
  if (sig.bytes.empty()) throw SignatureError("empty signature");
  auto hay = img.searchable();
  std::boyer_moore_horspool_searcher searcher(sig.bytes.begin(), sig.bytes.end());
  return std::search(hay.begin(), hay.end(), searcher) != hay.end();
}

EvasionReport EvasionExperiment(std::span<const ByteImage> population,
                                std::span<const ByteImage> benign, int k, std::size_t min_len,
                                int trials, std::uint64_t seed) {
  const int n = static_cast<int>(population.size());
  if (k < 2 || k >= n) throw SignatureError("population too small for k");
  EvasionReport r;
  r.k = k;
  r.min_len = min_len;
  double rate_sum = 0.0;
  int fp = 0;
  int fp_total = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::Derive(seed, "evasion", static_cast<std::uint64_t>(t));
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    rng.Shuffle(idx);
    EvasionTrial trial;
    trial.sample.assign(idx.begin(), idx.begin() + k);
    std::sort(trial.sample.begin(), trial.sample.end());
    std::vector<ByteImage> subset;
    for (int i : trial.sample) subset.push_back(population[i]);
    auto sig = ExtractSignature(subset, min_len);
    trial.held_out = n - k;
    trial.benign = static_cast<int>(benign.size());
    if (sig) {
      trial.signature_length = sig->bytes.size();
      for (int i = 0; i < n; ++i) {
        if (std::binary_search(trial.sample.begin(), trial.sample.end(), i)) continue;
        trial.held_out_matches += MatchSignature(*sig, population[i]);
      }
      for (const auto& b : benign) trial.benign_matches += MatchSignature(*sig, b);
      ++r.trials_with_signature;
      rate_sum += static_cast<double>(trial.held_out_matches) / trial.held_out;
      fp += trial.benign_matches;
      fp_total += trial.benign;
    }
    r.trials.push_back(std::move(trial));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.mean_match_rate = r.trials_with_signature > 0 ? rate_sum / r.trials_with_signature : nan;
  r.effective_match_rate = trials > 0 ? rate_sum / trials : nan;
  r.false_positive_rate = fp_total > 0 ? static_cast<double>(fp) / fp_total : nan;
  return r;
}

std::string EvasionToCsv(const EvasionReport& r) {
  std::ostringstream os;
  os << "trial,sample,signature_length,held_out,held_out_matches,benign,benign_matches\n";
  for (std::size_t t = 0; t < r.trials.size(); ++t) {
    const auto& tr = r.trials[t];
    os << t << ',';
    for (std::size_t i = 0; i < tr.sample.size(); ++i) os << (i ? ";" : "") << tr.sample[i];
    os << ',';
    if (tr.signature_length) {
      os << *tr.signature_length;
    } else {
      os << "none";
    }
    os << ',' << tr.held_out << ',' << tr.held_out_matches << ',' << tr.benign << ','
       << tr.benign_matches << '\n';
  }
  return os.str();
}

std::string HexString(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

}  // namespace divlab
