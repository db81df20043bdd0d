#ifndef DIVLAB_SIGNATURE_HPP
#define DIVLAB_SIGNATURE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "divlab/encoding.hpp"

namespace divlab {

class SignatureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kDefaultMinLen = 10;
inline constexpr std::size_t kDefaultSignatureLen = 25;

struct Occurrence {
  int member = 0;
  std::uint32_t offset = 0;
  RegionKind region = RegionKind::kCode;  // region holding the first byte

  friend bool operator==(const Occurrence&, const Occurrence&) = default;
};

struct SharedSubstring {
  std::vector<std::uint8_t> bytes;
  std::vector<int> support;  // sorted member indices
  std::vector<Occurrence> occurrences;
};

// Maximal substrings of length >= min_len occurring in >= quorum distinct
// documents: no one-byte extension to the left or right keeps the same
// support. Sorted by length descending, then bytes ascending.
std::vector<SharedSubstring> SharedSubstrings(const std::vector<std::vector<std::uint8_t>>& docs,
                                              std::size_t min_len, int quorum);
// Same over the code+data bytes of each image, with region annotations.
std::vector<SharedSubstring> SharedSubstrings(std::span<const ByteImage> images,
                                              std::size_t min_len, int quorum);

std::map<std::size_t, std::size_t> LengthHistogram(const std::vector<SharedSubstring>& subs);

enum class SubseqCategory : std::uint8_t {
  kNopSled,
  kCallSequence,
  kMovSequence,
  kStartCode,
  kPotentialSignature,
};

std::string_view ToString(SubseqCategory c);

struct Classification {
  SubseqCategory category = SubseqCategory::kPotentialSignature;
  bool undecodable = false;  // no complete instruction at the occurrence
  bool data_only = false;    // no occurrence touches code
};

// Per-image decoding context used by the classifier.
struct ImageView {
  const ByteImage* image = nullptr;
  std::uint32_t code_length = 0;
  std::vector<std::uint32_t> starts;
  std::vector<DecodedInsn> insns;
  // Half-open [begin, end) ranges: the straight-line path from the entry
  // through its first call, plus that callee's body.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> start_code;
};

ImageView MakeImageView(const ByteImage& img);

// Rules in order: all bytes zero -> nop_sled; push before call ->
// call_sequence; >= 80% mov/movi/lea/load/store -> mov_sequence; overlaps
// start code -> start_code; else potential_signature.
Classification ClassifySubsequence(const SharedSubstring& s, const std::vector<ImageView>& views);

struct Signature {
  std::vector<std::uint8_t> bytes;
  std::vector<int> origin;
};

// Longest substring common to every image in `subset` with length >=
// min_len; at equal length potential signatures win, then the smallest bytes.
std::optional<Signature> ExtractSignature(std::span<const ByteImage> subset, std::size_t min_len);

bool MatchSignature(const Signature& sig, const ByteImage& img);

struct EvasionTrial {
  std::vector<int> sample;
  std::optional<std::size_t> signature_length;
  int held_out = 0;
  int held_out_matches = 0;
  int benign = 0;
  int benign_matches = 0;
};

struct EvasionReport {
  int k = 0;
  std::size_t min_len = 0;
  std::vector<EvasionTrial> trials;
  int trials_with_signature = 0;
  // Mean held-out match rate over trials that produced a signature; NaN
  // when none did.
  double mean_match_rate = 0.0;
  // Mean over all trials, a trial without a signature counting as 0.
  double effective_match_rate = 0.0;
  // Benign matches over benign comparisons in trials with a signature.
  double false_positive_rate = 0.0;
};

EvasionReport EvasionExperiment(std::span<const ByteImage> population,
                                std::span<const ByteImage> benign, int k, std::size_t min_len,
                                int trials, std::uint64_t seed);

std::string EvasionToCsv(const EvasionReport& r);
std::string HexString(std::span<const std::uint8_t> bytes);

}  // namespace divlab

#endif  // DIVLAB_SIGNATURE_HPP
