#ifndef DIVLAB_DIVERSIFIER_HPP
#define DIVLAB_DIVERSIFIER_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "divlab/isa.hpp"

namespace divlab {

struct PassEnable {
  bool data = true;
  bool substitute = true;
  bool garbage = true;
  bool nops = true;
  bool reorder = true;
  bool registers = true;
  bool blocks = true;

  friend bool operator==(const PassEnable&, const PassEnable&) = default;
};

struct DiversityConfig {
  std::uint64_t seed = 0;
  double p_substitute = 0.5;
  double p_reorder = 0.5;
  double p_nop = 0.5;
  double p_garbage = 0.5;
  double p_split = 0.5;
  int max_garbage_len = 2;
  bool strip_symbols = true;
  // Turns every pass except symbol stripping into the identity.
  bool identity = false;
  PassEnable enable;

  friend bool operator==(const DiversityConfig&, const DiversityConfig&) = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ConfigError when a probability is outside [0,1] or
// max_garbage_len < 1.
void CheckConfig(const DiversityConfig& cfg);

// key=value lines, '#' comments. Keys: seed, p_substitute, p_reorder, p_nop,
// p_garbage, p_split, max_garbage_len, strip_symbols, identity,
// enable.<data|substitute|garbage|nops|reorder|registers|blocks>.
DiversityConfig ParseConfig(std::string_view text, DiversityConfig base = {});
void ApplyConfigLine(DiversityConfig& cfg, std::string_view key, std::string_view value);
// Canonical text form; ParseConfig(FormatConfig(c)) == c.
std::string FormatConfig(const DiversityConfig& cfg);
// Config with only the given passes enabled.
DiversityConfig OnlyPasses(DiversityConfig cfg, std::string_view comma_separated);

inline constexpr std::string_view kDecoderName = "__decode_data";

Program SubstituteInstructions(const Program& p, const DiversityConfig& cfg);
Program ReorderInstructions(const Program& p, const DiversityConfig& cfg);
Program PermuteRegisters(const Program& p, const DiversityConfig& cfg);
Program InsertNops(const Program& p, const DiversityConfig& cfg);
Program InsertGarbage(const Program& p, const DiversityConfig& cfg);
Program RandomizeBlocks(const Program& p, const DiversityConfig& cfg);
Program ObfuscateData(const Program& p, const DiversityConfig& cfg);
Program StripSymbols(const Program& p);

// obfuscate_data -> substitute -> garbage -> nops -> reorder -> registers
// -> blocks -> strip.
Program Diversify(const Program& p, const DiversityConfig& cfg);

// Seed for variant `index` of a population generated from `seed`.
std::uint64_t VariantSeed(std::uint64_t seed, std::uint64_t index);

}  // namespace divlab

#endif  // DIVLAB_DIVERSIFIER_HPP
