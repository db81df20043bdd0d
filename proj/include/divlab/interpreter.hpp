#ifndef DIVLAB_INTERPRETER_HPP
#define DIVLAB_INTERPRETER_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "divlab/encoding.hpp"

namespace divlab {

enum class Termination : std::uint8_t { kHalted, kStepLimit, kFault };

enum class FaultKind : std::uint8_t {
  kNone,
  kOutOfBounds,
  kStackOverflow,
  kStackUnderflow,
  kCallDepth,
  kBadPc,
  kReturnWithoutCall,
};

std::string_view ToString(Termination t);
std::string_view ToString(FaultKind f);

struct Trace {
  std::vector<std::uint32_t> outputs;
  std::uint64_t steps = 0;
  Termination termination = Termination::kHalted;
  FaultKind fault = FaultKind::kNone;

  friend bool operator==(const Trace&, const Trace&) = default;
};

// Observable equivalence: same outputs, same termination (and fault kind).
// Step counts differ between variants by design.
bool TraceEquivalent(const Trace& a, const Trace& b);

inline constexpr std::uint64_t kDefaultStepLimit = 1'000'000;
inline constexpr std::size_t kMaxCallDepth = 1024;

// Runs the image from its entry offset. Registers and flags start at zero,
// sp at kStackTop, data copied to kDataBase. Each load from kInputPort
// consumes the next input (0 once exhausted).
Trace Interpret(const ByteImage& img, std::span<const std::uint32_t> inputs,
                std::uint64_t step_limit = kDefaultStepLimit);

}  // namespace divlab

#endif  // DIVLAB_INTERPRETER_HPP
