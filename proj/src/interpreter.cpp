#include "divlab/interpreter.hpp"

#include <array>
#include <cstring>

namespace divlab {

std::string_view ToString(Termination t) {
  switch (t) {
    case Termination::kHalted:
      return "halted";
    case Termination::kStepLimit:
      return "step-limit";
    case Termination::kFault:
      return "fault";
  }
  return "?";
}

std::string_view ToString(FaultKind f) {
  switch (f) {
    case FaultKind::kNone:
      return "none";
    case FaultKind::kOutOfBounds:
      return "out-of-bounds";
    case FaultKind::kStackOverflow:
      return "stack-overflow";
    case FaultKind::kStackUnderflow:
      return "stack-underflow";
    case FaultKind::kCallDepth:
      return "call-depth";
    case FaultKind::kBadPc:
      return "bad-pc";
    case FaultKind::kReturnWithoutCall:
      return "return-without-call";
  }
  return "?";
}

bool TraceEquivalent(const Trace& a, const Trace& b) {
  return a.outputs == b.outputs && a.termination == b.termination && a.fault == b.fault;
}

namespace {

class Machine {
 public:
  Machine(const ByteImage& img, std::span<const std::uint32_t> inputs)
      : code_(img.region_bytes(RegionKind::kCode)), inputs_(inputs), memory_(kMemorySize, 0) {
    auto data = img.region_bytes(RegionKind::kData);
    const std::size_t n = std::min<std::size_t>(data.size(), kDataLimit - kDataBase);
    std::memcpy(memory_.data() + kDataBase, data.data(), n);
    // Pre-decode once; entries stay empty where decoding fails so that
    // jumping there faults as a bad pc.
    decoded_.resize(code_.size());
    valid_.assign(code_.size(), false);
    for (std::uint32_t pc = 0; pc < code_.size();) {
      try {
        decoded_[pc] = DecodeAt(code_, pc);
      } catch (const DecodeError&) {
        break;
      }
      valid_[pc] = true;
      pc += decoded_[pc].size;
    }
    regs_[Register::kSpIndex] = kStackTop;
    pc_ = img.entry_offset;
  }

  Trace Run(std::uint64_t step_limit) {
    Trace t;
    while (true) {
      if (t.steps >= step_limit) {
        t.termination = Termination::kStepLimit;
        break;
      }
      if (pc_ >= code_.size() || !valid_[pc_]) {
        Fault(t, FaultKind::kBadPc);
        break;
      }
      ++t.steps;
      const DecodedInsn& d = decoded_[pc_];
      FaultKind fault = FaultKind::kNone;
      bool halted = false;
      std::uint32_t next = pc_ + d.size;
      std::uint32_t& ra = regs_[d.a];
      const std::uint32_t rb = regs_[d.b];
      const auto imm = static_cast<std::uint32_t>(d.imm);
      switch (d.op) {
        case Mnemonic::kNop:
          break;
        case Mnemonic::kMov:
          ra = rb;
          break;
        case Mnemonic::kMovi:
          ra = imm;
          break;
        case Mnemonic::kLea:
          ra = rb + imm;
          break;
        case Mnemonic::kAdd:
          ra += rb;
          break;
        case Mnemonic::kSub:
          ra -= rb;
          break;
        case Mnemonic::kMul:
          ra *= rb;
          break;
        case Mnemonic::kXor:
          ra ^= rb;
          break;
        case Mnemonic::kAnd:
          ra &= rb;
          break;
        case Mnemonic::kOr:
          ra |= rb;
          break;
        case Mnemonic::kAddi:
          ra += imm;
          break;
        case Mnemonic::kSubi:
          ra -= imm;
          break;
        case Mnemonic::kLoad: {
          const std::uint32_t addr = rb + imm;
          if (addr == kInputPort) {
            ra = input_ < inputs_.size() ? inputs_[input_++] : 0;
          } else if (!Read(addr, ra)) {
            fault = FaultKind::kOutOfBounds;
          }
          break;
        }
        case Mnemonic::kStore: {
          const std::uint32_t addr = ra + imm;
          if (addr == kInputPort || !Write(addr, rb)) fault = FaultKind::kOutOfBounds;
          break;
        }
        case Mnemonic::kPush: {
          std::uint32_t& sp = regs_[Register::kSpIndex];
          const std::uint32_t value = ra;
          if (sp < kStackFloor + 4) {
            fault = FaultKind::kStackOverflow;
          } else if (!Write(sp - 4, value)) {
            fault = FaultKind::kOutOfBounds;
          } else {
            sp -= 4;
          }
          break;
        }
        case Mnemonic::kPop: {
          std::uint32_t& sp = regs_[Register::kSpIndex];
          if (sp >= kStackTop || sp < kStackFloor) {
            fault = FaultKind::kStackUnderflow;
          } else {
            Read(sp, ra);
            sp += 4;
          }
          break;
        }
        case Mnemonic::kCmp:
          zero_ = ra == rb;
          less_ = static_cast<std::int32_t>(ra) < static_cast<std::int32_t>(rb);
          break;
        case Mnemonic::kJmp:
          next = d.target;
          break;
        case Mnemonic::kJz:
          if (zero_) next = d.target;
          break;
        case Mnemonic::kJnz:
          if (!zero_) next = d.target;
          break;
        case Mnemonic::kJlt:
          if (less_) next = d.target;
          break;
        case Mnemonic::kJge:
          if (!less_) next = d.target;
          break;
        case Mnemonic::kCall:
          if (call_stack_.size() >= kMaxCallDepth) {
            fault = FaultKind::kCallDepth;
          } else {
            call_stack_.push_back(next);
            next = d.target;
          }
          break;
        case Mnemonic::kRet:
          if (call_stack_.empty()) {
            fault = FaultKind::kReturnWithoutCall;
          } else {
            next = call_stack_.back();
            call_stack_.pop_back();
          }
          break;
        case Mnemonic::kOut:
          t.outputs.push_back(ra);
          break;
        case Mnemonic::kHalt:
          halted = true;
          break;
      }
      if (fault != FaultKind::kNone) {
        Fault(t, fault);
        break;
      }
      if (halted) {
        t.termination = Termination::kHalted;
        break;
      }
      pc_ = next;
    }
    return t;
  }

 private:
  static void Fault(Trace& t, FaultKind kind) {
    t.termination = Termination::kFault;
    t.fault = kind;
  }

  bool Read(std::uint32_t addr, std::uint32_t& out) const {
    if (addr > kMemorySize - 4) return false;
    out = static_cast<std::uint32_t>(memory_[addr]) | (memory_[addr + 1] << 8) |
          (memory_[addr + 2] << 16) | (static_cast<std::uint32_t>(memory_[addr + 3]) << 24);
    return true;
  }

  bool Write(std::uint32_t addr, std::uint32_t value) {
    if (addr > kMemorySize - 4) return false;
    for (int k = 0; k < 4; ++k) memory_[addr + k] = static_cast<std::uint8_t>(value >> (8 * k));
    return true;
  }

  std::span<const std::uint8_t> code_;
  std::span<const std::uint32_t> inputs_;
  std::size_t input_ = 0;
  std::vector<std::uint8_t> memory_;
  std::vector<DecodedInsn> decoded_;
  std::vector<bool> valid_;
  std::array<std::uint32_t, Register::kCount> regs_{};
  bool zero_ = false;
  bool less_ = false;
  std::uint32_t pc_ = 0;
  std::vector<std::uint32_t> call_stack_;
};

}  // namespace

Trace Interpret(const ByteImage& img, std::span<const std::uint32_t> inputs,
                std::uint64_t step_limit) {
  Machine m(img, inputs);
  return m.Run(step_limit);
}

}  // namespace divlab
