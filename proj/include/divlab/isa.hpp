#ifndef DIVLAB_ISA_HPP
#define DIVLAB_ISA_HPP

// Toy instruction set: 26 mnemonics, eight general registers plus sp, 32-bit
// wrapping arithmetic. Programs are kept structured (functions, basic
// blocks) so that transformations and analyses never have to recover
// structure from bytes.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace divlab {

// Opcode byte of each mnemonic. Numbering is part of the binary format.
enum class Mnemonic : std::uint8_t {
  kNop = 0x00,
  kMov = 0x01,
  kMovi = 0x02,
  kLea = 0x03,
  kAdd = 0x04,
  kSub = 0x05,
  kMul = 0x06,
  kXor = 0x07,
  kAnd = 0x08,
  kOr = 0x09,
  kAddi = 0x0A,
  kSubi = 0x0B,
  kLoad = 0x0C,
  kStore = 0x0D,
  kPush = 0x0E,
  kPop = 0x0F,
  kCmp = 0x10,
  kJmp = 0x11,
  kJz = 0x12,
  kJnz = 0x13,
  kJlt = 0x14,
  kJge = 0x15,
  kCall = 0x16,
  kRet = 0x17,
  kOut = 0x18,
  kHalt = 0x19,
};

inline constexpr int kMnemonicCount = 26;

enum class OperandKind : std::uint8_t { kReg, kImm, kLabel };

struct MnemonicInfo {
  Mnemonic op;
  std::string_view name;
  std::vector<OperandKind> operands;
  int encoded_size;
};

const MnemonicInfo& Info(Mnemonic op);
std::string_view Name(Mnemonic op);
std::optional<Mnemonic> MnemonicFromName(std::string_view name);
std::optional<Mnemonic> MnemonicFromByte(std::uint8_t byte);
const std::array<Mnemonic, kMnemonicCount>& AllMnemonics();

bool IsConditionalBranch(Mnemonic op);
// jmp and the conditional branches.
bool IsBranch(Mnemonic op);
// Instructions whose first operand is a written register (sp is not
// allowed there; only addi/subi, push and pop adjust sp).
bool HasDestination(Mnemonic op);
// Instructions that may only appear last in a block.
bool IsTerminator(Mnemonic op);
// Terminators after which control never reaches the next block.
bool EndsFlow(Mnemonic op);

struct Register {
  std::uint8_t index = 0;

  static constexpr std::uint8_t kSpIndex = 8;
  static constexpr int kCount = 9;

  static constexpr Register R(int i) { return Register{static_cast<std::uint8_t>(i)}; }
  static constexpr Register Sp() { return Register{kSpIndex}; }
  constexpr bool is_sp() const { return index == kSpIndex; }
  std::string ToString() const;

  friend constexpr bool operator==(Register, Register) = default;
  friend constexpr auto operator<=>(Register, Register) = default;
};

// Immediate operand. A non-empty `symbol` names a data blob whose load
// address is substituted for `value` at encode time.
struct Immediate {
  std::int32_t value = 0;
  std::string symbol;

  friend bool operator==(const Immediate&, const Immediate&) = default;
};

// Branch target (block label within the function) or call target (function
// name).
struct LabelRef {
  std::string name;

  friend bool operator==(const LabelRef&, const LabelRef&) = default;
};

using Operand = std::variant<Register, Immediate, LabelRef>;

// Operand order follows the encoding: load {rd, rbase, off}, store {rbase,
// rsrc, off}, lea {rd, rs, off}.
struct Instruction {
  Mnemonic op = Mnemonic::kNop;
  std::vector<Operand> operands;

  Register reg(std::size_t i) const { return std::get<Register>(operands.at(i)); }
  Register& reg(std::size_t i) { return std::get<Register>(operands.at(i)); }
  const Immediate& imm(std::size_t i) const { return std::get<Immediate>(operands.at(i)); }
  Immediate& imm(std::size_t i) { return std::get<Immediate>(operands.at(i)); }
  const std::string& label() const { return std::get<LabelRef>(operands.at(0)).name; }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

// Convenience constructors.
Instruction MakeInsn(Mnemonic op);
Instruction MakeInsn(Mnemonic op, Register a);
Instruction MakeInsn(Mnemonic op, Register a, Register b);
Instruction MakeInsn(Mnemonic op, Register a, std::int32_t imm);
Instruction MakeInsn(Mnemonic op, Register a, Register b, std::int32_t imm);
Instruction MakeBranch(Mnemonic op, std::string target);

struct BasicBlock {
  std::string label;
  std::vector<Instruction> instructions;

  // The final instruction when it is a terminator.
  const Instruction* terminator() const;
  // True when control may continue into the next block in layout order.
  bool falls_through() const;

  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

struct Function {
  std::string name;
  std::vector<BasicBlock> blocks;

  const std::string& entry() const { return blocks.front().label; }
  int block_index(std::string_view label) const;
  std::size_t instruction_count() const;

  friend bool operator==(const Function&, const Function&) = default;
};

enum class DataEncoding : std::uint8_t { kPlain, kXored };

struct DataBlob {
  std::string label;
  // Stored bytes; for xored blobs these are logical bytes XOR key.
  std::vector<std::uint8_t> bytes;
  DataEncoding encoding = DataEncoding::kPlain;
  std::uint8_t key = 0;

  friend bool operator==(const DataBlob&, const DataBlob&) = default;
};

// Name -> image offset. Offsets are refreshed from the actual layout by
// Encode; only presence and names are semantically meaningful here.
using SymbolTable = std::map<std::string, std::uint32_t>;

struct Program {
  std::vector<Function> functions;
  std::vector<DataBlob> data;
  std::optional<SymbolTable> symbols;
  std::string entry_function;

  int function_index(std::string_view name) const;
  const Function* find_function(std::string_view name) const;
  std::size_t instruction_count() const;

  friend bool operator==(const Program&, const Program&) = default;
};

// Memory model constants shared by the encoder and the interpreter.
inline constexpr std::uint32_t kMemorySize = 0x10000;
inline constexpr std::uint32_t kDataBase = 0x8000;
inline constexpr std::uint32_t kDataLimit = 0xC000;
inline constexpr std::uint32_t kStackFloor = 0xC000;
inline constexpr std::uint32_t kStackTop = 0xFFF0;
inline constexpr std::uint32_t kInputPort = 0xFFFC;

// Blob load addresses (absolute) keyed by label; blobs are laid out in order,
// each padded to a multiple of four bytes.
std::map<std::string, std::uint32_t> DataAddresses(const Program& p);
std::size_t PaddedSize(std::size_t n);

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ValidationError describing the first broken invariant.
void Validate(const Program& p);

// Register effects used by liveness, scheduling and garbage insertion. Bits
// 0..7 are r0..r7, bit 8 is sp, bit 9 the comparison flags.
using RegMask = std::uint16_t;
inline constexpr RegMask kFlagsBit = 1u << 9;
inline constexpr RegMask kGprMask = 0xFF;
inline constexpr RegMask RegBit(Register r) { return static_cast<RegMask>(1u << r.index); }

struct Effects {
  RegMask uses = 0;
  RegMask defs = 0;
  bool memory = false;  // reads or writes memory, performs I/O or calls
};

Effects EffectsOf(const Instruction& insn);

}  // namespace divlab

#endif  // DIVLAB_ISA_HPP
