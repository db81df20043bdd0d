#include "divlab/isa.hpp"

#include <set>

namespace divlab {

namespace {

using K = OperandKind;

const std::array<MnemonicInfo, kMnemonicCount>& Table() {
  static const std::array<MnemonicInfo, kMnemonicCount> table = {{
      {Mnemonic::kNop, "nop", {}, 1},
      {Mnemonic::kMov, "mov", {K::kReg, K::kReg}, 3},
      {Mnemonic::kMovi, "movi", {K::kReg, K::kImm}, 6},
      {Mnemonic::kLea, "lea", {K::kReg, K::kReg, K::kImm}, 7},
      {Mnemonic::kAdd, "add", {K::kReg, K::kReg}, 3},
      {Mnemonic::kSub, "sub", {K::kReg, K::kReg}, 3},
      {Mnemonic::kMul, "mul", {K::kReg, K::kReg}, 3},
      {Mnemonic::kXor, "xor", {K::kReg, K::kReg}, 3},
      {Mnemonic::kAnd, "and", {K::kReg, K::kReg}, 3},
      {Mnemonic::kOr, "or", {K::kReg, K::kReg}, 3},
      {Mnemonic::kAddi, "addi", {K::kReg, K::kImm}, 6},
      {Mnemonic::kSubi, "subi", {K::kReg, K::kImm}, 6},
      {Mnemonic::kLoad, "load", {K::kReg, K::kReg, K::kImm}, 7},
      {Mnemonic::kStore, "store", {K::kReg, K::kReg, K::kImm}, 7},
      {Mnemonic::kPush, "push", {K::kReg}, 2},
      {Mnemonic::kPop, "pop", {K::kReg}, 2},
      {Mnemonic::kCmp, "cmp", {K::kReg, K::kReg}, 3},
      {Mnemonic::kJmp, "jmp", {K::kLabel}, 5},
      {Mnemonic::kJz, "jz", {K::kLabel}, 5},
      {Mnemonic::kJnz, "jnz", {K::kLabel}, 5},
      {Mnemonic::kJlt, "jlt", {K::kLabel}, 5},
      {Mnemonic::kJge, "jge", {K::kLabel}, 5},
      {Mnemonic::kCall, "call", {K::kLabel}, 5},
      {Mnemonic::kRet, "ret", {}, 1},
      {Mnemonic::kOut, "out", {K::kReg}, 2},
      {Mnemonic::kHalt, "halt", {}, 1},
  }};
  return table;
}

}  // namespace

const MnemonicInfo& Info(Mnemonic op) {
  return Table().at(static_cast<std::size_t>(op));
}

std::string_view Name(Mnemonic op) { return Info(op).name; }

std::optional<Mnemonic> MnemonicFromName(std::string_view name) {
  for (const auto& info : Table()) {
    if (info.name == name) return info.op;
  }
  return std::nullopt;
}

std::optional<Mnemonic> MnemonicFromByte(std::uint8_t byte) {
  if (byte >= kMnemonicCount) return std::nullopt;
  return static_cast<Mnemonic>(byte);
}

const std::array<Mnemonic, kMnemonicCount>& AllMnemonics() {
  static const std::array<Mnemonic, kMnemonicCount> all = [] {
    std::array<Mnemonic, kMnemonicCount> a{};
    for (int i = 0; i < kMnemonicCount; ++i) a[i] = static_cast<Mnemonic>(i);
    return a;
  }();
  return all;
}

bool IsConditionalBranch(Mnemonic op) {
  return op == Mnemonic::kJz || op == Mnemonic::kJnz || op == Mnemonic::kJlt ||
         op == Mnemonic::kJge;
}

bool IsBranch(Mnemonic op) { return op == Mnemonic::kJmp || IsConditionalBranch(op); }

bool IsTerminator(Mnemonic op) {
  return IsBranch(op) || op == Mnemonic::kRet || op == Mnemonic::kHalt;
}

bool EndsFlow(Mnemonic op) {
  return op == Mnemonic::kJmp || op == Mnemonic::kRet || op == Mnemonic::kHalt;
}

std::string Register::ToString() const {
  if (is_sp()) return "sp";
  return "r" + std::to_string(index);
}

Instruction MakeInsn(Mnemonic op) { return Instruction{op, {}}; }

Instruction MakeInsn(Mnemonic op, Register a) { return Instruction{op, {a}}; }

Instruction MakeInsn(Mnemonic op, Register a, Register b) {
  return Instruction{op, {a, b}};
}

Instruction MakeInsn(Mnemonic op, Register a, std::int32_t imm) {
  return Instruction{op, {a, Immediate{imm, {}}}};
}

Instruction MakeInsn(Mnemonic op, Register a, Register b, std::int32_t imm) {
  return Instruction{op, {a, b, Immediate{imm, {}}}};
}

Instruction MakeBranch(Mnemonic op, std::string target) {
  return Instruction{op, {LabelRef{std::move(target)}}};
}

const Instruction* BasicBlock::terminator() const {
  if (instructions.empty() || !IsTerminator(instructions.back().op)) return nullptr;
  return &instructions.back();
}

bool BasicBlock::falls_through() const {
  return instructions.empty() || !EndsFlow(instructions.back().op);
}

int Function::block_index(std::string_view label) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].label == label) return static_cast<int>(i);
  }
  return -1;
}

std::size_t Function::instruction_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.instructions.size();
  return n;
}

int Program::function_index(std::string_view name) const {
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const Function* Program::find_function(std::string_view name) const {
  int i = function_index(name);
  return i < 0 ? nullptr : &functions[i];
}

std::size_t Program::instruction_count() const {
  std::size_t n = 0;
  for (const auto& f : functions) n += f.instruction_count();
  return n;
}

std::size_t PaddedSize(std::size_t n) { return (n + 3) & ~std::size_t{3}; }

std::map<std::string, std::uint32_t> DataAddresses(const Program& p) {
  std::map<std::string, std::uint32_t> out;
  std::uint32_t addr = kDataBase;
  for (const auto& blob : p.data) {
    out[blob.label] = addr;
    addr += static_cast<std::uint32_t>(PaddedSize(blob.bytes.size()));
  }
  return out;
}

namespace {

[[noreturn]] void Fail(const std::string& where, const std::string& what) {
  throw ValidationError(where + ": " + what);
}

}  // namespace

bool HasDestination(Mnemonic op) {
  switch (op) {
    case Mnemonic::kMov:
    case Mnemonic::kMovi:
    case Mnemonic::kLea:
    case Mnemonic::kAdd:
    case Mnemonic::kSub:
    case Mnemonic::kMul:
    case Mnemonic::kXor:
    case Mnemonic::kAnd:
    case Mnemonic::kOr:
    case Mnemonic::kLoad:
    case Mnemonic::kPop:
      return true;
    default:
      return false;
  }
}

void Validate(const Program& p) {
  std::set<std::string> globals;
  for (const auto& f : p.functions) {
    if (!globals.insert(f.name).second) Fail(f.name, "duplicate symbol");
  }
  std::set<std::string> blob_names;
  for (const auto& d : p.data) {
    if (!globals.insert(d.label).second) Fail(d.label, "duplicate symbol");
    blob_names.insert(d.label);
  }
  if (p.find_function(p.entry_function) == nullptr) {
    Fail("program", "entry function '" + p.entry_function + "' does not exist");
  }
  std::size_t data_bytes = 0;
  for (const auto& d : p.data) data_bytes += PaddedSize(d.bytes.size());
  if (data_bytes > kDataLimit - kDataBase) Fail("program", "data section exceeds 16 KiB");

  for (const auto& f : p.functions) {
    if (f.blocks.empty()) Fail(f.name, "function has no blocks");
    std::set<std::string> labels;
    for (const auto& b : f.blocks) {
      if (!labels.insert(b.label).second) Fail(f.name + ":" + b.label, "duplicate label");
    }
    if (f.blocks.back().falls_through()) {
      Fail(f.name, "control falls off the end of the function");
    }
    for (const auto& b : f.blocks) {
      const std::string where = f.name + ":" + b.label;
      for (std::size_t i = 0; i < b.instructions.size(); ++i) {
        const Instruction& insn = b.instructions[i];
        const MnemonicInfo& info = Info(insn.op);
        if (insn.operands.size() != info.operands.size()) {
          Fail(where, std::string(info.name) + " expects " +
                          std::to_string(info.operands.size()) + " operands");
        }
        for (std::size_t k = 0; k < insn.operands.size(); ++k) {
          const Operand& o = insn.operands[k];
          bool ok = false;
          switch (info.operands[k]) {
            case OperandKind::kReg:
              ok = std::holds_alternative<Register>(o) &&
                   std::get<Register>(o).index < Register::kCount;
              break;
            case OperandKind::kImm:
              ok = std::holds_alternative<Immediate>(o);
              if (ok) {
                const auto& sym = std::get<Immediate>(o).symbol;
                if (!sym.empty() && !blob_names.count(sym)) {
                  Fail(where, "unresolved data label '" + sym + "'");
                }
              }
              break;
            case OperandKind::kLabel:
              ok = std::holds_alternative<LabelRef>(o);
              break;
          }
          if (!ok) Fail(where, std::string(info.name) + ": operand kind mismatch");
        }
        if (IsTerminator(insn.op) && i + 1 != b.instructions.size()) {
          Fail(where, "control transfer before end of block");
        }
        if (IsBranch(insn.op) && f.block_index(insn.label()) < 0) {
          Fail(where, "unresolved label '" + insn.label() + "'");
        }
        if (insn.op == Mnemonic::kCall && p.find_function(insn.label()) == nullptr) {
          Fail(where, "call to unknown function '" + insn.label() + "'");
        }
        if (HasDestination(insn.op) && insn.reg(0).is_sp()) {
          Fail(where, std::string(info.name) + " may not write sp");
        }
      }
    }
  }
  if (p.symbols) {
    for (const auto& f : p.functions) {
      if (!p.symbols->count(f.name)) Fail("symbols", "missing function " + f.name);
    }
    for (const auto& d : p.data) {
      if (!p.symbols->count(d.label)) Fail("symbols", "missing data " + d.label);
    }
  }
}

Effects EffectsOf(const Instruction& insn) {
  Effects e;
  auto r = [&](std::size_t i) { return RegBit(insn.reg(i)); };
  const RegMask sp = RegBit(Register::Sp());
  switch (insn.op) {
    case Mnemonic::kNop:
    case Mnemonic::kJmp:
    case Mnemonic::kHalt:
      break;
    case Mnemonic::kMov:
    case Mnemonic::kLea:
      e.defs = r(0);
      e.uses = r(1);
      break;
    case Mnemonic::kMovi:
      e.defs = r(0);
      break;
    case Mnemonic::kXor:
      e.defs = r(0);
      // xor rd, rd is the zeroing idiom and does not read rd.
      if (insn.reg(0) != insn.reg(1)) e.uses = r(0) | r(1);
      break;
    case Mnemonic::kAdd:
    case Mnemonic::kSub:
    case Mnemonic::kMul:
    case Mnemonic::kAnd:
    case Mnemonic::kOr:
      e.defs = r(0);
      e.uses = r(0) | r(1);
      break;
    case Mnemonic::kAddi:
    case Mnemonic::kSubi:
      e.defs = r(0);
      e.uses = r(0);
      break;
    case Mnemonic::kLoad:
      e.defs = r(0);
      e.uses = r(1);
      e.memory = true;
      break;
    case Mnemonic::kStore:
      e.uses = r(0) | r(1);
      e.memory = true;
      break;
    case Mnemonic::kPush:
      e.uses = r(0) | sp;
      e.defs = sp;
      e.memory = true;
      break;
    case Mnemonic::kPop:
      e.uses = sp;
      e.defs = r(0) | sp;
      e.memory = true;
      break;
    case Mnemonic::kCmp:
      e.uses = r(0) | r(1);
      e.defs = kFlagsBit;
      break;
    case Mnemonic::kJz:
    case Mnemonic::kJnz:
    case Mnemonic::kJlt:
    case Mnemonic::kJge:
      e.uses = kFlagsBit;
      break;
    case Mnemonic::kCall:
      // Arguments travel on the stack; the callee may clobber r0..r7 and
      // the flags.
      e.uses = sp;
      e.defs = kGprMask | kFlagsBit;
      e.memory = true;
      break;
    case Mnemonic::kRet:
      e.uses = RegBit(Register::R(0)) | sp;
      break;
    case Mnemonic::kOut:
      e.uses = r(0);
      e.memory = true;
      break;
  }
  return e;
}

}  // namespace divlab
