#include "divlab/assembly.hpp"

#include <cctype>
#include <charconv>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "divlab/encoding.hpp"

namespace divlab {

ParseError::ParseError(int line, int column, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      message_(message) {}

namespace {

bool IsIdentStart(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

bool IsIdentChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

// Cursor over a single source line.
class LineScanner {
 public:
  LineScanner(std::string_view text, int line) : text_(text), line_(line) {}

  void SkipSpace() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool AtEnd() {
    SkipSpace();
    return pos_ >= text_.size();
  }
  int column() const { return static_cast<int>(pos_) + 1; }
  char Peek() {
    SkipSpace();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  bool Accept(char c) {
    if (Peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void Expect(char c) {
    if (!Accept(c)) Error(std::string("expected '") + c + "'");
  }
  std::string Ident() {
    SkipSpace();
    if (pos_ >= text_.size() || !IsIdentStart(text_[pos_])) Error("expected identifier");
    std::size_t start = pos_;
    while (pos_ < text_.size() && IsIdentChar(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }
  bool PeekIdent() { return IsIdentStart(Peek()); }
  bool PeekNumber() {
    char c = Peek();
    return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+';
  }
  // Signed decimal or 0x-hex; hex may use the full unsigned 32-bit range.
  std::int32_t Number() {
    SkipSpace();
    int col = column();
    bool negative = false;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) {
      negative = text_[pos_] == '-';
      ++pos_;
    }
    int base = 10;
    if (text_.substr(pos_, 2) == "0x" || text_.substr(pos_, 2) == "0X") {
      base = 16;
      pos_ += 2;
    }
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isxdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(line_, col, "expected number");
    std::uint64_t magnitude = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, magnitude, base);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      throw ParseError(line_, col, "malformed number");
    }
    if (pos_ < text_.size() && IsIdentChar(text_[pos_])) {
      throw ParseError(line_, col, "malformed number");
    }
    std::int64_t value = static_cast<std::int64_t>(magnitude);
    if (negative) value = -value;
    const std::int64_t lo = std::numeric_limits<std::int32_t>::min();
    const std::int64_t hi = base == 16 ? std::numeric_limits<std::uint32_t>::max()
                                       : std::numeric_limits<std::int32_t>::max();
    if (magnitude > static_cast<std::uint64_t>(std::numeric_limits<std::uint32_t>::max()) ||
        value < lo || value > hi) {
      throw ParseError(line_, col, "immediate out of 32-bit range");
    }
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(value));
  }
  std::string_view Rest() {
    SkipSpace();
    return text_.substr(pos_);
  }
  void Advance(std::size_t n) { pos_ += n; }

  [[noreturn]] void Error(const std::string& message) {
    throw ParseError(line_, column(), message);
  }

 private:
  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;
};

std::optional<Register> RegisterFromName(std::string_view name) {
  if (name == "sp") return Register::Sp();
  if (name.size() == 2 && name[0] == 'r' && name[1] >= '0' && name[1] <= '7') {
    return Register::R(name[1] - '0');
  }
  return std::nullopt;
}

Register ParseReg(LineScanner& s) {
  int col = s.column();
  std::string name = s.Ident();
  auto r = RegisterFromName(name);
  if (!r) throw ParseError(0, col, "expected register, got '" + name + "'");
  return *r;
}

Immediate ParseImm(LineScanner& s) {
  if (s.PeekIdent()) {
    std::string name = s.Ident();
    if (RegisterFromName(name)) s.Error("expected immediate, got register");
    return Immediate{0, name};
  }
  return Immediate{s.Number(), {}};
}

// [reg], [reg+imm], [reg-imm]
std::pair<Register, std::int32_t> ParseMemory(LineScanner& s) {
  s.Expect('[');
  Register base = ParseReg(s);
  std::int32_t offset = 0;
  if (s.Peek() == '+' || s.Peek() == '-') {
    bool minus = s.Peek() == '-';
    s.Advance(1);
    offset = s.Number();
    if (minus) offset = static_cast<std::int32_t>(0u - static_cast<std::uint32_t>(offset));
  }
  s.Expect(']');
  return {base, offset};
}

struct PendingRef {
  int line;
  int column;
};

struct FunctionBuilder {
  Function fn;
  std::map<std::string, int> label_lines;
  std::vector<std::pair<std::string, PendingRef>> branch_refs;
  bool open_block = false;
  int auto_labels = 0;
};

}  // namespace

Program ParseAssembly(std::string_view text) {
  Program p;
  std::optional<std::string> entry;
  std::map<std::string, int> global_lines;
  std::vector<std::pair<std::string, PendingRef>> call_refs;
  std::vector<std::pair<std::string, PendingRef>> data_refs;
  std::optional<FunctionBuilder> current;

  auto declare_global = [&](const std::string& name, int line, int col) {
    if (!global_lines.emplace(name, line).second) {
      throw ParseError(line, col, "duplicate symbol '" + name + "'");
    }
  };

  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;

    // Strip comments outside string literals.
    bool in_string = false;
    std::size_t cut = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') in_string = !in_string;
      if (raw[i] == ';' && !in_string) {
        cut = i;
        break;
      }
    }
    LineScanner s(raw.substr(0, cut), line_no);
    if (s.AtEnd()) {
      if (end == text.size()) break;
      continue;
    }

    try {
      if (!current) {
        int col = s.column();
        std::string keyword = s.Ident();
        if (keyword == "entry") {
          entry = s.Ident();
        } else if (keyword == "data") {
          int name_col = s.column();
          DataBlob blob;
          blob.label = s.Ident();
          declare_global(blob.label, line_no, name_col);
          s.Expect('=');
          std::string form = s.Ident();
          if (form == "hex") {
            s.Expect('"');
            std::string_view rest = s.Rest();
            std::size_t close = rest.find('"');
            if (close == std::string_view::npos) s.Error("unterminated hex string");
            std::string digits;
            for (char c : rest.substr(0, close)) {
              if (std::isspace(static_cast<unsigned char>(c))) continue;
              if (!std::isxdigit(static_cast<unsigned char>(c))) s.Error("bad hex digit");
              digits.push_back(c);
            }
            if (digits.size() % 2) s.Error("odd number of hex digits");
            for (std::size_t i = 0; i < digits.size(); i += 2) {
              blob.bytes.push_back(
                  static_cast<std::uint8_t>(std::stoi(digits.substr(i, 2), nullptr, 16)));
            }
            s.Advance(close + 1);
          } else if (form == "words") {
            do {
              auto w = static_cast<std::uint32_t>(s.Number());
              for (int k = 0; k < 4; ++k) blob.bytes.push_back(static_cast<std::uint8_t>(w >> (8 * k)));
            } while (s.Accept(','));
          } else {
            throw ParseError(line_no, col, "unknown data form '" + form + "'");
          }
          if (!s.AtEnd()) {
            if (s.Ident() != "xor") s.Error("expected 'xor' or end of line");
            blob.encoding = DataEncoding::kXored;
            blob.key = static_cast<std::uint8_t>(s.Number());
          }
          p.data.push_back(std::move(blob));
        } else if (keyword == "fn") {
          int name_col = s.column();
          current.emplace();
          current->fn.name = s.Ident();
          declare_global(current->fn.name, line_no, name_col);
          s.Expect('{');
        } else {
          throw ParseError(line_no, col, "unknown directive '" + keyword + "'");
        }
        if (!s.AtEnd()) s.Error("unexpected trailing text");
        continue;
      }

      FunctionBuilder& fb = *current;
      if (s.Accept('}')) {
        if (!s.AtEnd()) s.Error("unexpected trailing text");
        if (fb.fn.blocks.empty()) throw ParseError(line_no, 1, "empty function '" + fb.fn.name + "'");
        for (const auto& [label, ref] : fb.branch_refs) {
          if (!fb.label_lines.count(label)) {
            throw ParseError(ref.line, ref.column, "unresolved label '" + label + "'");
          }
        }
        if (fb.fn.blocks.back().falls_through()) {
          throw ParseError(line_no, 1, "function '" + fb.fn.name + "' falls off its end");
        }
        p.functions.push_back(std::move(fb.fn));
        current.reset();
        continue;
      }

      int col = s.column();
      std::string word = s.Ident();
      if (s.Accept(':')) {
        if (fb.label_lines.count(word)) {
          throw ParseError(line_no, col, "duplicate label '" + word + "'");
        }
        fb.label_lines[word] = line_no;
        fb.fn.blocks.push_back(BasicBlock{word, {}});
        fb.open_block = true;
        if (s.AtEnd()) continue;
        col = s.column();
        word = s.Ident();
      }

      auto op = MnemonicFromName(word);
      if (!op) throw ParseError(line_no, col, "unknown mnemonic '" + word + "'");
      Instruction insn;
      insn.op = *op;
      auto reg = [&] {
        int c = s.column();
        try {
          return ParseReg(s);
        } catch (const ParseError& e) {
          throw ParseError(line_no, c, e.message());
        }
      };
      switch (*op) {
        case Mnemonic::kNop:
        case Mnemonic::kRet:
        case Mnemonic::kHalt:
          break;
        case Mnemonic::kMov:
        case Mnemonic::kAdd:
        case Mnemonic::kSub:
        case Mnemonic::kMul:
        case Mnemonic::kXor:
        case Mnemonic::kAnd:
        case Mnemonic::kOr:
        case Mnemonic::kCmp: {
          Register a = reg();
          s.Expect(',');
          insn.operands = {a, reg()};
          break;
        }
        case Mnemonic::kMovi:
        case Mnemonic::kAddi:
        case Mnemonic::kSubi: {
          Register a = reg();
          s.Expect(',');
          int c = s.column();
          Immediate imm = ParseImm(s);
          if (!imm.symbol.empty()) data_refs.push_back({imm.symbol, {line_no, c}});
          insn.operands = {a, imm};
          break;
        }
        case Mnemonic::kLea:
        case Mnemonic::kLoad: {
          Register a = reg();
          s.Expect(',');
          if (s.Peek() == '[') {
            auto [base, off] = ParseMemory(s);
            insn.operands = {a, base, Immediate{off, {}}};
          } else {
            Register b = reg();
            s.Expect(',');
            insn.operands = {a, b, Immediate{s.Number(), {}}};
          }
          break;
        }
        case Mnemonic::kStore: {
          if (s.Peek() == '[') {
            auto [base, off] = ParseMemory(s);
            s.Expect(',');
            insn.operands = {base, reg(), Immediate{off, {}}};
          } else {
            Register base = reg();
            s.Expect(',');
            Register src = reg();
            s.Expect(',');
            insn.operands = {base, src, Immediate{s.Number(), {}}};
          }
          break;
        }
        case Mnemonic::kPush:
        case Mnemonic::kPop:
        case Mnemonic::kOut:
          insn.operands = {reg()};
          break;
        case Mnemonic::kJmp:
        case Mnemonic::kJz:
        case Mnemonic::kJnz:
        case Mnemonic::kJlt:
        case Mnemonic::kJge:
        case Mnemonic::kCall: {
          int c = s.column();
          std::string target = s.Ident();
          if (*op == Mnemonic::kCall) {
            call_refs.push_back({target, {line_no, c}});
          } else {
            fb.branch_refs.push_back({target, {line_no, c}});
          }
          insn.operands = {LabelRef{target}};
          break;
        }
      }
      if (!s.AtEnd()) s.Error("unexpected trailing text");
      if (HasDestination(insn.op) && insn.reg(0).is_sp()) {
        throw ParseError(line_no, col, std::string(Name(insn.op)) + " may not write sp");
      }

      if (!fb.open_block) {
        std::string label = ".L" + std::to_string(fb.auto_labels++);
        while (fb.label_lines.count(label)) label = ".L" + std::to_string(fb.auto_labels++);
        fb.label_lines[label] = line_no;
        fb.fn.blocks.push_back(BasicBlock{label, {}});
        fb.open_block = true;
      }
      fb.fn.blocks.back().instructions.push_back(std::move(insn));
      if (IsTerminator(*op)) fb.open_block = false;
    } catch (const ParseError& e) {
      if (e.line() == 0) throw ParseError(line_no, e.column(), e.message());
      throw;
    }
  }
  if (current) throw ParseError(line_no, 1, "missing '}' for function '" + current->fn.name + "'");
  if (p.functions.empty()) throw ParseError(line_no, 1, "no functions");

  std::set<std::string> function_names;
  for (const auto& f : p.functions) function_names.insert(f.name);
  for (const auto& [name, ref] : call_refs) {
    if (!function_names.count(name)) {
      throw ParseError(ref.line, ref.column, "unresolved label '" + name + "'");
    }
  }
  for (const auto& [name, ref] : data_refs) {
    bool found = false;
    for (const auto& d : p.data) found = found || d.label == name;
    if (!found) throw ParseError(ref.line, ref.column, "unresolved label '" + name + "'");
  }
  if (entry) {
    if (!function_names.count(*entry)) {
      throw ParseError(line_no, 1, "entry function '" + *entry + "' does not exist");
    }
    p.entry_function = *entry;
  } else {
    p.entry_function = function_names.count("main") ? "main" : p.functions.front().name;
  }
  try {
    Validate(p);
  } catch (const ValidationError& e) {
    throw ParseError(line_no, 1, e.what());
  }
  p.symbols = ComputeSymbols(p);
  return p;
}

std::string FormatInstruction(const Instruction& insn) {
  std::ostringstream os;
  os << Name(insn.op);
  auto imm = [](const Immediate& i) {
    return i.symbol.empty() ? std::to_string(i.value) : i.symbol;
  };
  auto mem = [](Register base, std::int32_t off) {
    std::string s = "[" + base.ToString();
    if (off > 0) s += "+" + std::to_string(off);
    if (off < 0) s += "-" + std::to_string(-static_cast<std::int64_t>(off));
    return s + "]";
  };
  switch (insn.op) {
    case Mnemonic::kLoad:
      os << " " << insn.reg(0).ToString() << ", " << mem(insn.reg(1), insn.imm(2).value);
      return os.str();
    case Mnemonic::kStore:
      os << " " << mem(insn.reg(0), insn.imm(2).value) << ", " << insn.reg(1).ToString();
      return os.str();
    default:
      break;
  }
  const char* sep = " ";
  for (const auto& o : insn.operands) {
    os << sep;
    sep = ", ";
    if (const auto* r = std::get_if<Register>(&o)) {
      os << r->ToString();
    } else if (const auto* i = std::get_if<Immediate>(&o)) {
      os << imm(*i);
    } else {
      os << std::get<LabelRef>(o).name;
    }
  }
  return os.str();
}

std::string FormatProgram(const Program& p) {
  std::ostringstream os;
  os << "entry " << p.entry_function << "\n";
  static const char* kHex = "0123456789abcdef";
  for (const auto& d : p.data) {
    os << "data " << d.label << " = hex\"";
    for (auto b : d.bytes) os << kHex[b >> 4] << kHex[b & 15];
    os << "\"";
    if (d.encoding == DataEncoding::kXored) os << " xor " << static_cast<int>(d.key);
    os << "\n";
  }
  for (const auto& f : p.functions) {
    os << "\nfn " << f.name << " {\n";
    for (const auto& b : f.blocks) {
      os << b.label << ":\n";
      for (const auto& insn : b.instructions) os << "  " << FormatInstruction(insn) << "\n";
    }
    os << "}\n";
  }
  return os.str();
}

}  // namespace divlab
