#include "divlab/encoding.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace divlab {

const Region* ByteImage::region(RegionKind kind) const {
  for (const auto& r : layout) {
    if (r.kind == kind) return &r;
  }
  return nullptr;
}

std::span<const std::uint8_t> ByteImage::region_bytes(RegionKind kind) const {
  const Region* r = region(kind);
  if (r == nullptr) return {};
  return std::span<const std::uint8_t>(bytes).subspan(r->offset, r->length);
}

std::span<const std::uint8_t> ByteImage::searchable() const {
  std::uint32_t begin = static_cast<std::uint32_t>(bytes.size());
  std::uint32_t end = 0;
  for (const auto& r : layout) {
    if (r.kind == RegionKind::kSymtab) continue;
    begin = std::min(begin, r.offset);
    end = std::max(end, r.end());
  }
  if (end <= begin) return {};
  return std::span<const std::uint8_t>(bytes).subspan(begin, end - begin);
}

namespace {

void PutU16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint16_t GetU16(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint16_t>(in[at] | (in[at + 1] << 8));
}

std::uint32_t GetU32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(in[at + k]) << (8 * k);
  return v;
}

struct CodeLayout {
  std::map<std::string, std::uint32_t> function_offsets;
  // Per function, label -> offset.
  std::vector<std::map<std::string, std::uint32_t>> label_offsets;
  std::uint32_t code_size = 0;
};

CodeLayout LayOut(const Program& p) {
  CodeLayout layout;
  std::uint32_t pc = 0;
  for (const auto& f : p.functions) {
    layout.function_offsets[f.name] = pc;
    auto& labels = layout.label_offsets.emplace_back();
    for (const auto& b : f.blocks) {
      labels[b.label] = pc;
      for (const auto& insn : b.instructions) {
        pc += static_cast<std::uint32_t>(Info(insn.op).encoded_size);
      }
    }
  }
  layout.code_size = pc;
  return layout;
}

std::uint32_t DataSize(const Program& p) {
  std::size_t n = 0;
  for (const auto& d : p.data) n += PaddedSize(d.bytes.size());
  return static_cast<std::uint32_t>(n);
}

}  // namespace

SymbolTable ComputeSymbols(const Program& p) {
  CodeLayout layout = LayOut(p);
  SymbolTable table;
  for (const auto& f : p.functions) table[f.name] = layout.function_offsets.at(f.name);
  std::uint32_t off = layout.code_size;
  for (const auto& d : p.data) {
    table[d.label] = off;
    off += static_cast<std::uint32_t>(PaddedSize(d.bytes.size()));
  }
  return table;
}

ByteImage Encode(const Program& p) {
  Validate(p);
  const CodeLayout layout = LayOut(p);
  const auto data_addresses = DataAddresses(p);

  ByteImage img;
  auto& out = img.bytes;
  out.reserve(layout.code_size + DataSize(p));
  for (std::size_t fi = 0; fi < p.functions.size(); ++fi) {
    const auto& labels = layout.label_offsets[fi];
    for (const auto& b : p.functions[fi].blocks) {
      for (const auto& insn : b.instructions) {
        const std::uint32_t here = static_cast<std::uint32_t>(out.size());
        const MnemonicInfo& info = Info(insn.op);
        out.push_back(static_cast<std::uint8_t>(insn.op));
        for (const auto& operand : insn.operands) {
          if (const auto* r = std::get_if<Register>(&operand)) {
            out.push_back(r->index);
          } else if (const auto* imm = std::get_if<Immediate>(&operand)) {
            std::uint32_t v = static_cast<std::uint32_t>(imm->value);
            if (!imm->symbol.empty()) v = data_addresses.at(imm->symbol);
            PutU32(out, v);
          } else {
            const auto& name = std::get<LabelRef>(operand).name;
            const std::uint32_t target = insn.op == Mnemonic::kCall
                                             ? layout.function_offsets.at(name)
                                             : labels.at(name);
            const std::int64_t disp = static_cast<std::int64_t>(target) -
                                      (static_cast<std::int64_t>(here) + info.encoded_size);
            if (disp < std::numeric_limits<std::int32_t>::min() ||
                disp > std::numeric_limits<std::int32_t>::max()) {
              throw EncodeError("jump displacement overflow");
            }
            PutU32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(disp)));
          }
        }
      }
    }
  }
  img.layout.push_back({RegionKind::kCode, 0, layout.code_size});

  const std::uint32_t data_start = static_cast<std::uint32_t>(out.size());
  for (const auto& d : p.data) {
    out.insert(out.end(), d.bytes.begin(), d.bytes.end());
    const std::uint8_t pad = d.encoding == DataEncoding::kXored ? d.key : 0;
    out.resize(data_start + (out.size() - data_start + 3) / 4 * 4, pad);
  }
  img.layout.push_back({RegionKind::kData, data_start,
                        static_cast<std::uint32_t>(out.size()) - data_start});

  if (p.symbols) {
    const std::uint32_t sym_start = static_cast<std::uint32_t>(out.size());
    const SymbolTable table = ComputeSymbols(p);
    PutU32(out, static_cast<std::uint32_t>(p.functions.size() + p.data.size()));
    auto entry = [&](std::uint8_t kind, const std::string& name) {
      if (name.size() > 255) throw EncodeError("symbol name too long: " + name);
      out.push_back(kind);
      PutU32(out, table.at(name));
      out.push_back(static_cast<std::uint8_t>(name.size()));
      out.insert(out.end(), name.begin(), name.end());
    };
    for (const auto& f : p.functions) entry(0, f.name);
    for (const auto& d : p.data) entry(1, d.label);
    img.layout.push_back({RegionKind::kSymtab, sym_start,
                          static_cast<std::uint32_t>(out.size()) - sym_start});
  }
  img.entry_offset = layout.function_offsets.at(p.entry_function);
  return img;
}

DecodedInsn DecodeAt(std::span<const std::uint8_t> code, std::uint32_t offset) {
  if (offset >= code.size()) throw DecodeError("offset outside code region");
  auto op = MnemonicFromByte(code[offset]);
  if (!op) {
    std::ostringstream os;
    os << "unknown opcode 0x" << std::hex << static_cast<int>(code[offset]) << " at offset "
       << std::dec << offset;
    throw DecodeError(os.str());
  }
  const MnemonicInfo& info = Info(*op);
  if (offset + static_cast<std::uint64_t>(info.encoded_size) > code.size()) {
    throw DecodeError("truncated instruction at offset " + std::to_string(offset));
  }
  DecodedInsn d;
  d.op = *op;
  d.size = static_cast<std::uint32_t>(info.encoded_size);
  std::uint32_t at = offset + 1;
  int reg_slot = 0;
  for (OperandKind kind : info.operands) {
    if (kind == OperandKind::kReg) {
      std::uint8_t r = code[at++];
      if (r >= Register::kCount) {
        throw DecodeError("invalid register byte at offset " + std::to_string(at - 1));
      }
      (reg_slot++ == 0 ? d.a : d.b) = r;
    } else {
      const std::uint32_t raw = GetU32(code, at);
      at += 4;
      if (kind == OperandKind::kImm) {
        d.imm = static_cast<std::int32_t>(raw);
      } else {
        const std::int64_t target = static_cast<std::int64_t>(offset) + d.size +
                                    static_cast<std::int32_t>(raw);
        if (target < 0 || target >= static_cast<std::int64_t>(code.size())) {
          throw DecodeError("branch target outside code region at offset " +
                            std::to_string(offset));
        }
        d.target = static_cast<std::uint32_t>(target);
      }
    }
  }
  return d;
}

std::vector<std::uint32_t> InstructionStarts(const ByteImage& img) {
  auto code = img.region_bytes(RegionKind::kCode);
  std::vector<std::uint32_t> starts;
  std::uint32_t pc = 0;
  while (pc < code.size()) {
    starts.push_back(pc);
    pc += DecodeAt(code, pc).size;
  }
  return starts;
}

namespace {

void CheckLayout(const ByteImage& img) {
  std::vector<Region> regions = img.layout;
  std::sort(regions.begin(), regions.end(),
            [](const Region& a, const Region& b) { return a.offset < b.offset; });
  std::uint64_t expect = 0;
  std::set<RegionKind> kinds;
  for (const auto& r : regions) {
    if (!kinds.insert(r.kind).second) throw DecodeError("duplicate region kind");
    if (r.offset != expect) throw DecodeError("regions do not tile the image");
    expect = static_cast<std::uint64_t>(r.offset) + r.length;
    if (expect > img.bytes.size()) throw DecodeError("region overrun");
  }
  if (expect != img.bytes.size()) throw DecodeError("regions do not cover the image");
  if (img.region(RegionKind::kCode) == nullptr) throw DecodeError("missing code region");
}

std::string HexName(const char* prefix, std::uint32_t offset) {
  std::ostringstream os;
  os << prefix << std::hex << offset;
  return os.str();
}

Operand MakeOperand(OperandKind kind, const DecodedInsn& d, int& reg_slot,
                    const std::string& target_name) {
  switch (kind) {
    case OperandKind::kReg:
      return Register{reg_slot++ == 0 ? d.a : d.b};
    case OperandKind::kImm:
      return Immediate{d.imm, {}};
    case OperandKind::kLabel:
      return LabelRef{target_name};
  }
  return Register{};
}

}  // namespace

Program Decode(const ByteImage& img) {
  CheckLayout(img);
  auto code = img.region_bytes(RegionKind::kCode);
  const std::uint32_t code_size = static_cast<std::uint32_t>(code.size());
  if (code_size == 0) throw DecodeError("empty code region");

  std::map<std::uint32_t, std::string> function_names;
  std::map<std::uint32_t, std::string> data_names;
  const bool has_symtab = img.region(RegionKind::kSymtab) != nullptr;
  if (has_symtab) {
    auto sym = img.region_bytes(RegionKind::kSymtab);
    if (sym.size() < 4) throw DecodeError("truncated symbol table");
    const std::uint32_t count = GetU32(sym, 0);
    std::size_t at = 4;
    for (std::uint32_t i = 0; i < count; ++i) {
      if (at + 6 > sym.size()) throw DecodeError("truncated symbol table");
      const std::uint8_t kind = sym[at];
      const std::uint32_t offset = GetU32(sym, at + 1);
      const std::uint8_t len = sym[at + 5];
      at += 6;
      if (at + len > sym.size()) throw DecodeError("truncated symbol table");
      std::string name(reinterpret_cast<const char*>(sym.data() + at), len);
      at += len;
      if (kind == 0) {
        function_names[offset] = name;
      } else if (kind == 1) {
        const Region* data = img.region(RegionKind::kData);
        if (data == nullptr || offset < data->offset || offset > data->end()) {
          throw DecodeError("data symbol outside data region");
        }
        data_names[offset - data->offset] = name;
      } else {
        throw DecodeError("unknown symbol kind");
      }
    }
  }

  // Linear sweep.
  std::map<std::uint32_t, DecodedInsn> insns;
  for (std::uint32_t pc = 0; pc < code_size;) {
    DecodedInsn d = DecodeAt(code, pc);
    insns.emplace(pc, d);
    pc += d.size;
  }
  if (!insns.count(img.entry_offset)) throw DecodeError("entry offset is not an instruction");

  std::set<std::uint32_t> function_starts = {0, img.entry_offset};
  for (const auto& [off, name] : function_names) {
    if (!insns.count(off)) throw DecodeError("function symbol not at an instruction");
    function_starts.insert(off);
  }
  for (const auto& [pc, d] : insns) {
    if (d.op == Mnemonic::kCall) {
      if (!insns.count(d.target)) throw DecodeError("call target is not an instruction");
      function_starts.insert(d.target);
    }
  }
  auto fname = [&](std::uint32_t off) {
    auto it = function_names.find(off);
    return it != function_names.end() ? it->second : HexName("f_", off);
  };

  Program p;
  for (auto it = function_starts.begin(); it != function_starts.end(); ++it) {
    const std::uint32_t begin = *it;
    const std::uint32_t end = std::next(it) == function_starts.end() ? code_size : *std::next(it);
    std::set<std::uint32_t> leaders = {begin};
    for (auto i = insns.lower_bound(begin); i != insns.end() && i->first < end; ++i) {
      const DecodedInsn& d = i->second;
      if (IsBranch(d.op)) {
        if (d.target < begin || d.target >= end || !insns.count(d.target)) {
          throw DecodeError("branch target crosses function boundary at offset " +
                            std::to_string(i->first));
        }
        leaders.insert(d.target);
      }
      if (IsTerminator(d.op) && i->first + d.size < end) leaders.insert(i->first + d.size);
    }
    Function f;
    f.name = fname(begin);
    for (auto i = insns.lower_bound(begin); i != insns.end() && i->first < end; ++i) {
      if (leaders.count(i->first)) f.blocks.push_back(BasicBlock{HexName("L", i->first), {}});
      const DecodedInsn& d = i->second;
      Instruction insn;
      insn.op = d.op;
      int reg_slot = 0;
      std::string target;
      if (d.op == Mnemonic::kCall) target = fname(d.target);
      if (IsBranch(d.op)) target = HexName("L", d.target);
      for (OperandKind kind : Info(d.op).operands) {
        insn.operands.push_back(MakeOperand(kind, d, reg_slot, target));
      }
      f.blocks.back().instructions.push_back(std::move(insn));
    }
    p.functions.push_back(std::move(f));
  }
  p.entry_function = fname(img.entry_offset);

  if (const Region* data = img.region(RegionKind::kData); data != nullptr && data->length > 0) {
    auto bytes = img.region_bytes(RegionKind::kData);
    std::set<std::uint32_t> cuts = {0};
    for (const auto& [off, name] : data_names) {
      if (off < data->length) cuts.insert(off);
    }
    for (auto it = cuts.begin(); it != cuts.end(); ++it) {
      const std::uint32_t b = *it;
      const std::uint32_t e = std::next(it) == cuts.end() ? data->length : *std::next(it);
      if (b % 4 != 0) throw DecodeError("misaligned data symbol");
      DataBlob blob;
      auto named = data_names.find(b);
      blob.label = named != data_names.end() ? named->second : HexName("d_", b);
      blob.bytes.assign(bytes.begin() + b, bytes.begin() + e);
      p.data.push_back(std::move(blob));
    }
  }
  if (has_symtab) p.symbols = ComputeSymbols(p);
  try {
    Validate(p);
  } catch (const ValidationError& e) {
    throw DecodeError(std::string("decoded program is invalid: ") + e.what());
  }
  return p;
}

std::vector<std::uint8_t> Serialize(const ByteImage& img) {
  std::vector<std::uint8_t> out = {'T', 'B', 'I', 'N'};
  PutU16(out, kTbinVersion);
  PutU32(out, img.entry_offset);
  PutU16(out, static_cast<std::uint16_t>(img.layout.size()));
  PutU32(out, 0);
  for (const auto& r : img.layout) {
    out.push_back(static_cast<std::uint8_t>(r.kind));
    PutU32(out, r.offset);
    PutU32(out, r.length);
  }
  out.insert(out.end(), img.bytes.begin(), img.bytes.end());
  return out;
}

ByteImage Deserialize(std::span<const std::uint8_t> file) {
  if (file.size() < 16 || std::memcmp(file.data(), "TBIN", 4) != 0) {
    throw DecodeError("not a TBIN image");
  }
  if (GetU16(file, 4) != kTbinVersion) throw DecodeError("unsupported TBIN version");
  ByteImage img;
  img.entry_offset = GetU32(file, 6);
  const std::uint16_t count = GetU16(file, 10);
  std::size_t at = 16;
  if (file.size() < at + 9u * count) throw DecodeError("truncated region table");
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::uint8_t kind = file[at];
    if (kind > 2) throw DecodeError("unknown region kind");
    img.layout.push_back({static_cast<RegionKind>(kind), GetU32(file, at + 1), GetU32(file, at + 5)});
    at += 9;
  }
  img.bytes.assign(file.begin() + static_cast<std::ptrdiff_t>(at), file.end());
  CheckLayout(img);
  return img;
}

void WriteImage(const std::filesystem::path& path, const ByteImage& img) {
  const auto bytes = Serialize(img);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

ByteImage ReadImage(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return Deserialize(bytes);
}

}  // namespace divlab
