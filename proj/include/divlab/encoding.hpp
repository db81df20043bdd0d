#ifndef DIVLAB_ENCODING_HPP
#define DIVLAB_ENCODING_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "divlab/isa.hpp"

namespace divlab {

enum class RegionKind : std::uint8_t { kCode = 0, kData = 1, kSymtab = 2 };

struct Region {
  RegionKind kind = RegionKind::kCode;
  std::uint32_t offset = 0;
  std::uint32_t length = 0;

  std::uint32_t end() const { return offset + length; }
  friend bool operator==(const Region&, const Region&) = default;
};

// Flat encoding of a Program: code region first, then data, then the
// optional symbol table. Regions tile `bytes` exactly.
struct ByteImage {
  std::vector<std::uint8_t> bytes;
  std::vector<Region> layout;
  std::uint32_t entry_offset = 0;

  const Region* region(RegionKind kind) const;
  std::span<const std::uint8_t> region_bytes(RegionKind kind) const;
  // Code and data bytes, the part byte-level similarity looks at.
  std::span<const std::uint8_t> searchable() const;

  friend bool operator==(const ByteImage&, const ByteImage&) = default;
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ByteImage Encode(const Program& p);

// Symbol offsets as Encode would lay them out.
SymbolTable ComputeSymbols(const Program& p);

// Rebuilds a Program with synthetic labels. Function boundaries come from
// the entry offset and call targets (names from the symbol table when it is
// present); data becomes one plain blob per symbol-table entry, or a single
// blob otherwise.
Program Decode(const ByteImage& img);

// One instruction decoded at a code offset; branch and call targets are
// absolute code offsets.
struct DecodedInsn {
  Mnemonic op = Mnemonic::kNop;
  std::uint8_t a = 0;
  std::uint8_t b = 0;
  std::int32_t imm = 0;
  std::uint32_t target = 0;
  std::uint32_t size = 1;
};

// Throws DecodeError on an unknown opcode, a bad register byte or truncation.
DecodedInsn DecodeAt(std::span<const std::uint8_t> code, std::uint32_t offset);

// Linear sweep over the code region; instruction start offsets in order.
std::vector<std::uint32_t> InstructionStarts(const ByteImage& img);

// .tbin container: 16-byte header (magic "TBIN", version u16, entry u32,
// region count u16, 4 reserved bytes), region table of (kind u8, offset u32,
// length u32), raw bytes. Little-endian throughout.
inline constexpr std::uint16_t kTbinVersion = 1;
std::vector<std::uint8_t> Serialize(const ByteImage& img);
ByteImage Deserialize(std::span<const std::uint8_t> file);

void WriteImage(const std::filesystem::path& path, const ByteImage& img);
ByteImage ReadImage(const std::filesystem::path& path);

}  // namespace divlab

#endif  // DIVLAB_ENCODING_HPP
