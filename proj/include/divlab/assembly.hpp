#ifndef DIVLAB_ASSEMBLY_HPP
#define DIVLAB_ASSEMBLY_HPP

#include <stdexcept>
#include <string>
#include <string_view>

#include "divlab/isa.hpp"

namespace divlab {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, const std::string& message);

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  int line_;
  int column_;
  std::string message_;
};

// Parses .tasm source:
//
//   ; comment
//   entry main
//   data msg = hex"48656c6c6f"          (optionally followed by `xor 0xNN`; the
//                                        hex then gives the stored, encoded bytes)
//   data table = words 1, 2, -3         (32-bit little-endian words)
//   fn main {
//   entry:
//     movi r1, msg                      (data label as immediate)
//     load r2, [r1+4]
//     store [r1+8], r2
//     out r2
//     halt
//   }
//
// Without an `entry` directive the function named main (or else the first
// function) is the entry. The result carries a symbol table.
Program ParseAssembly(std::string_view text);

// Emits source that ParseAssembly reads back to an equal Program (symbol
// table presence aside).
std::string FormatProgram(const Program& p);
std::string FormatInstruction(const Instruction& insn);

}  // namespace divlab

#endif  // DIVLAB_ASSEMBLY_HPP
