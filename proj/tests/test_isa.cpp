#include <doctest.h>

#include <map>
#include <string>

#include "corpus.hpp"
#include "divlab/assembly.hpp"
#include "divlab/encoding.hpp"
#include "divlab/interpreter.hpp"
#include "random_program.hpp"

using namespace divlab;

namespace {

// Opcode byte and encoded length per mnemonic, written out by hand.
const std::map<std::string, std::pair<int, int>> kTable = {
    {"nop", {0x00, 1}},   {"mov", {0x01, 3}},   {"movi", {0x02, 6}},  {"lea", {0x03, 7}},
    {"add", {0x04, 3}},   {"sub", {0x05, 3}},   {"mul", {0x06, 3}},   {"xor", {0x07, 3}},
    {"and", {0x08, 3}},   {"or", {0x09, 3}},    {"addi", {0x0A, 6}},  {"subi", {0x0B, 6}},
    {"load", {0x0C, 7}},  {"store", {0x0D, 7}}, {"push", {0x0E, 2}},  {"pop", {0x0F, 2}},
    {"cmp", {0x10, 3}},   {"jmp", {0x11, 5}},   {"jz", {0x12, 5}},    {"jnz", {0x13, 5}},
    {"jlt", {0x14, 5}},   {"jge", {0x15, 5}},   {"call", {0x16, 5}},  {"ret", {0x17, 1}},
    {"out", {0x18, 2}},   {"halt", {0x19, 1}},
};

std::vector<std::uint8_t> CodeOf(const std::string& text) {
  const ByteImage img = Encode(ParseAssembly(text));
  const auto code = img.region_bytes(RegionKind::kCode);
  return {code.begin(), code.end()};
}

}  // namespace

TEST_CASE("minimal program parses into one block of three instructions") {
  const Program p = ParseAssembly("fn main {\nentry: movi r0, 7\nout r0\nhalt\n}\n");
  REQUIRE(p.functions.size() == 1);
  REQUIRE(p.functions[0].blocks.size() == 1);
  CHECK(p.functions[0].blocks[0].instructions.size() == 3);
  CHECK(p.entry_function == "main");
}

TEST_CASE("parser rejections") {
  CHECK_THROWS_WITH_AS(ParseAssembly("fn main {\nentry: bogus r0\n}\n"),
                       doctest::Contains("unknown mnemonic"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\nmovi r0\nhalt\n}\n"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\nmovi r0, r1\nhalt\n}\n"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\na: nop\na: halt\n}\n"), ParseError);
  CHECK_THROWS_WITH_AS(ParseAssembly("fn main {\njmp nowhere\n}\n"),
                       doctest::Contains("unresolved label"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\ncall nobody\nhalt\n}\n"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\nhalt\n}\nfn main {\nhalt\n}\n"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\nmovi r0, 0x100000000\nhalt\n}\n"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\nmovi sp, 1\nhalt\n}\n"), ParseError);
  CHECK_THROWS_AS(ParseAssembly("fn main {\nmovi r0, 1\n}\n"), ParseError);
}

TEST_CASE("parse errors carry line numbers") {
  try {
    ParseAssembly("fn main {\n  movi r0, 1\n  frob r1\n  halt\n}\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("opcode numbering and encoded sizes") {
  for (Mnemonic m : AllMnemonics()) {
    const std::string name(Name(m));
    REQUIRE(kTable.count(name));
    CHECK(static_cast<int>(m) == kTable.at(name).first);
    CHECK(Info(m).encoded_size == kTable.at(name).second);
  }
  CHECK(AllMnemonics().size() == 26);
  for (int b = 0xF0; b <= 0xFF; ++b) CHECK_FALSE(MnemonicFromByte(static_cast<std::uint8_t>(b)));
}

TEST_CASE("byte encodings") {
  CHECK(CodeOf("fn main {\nnop\nhalt\n}\n") == std::vector<std::uint8_t>{0x00, 0x19});
  CHECK(CodeOf("fn main {\nmovi r3, 7\nhalt\n}\n") ==
        std::vector<std::uint8_t>{0x02, 0x03, 0x07, 0x00, 0x00, 0x00, 0x19});
  CHECK(CodeOf("fn main {\nload r1, [sp+8]\nstore [r2+4], r3\nhalt\n}\n") ==
        std::vector<std::uint8_t>{0x0C, 0x01, 0x08, 0x08, 0, 0, 0, 0x0D, 0x02, 0x03, 0x04, 0, 0, 0, 0x19});
  // Displacement is relative to the end of the branch.
  CHECK(CodeOf("fn main {\nl: jmp l\n}\n") == std::vector<std::uint8_t>{0x11, 0xFB, 0xFF, 0xFF, 0xFF});
  CHECK(CodeOf("fn main {\nmovi r0, -1\nhalt\n}\n") ==
        std::vector<std::uint8_t>{0x02, 0x00, 0xFF, 0xFF, 0xFF, 0xFF, 0x19});
}

TEST_CASE("every instruction kind round-trips through the encoder") {
  const std::string text = R"(entry main
data d = hex"0102030405" xor 0x5a
data w = words 1, -2, 0x7fffffff
fn main {
start:
  nop
  mov r1, r2
  movi r3, d
  lea r4, r5, -12
  add r1, r2
  sub r1, r2
  mul r1, r2
  xor r1, r1
  and r6, r7
  or r6, r7
  addi r0, 5
  subi sp, 8
  addi sp, 8
  load r1, [r3+4]
  store [r3-4], r1
  push r1
  pop r2
  cmp r1, r2
  jz a
  jnz a
a:
  cmp r1, r2
  jlt b
  jge b
b:
  call helper
  out r0
  jmp done
done:
  halt
}
fn helper {
  movi r0, 1
  ret
}
)";
  const Program p = ParseAssembly(text);
  const ByteImage img = Encode(p);
  CHECK(Encode(p) == img);
  const Program back = Decode(img);
  CHECK(Encode(back).bytes == img.bytes);
  CHECK(FormatProgram(ParseAssembly(FormatProgram(p))) == FormatProgram(p));
  for (Mnemonic m : AllMnemonics()) CHECK(FormatProgram(p).find(Name(m)) != std::string::npos);
}

TEST_CASE("decode rejects bad code") {
  ByteImage img = Encode(ParseAssembly("fn main {\nmovi r0, 1\nhalt\n}\n"));
  ByteImage bad = img;
  bad.bytes[0] = 0xFF;
  CHECK_THROWS_WITH_AS(Decode(bad), doctest::Contains("unknown opcode"), DecodeError);
  ByteImage reg = img;
  reg.bytes[1] = 9;
  CHECK_THROWS_AS(Decode(reg), DecodeError);
  ByteImage trunc = img;
  trunc.bytes.resize(3);
  trunc.layout = {{RegionKind::kCode, 0, 3}};
  CHECK_THROWS_WITH_AS(Decode(trunc), doctest::Contains("truncated"), DecodeError);
  ByteImage overrun = img;
  overrun.layout.back().length += 100;
  CHECK_THROWS_AS(Decode(overrun), DecodeError);
}

TEST_CASE("container serialization") {
  const ByteImage img = Encode(testing_support::LoadCorpus("strsearch"));
  const auto file = Serialize(img);
  REQUIRE(file.size() == 16 + 9 * img.layout.size() + img.bytes.size());
  CHECK(std::string(file.begin(), file.begin() + 4) == "TBIN");
  CHECK(Deserialize(file) == img);
  auto bad = file;
  bad[0] = 'X';
  CHECK_THROWS_AS(Deserialize(bad), DecodeError);
  auto short_file = file;
  short_file.resize(10);
  CHECK_THROWS_AS(Deserialize(short_file), DecodeError);
}

TEST_CASE("regions: code, data, then optional symtab") {
  Program p = testing_support::LoadCorpus("fib");
  const ByteImage with = Encode(p);
  REQUIRE(with.layout.size() == 3);
  CHECK(with.layout[0].kind == RegionKind::kCode);
  CHECK(with.layout[1].kind == RegionKind::kData);
  CHECK(with.layout[2].kind == RegionKind::kSymtab);
  p.symbols.reset();
  const ByteImage without = Encode(p);
  CHECK(without.layout.size() == 2);
  CHECK(without.searchable().size() == without.bytes.size());
}

TEST_CASE("decode keeps symbol names when a symtab is present") {
  const Program p = testing_support::LoadCorpus("fib");
  const Program back = Decode(Encode(p));
  CHECK(back.find_function("fib_step") != nullptr);
  CHECK(back.entry_function == "main");
  REQUIRE(back.data.size() == 1);
  CHECK(back.data[0].label == "state");
}

TEST_CASE("decode(encode(P)) interprets identically: corpus and 200 random programs") {
  int checked = 0;
  for (const auto& [name, p] : testing_support::AllCorpus()) {
    const ByteImage img = Encode(p);
    const Program back = Decode(img);
    CHECK(Encode(back).bytes == img.bytes);
    for (const auto& in : StandardInputs()) {
      CHECK_MESSAGE(TraceEquivalent(Interpret(img, in), Interpret(Encode(back), in)), name);
    }
    ++checked;
  }
  CHECK(checked >= 8);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Program p = ParseAssembly(gen::RandomProgramText(seed));
    const ByteImage img = Encode(p);
    const ByteImage again = Encode(Decode(img));
    for (const auto& in : StandardInputs()) {
      const Trace a = Interpret(img, in);
      CHECK_MESSAGE(TraceEquivalent(a, Interpret(again, in)), "seed " << seed);
      CHECK_MESSAGE(a.termination == Termination::kHalted, "seed " << seed);
    }
  }
}

TEST_CASE("different instruction streams give different code regions") {
  const auto a = CodeOf("fn main {\nmovi r1, 1\nhalt\n}\n");
  const auto b = CodeOf("fn main {\nmovi r2, 1\nhalt\n}\n");
  const auto c = CodeOf("fn main {\nmovi r1, 2\nhalt\n}\n");
  const auto d = CodeOf("fn main {\naddi r1, 1\nhalt\n}\n");
  CHECK(a != b);
  CHECK(a != c);
  CHECK(a != d);
}

TEST_CASE("validation of hand-built programs") {
  Program p;
  p.entry_function = "main";
  p.functions.push_back({"main", {{"b0", {MakeInsn(Mnemonic::kMovi, Register::R(0), 1)}}}});
  CHECK_THROWS_AS(Validate(p), ValidationError);  // falls off the end
  p.functions[0].blocks[0].instructions.push_back(MakeInsn(Mnemonic::kHalt));
  CHECK_NOTHROW(Validate(p));
  Program q = p;
  q.functions[0].blocks[0].instructions.insert(q.functions[0].blocks[0].instructions.begin(),
                                               MakeBranch(Mnemonic::kJmp, "b0"));
  CHECK_THROWS_AS(Validate(q), ValidationError);  // branch before the end of a block
  Program r = p;
  r.entry_function = "missing";
  CHECK_THROWS_AS(Validate(r), ValidationError);
}

TEST_CASE("effects") {
  const auto xor_self = EffectsOf(MakeInsn(Mnemonic::kXor, Register::R(3), Register::R(3)));
  CHECK(xor_self.uses == 0);
  CHECK(xor_self.defs == RegBit(Register::R(3)));
  const auto call = EffectsOf(MakeBranch(Mnemonic::kCall, "f"));
  CHECK((call.defs & kGprMask) == kGprMask);
  CHECK(call.memory);
  const auto cmp = EffectsOf(MakeInsn(Mnemonic::kCmp, Register::R(1), Register::R(2)));
  CHECK(cmp.defs == kFlagsBit);
  const auto jz = EffectsOf(MakeBranch(Mnemonic::kJz, "x"));
  CHECK(jz.uses == kFlagsBit);
  const auto ret = EffectsOf(MakeInsn(Mnemonic::kRet));
  CHECK((ret.uses & RegBit(Register::R(0))) != 0);
}
