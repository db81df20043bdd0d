#include <doctest.h>

#include <algorithm>
#include <climits>
#include <set>

#include "corpus.hpp"
#include "divlab/assembly.hpp"
#include "divlab/diversifier.hpp"
#include "divlab/encoding.hpp"
#include "divlab/interpreter.hpp"
#include "oracles.hpp"
#include "random_program.hpp"
#include "usedef.hpp"

using namespace divlab;

namespace {

DiversityConfig Cfg(std::uint64_t seed) {
  DiversityConfig c;
  c.seed = seed;
  return c;
}

void CheckSameTraces(const Program& a, const Program& b, const std::string& what) {
  const ByteImage ia = Encode(a), ib = Encode(b);
  for (const auto& in : StandardInputs()) {
    const Trace ta = Interpret(ia, in), tb = Interpret(ib, in);
    CHECK_MESSAGE(TraceEquivalent(ta, tb), what);
  }
}

std::vector<std::uint8_t> Code(const Program& p) {
  const ByteImage img = Encode(p);
  const auto c = img.region_bytes(RegionKind::kCode);
  return {c.begin(), c.end()};
}

std::vector<Instruction> Flat(const Program& p) {
  std::vector<Instruction> out;
  for (const auto& f : p.functions) {
    for (const auto& b : f.blocks) out.insert(out.end(), b.instructions.begin(), b.instructions.end());
  }
  return out;
}

// Class members counted straight from the instruction fields.
int CountClassMembers(const Program& p) {
  int n = 0;
  for (const auto& in : Flat(p)) {
    const std::string name(Name(in.op));
    if (name == "mov") ++n;
    if (name == "lea" && in.imm(2).symbol.empty() && in.imm(2).value == 0) ++n;
    if (name == "movi" && in.imm(1).symbol.empty() && in.imm(1).value == 0) ++n;
    if (name == "xor" && in.reg(0) == in.reg(1)) ++n;
    if ((name == "addi" || name == "subi") && in.imm(1).symbol.empty() && in.imm(1).value != INT_MIN) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("config parsing and checking") {
  DiversityConfig c = ParseConfig("# comment\nseed = 0x10\np_nop=0.25\nenable.garbage = false\n");
  CHECK(c.seed == 16);
  CHECK(c.p_nop == 0.25);
  CHECK_FALSE(c.enable.garbage);
  CHECK(ParseConfig(FormatConfig(c)) == c);
  CHECK_THROWS_AS(ParseConfig("p_nop = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("max_garbage_len = 0\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("seed\n"), ConfigError);
  const DiversityConfig only = OnlyPasses(DiversityConfig{}, "nops,blocks");
  CHECK(only.enable.nops);
  CHECK(only.enable.blocks);
  CHECK_FALSE(only.enable.data);
  CHECK_FALSE(only.enable.garbage);
  CHECK_THROWS_AS(OnlyPasses(DiversityConfig{}, "nops,frobnicate"), ConfigError);
}

TEST_CASE("substitution") {
  const Program p = ParseAssembly("fn main {\nmovi r2, 4\nmov r1, r2\nout r1\nhalt\n}\n");
  DiversityConfig c = Cfg(3);
  c.p_substitute = 0;
  CHECK(SubstituteInstructions(p, c) == p);
  c.p_substitute = 1;
  const Program q = SubstituteInstructions(p, c);
  CHECK(q.functions[0].blocks[0].instructions[1] ==
        MakeInsn(Mnemonic::kLea, Register::R(1), Register::R(2), 0));
  CheckSameTraces(p, q, "mov -> lea");

  for (const auto& [name, prog] : testing_support::AllCorpus()) {
    const Program s = SubstituteInstructions(prog, c);
    const auto before = Flat(prog), after = Flat(s);
    REQUIRE(before.size() == after.size());
    int flips = 0;
    for (std::size_t i = 0; i < before.size(); ++i) flips += before[i] != after[i];
    CHECK_MESSAGE(flips == CountClassMembers(prog), name);
    CheckSameTraces(prog, s, name);
  }
}

TEST_CASE("substitution leaves INT_MIN immediates alone") {
  const Program p = ParseAssembly("fn main {\naddi r1, -2147483648\nout r1\nhalt\n}\n");
  DiversityConfig c = Cfg(1);
  c.p_substitute = 1;
  CHECK(SubstituteInstructions(p, c) == p);
}

TEST_CASE("reordering keeps dependency chains") {
  const Program p = ParseAssembly("fn main {\nmovi r1, 1\nmovi r2, 2\nout r1\nhalt\n}\n");
  const auto& orig = p.functions[0].blocks[0].instructions;
  DiversityConfig c = Cfg(0);
  c.p_reorder = 1;
  std::set<int> positions_of_r2;
  for (std::uint64_t s = 0; s < 200; ++s) {
    c.seed = s;
    const Program reordered = ReorderInstructions(p, c);
    const auto& got = reordered.functions[0].blocks[0].instructions;
    REQUIRE(got.size() == 4);
    CHECK(got.back() == orig.back());
    const auto r1 = std::find(got.begin(), got.end(), orig[0]) - got.begin();
    const auto out = std::find(got.begin(), got.end(), orig[2]) - got.begin();
    CHECK(r1 < out);
    positions_of_r2.insert(static_cast<int>(std::find(got.begin(), got.end(), orig[1]) - got.begin()));
  }
  CHECK(positions_of_r2 == std::set<int>{0, 1, 2});
}

TEST_CASE("single-instruction block is unchanged by reordering") {
  const Program p = ParseAssembly("fn main {\nhalt\n}\n");
  DiversityConfig c = Cfg(9);
  c.p_reorder = 1;
  CHECK(ReorderInstructions(p, c) == p);
}

TEST_CASE("reorderings are topological orders of the dependency DAG") {
  for (const std::string body : {
           "movi r1, 1\nmovi r2, 2\nmovi r3, 3\nmovi r4, 4\nmovi r5, 5\nmovi r6, 6\n",
           "movi r1, 1\nmovi r2, 2\nadd r1, r2\nmovi r3, 3\nout r3\nout r1\n",
           "movi r1, 1\npush r1\nmovi r2, 2\ncmp r1, r2\nmov r3, r1\npop r4\n",
       }) {
    const Program p = ParseAssembly("fn main {\n" + body + "halt\n}\n");
    const auto& orig = p.functions[0].blocks[0].instructions;
    const int n = static_cast<int>(orig.size()) - 1;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const auto a = oracle::Classify(orig[static_cast<std::size_t>(i)]);
        const auto b = oracle::Classify(orig[static_cast<std::size_t>(j)]);
        bool dep = oracle::IsMemoryOp(orig[static_cast<std::size_t>(i)]) &&
                   oracle::IsMemoryOp(orig[static_cast<std::size_t>(j)]);
        for (int r : a.defs) dep |= b.uses.count(r) || b.defs.count(r);
        for (int r : a.uses) dep |= b.defs.count(r) > 0;
        if (dep) edges.push_back({i, j});
      }
    }
    const auto valid = oracle::AllTopologicalOrders(n, edges);
    DiversityConfig c = Cfg(0);
    c.p_reorder = 1;
    std::set<std::vector<int>> seen;
    for (std::uint64_t s = 0; s < 500; ++s) {
      c.seed = s;
      const Program reordered = ReorderInstructions(p, c);
    const auto& got = reordered.functions[0].blocks[0].instructions;
      REQUIRE(got.size() == orig.size());
      CHECK(got.back() == orig.back());
      std::vector<int> order;
      for (int k = 0; k < n; ++k) {
        order.push_back(static_cast<int>(std::find(orig.begin(), orig.end(), got[static_cast<std::size_t>(k)]) -
                                         orig.begin()));
      }
      CHECK_MESSAGE(valid.count(order), body);
      seen.insert(order);
    }
    // Draws cover a good share of the valid orders.
    CHECK(seen.size() >= std::min<std::size_t>(valid.size(), 200));
  }
}

TEST_CASE("register permutation") {
  const Program p = ParseAssembly("fn main {\nmovi r1, 5\nout r1\nhalt\n}\n");
  bool saw_identity = false, saw_other = false;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Program q = PermuteRegisters(p, Cfg(s));
    const Register r = q.functions[0].blocks[0].instructions[0].reg(0);
    CHECK(q.functions[0].blocks[0].instructions[1].reg(0) == r);
    CHECK(r.index >= 1);
    CHECK(r.index <= 7);
    if (r.index == 1) {
      saw_identity = true;
    } else {
      saw_other = true;
    }
    CheckSameTraces(p, q, "permutation");
  }
  CHECK(saw_identity);
  CHECK(saw_other);

  for (const auto& [name, prog] : testing_support::AllCorpus()) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Program q = PermuteRegisters(prog, Cfg(s));
      CheckSameTraces(prog, q, name);
      // One bijection over r1..r7 for the whole program; r0 and sp fixed.
      std::map<int, int> map;
      const auto a = Flat(prog), b = Flat(q);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < a[i].operands.size(); ++k) {
          if (!std::holds_alternative<Register>(a[i].operands[k])) continue;
          const int from = a[i].reg(k).index, to = b[i].reg(k).index;
          if (from == 0 || from == 8) CHECK(to == from);
          auto [it, fresh] = map.emplace(from, to);
          CHECK(it->second == to);
        }
      }
      std::set<int> images;
      for (auto [k, v] : map) images.insert(v);
      CHECK(images.size() == map.size());
    }
  }
}

TEST_CASE("nop insertion") {
  const Program p = ParseAssembly("fn main {\nmovi r0, 1\nout r0\nhalt\n}\n");
  DiversityConfig c = Cfg(5);
  c.p_nop = 0;
  CHECK(InsertNops(p, c) == p);
  c.p_nop = 1;
  c.max_garbage_len = 1;
  const Program q = InsertNops(p, c);
  CHECK(q.instruction_count() == 6);
  int nops = 0;
  for (const auto& in : Flat(q)) nops += in.op == Mnemonic::kNop;
  CHECK(nops == 3);

  const Program cmp = ParseAssembly("fn main {\ncmp r0, r1\njz x\nhalt\nx: halt\n}\n");
  const auto got = Flat(InsertNops(cmp, c));
  for (std::size_t i = 0; i + 1 < got.size(); ++i) {
    if (got[i].op == Mnemonic::kCmp) CHECK(got[i + 1].op == Mnemonic::kJz);
  }

  const Program sort = testing_support::LoadCorpus("sort");
  DiversityConfig half = Cfg(42);
  half.p_nop = 0.5;
  const Program nopped = InsertNops(sort, half);
  CheckSameTraces(sort, nopped, "nops");
  CHECK(Code(nopped).size() > Code(sort).size());
}

TEST_CASE("garbage goes only into dead registers") {
  DiversityConfig c = Cfg(0);
  c.p_garbage = 1;
  c.max_garbage_len = 3;
  // Every register is read around the loop before it is written.
  const Program all_live = ParseAssembly(
      "fn main {\nL: out r0\nout r1\nout r2\nout r3\nout r4\nout r5\nout r6\nout r7\njmp L\n}\n");
  for (std::uint64_t s = 0; s < 20; ++s) {
    c.seed = s;
    CHECK(InsertGarbage(all_live, c) == all_live);
  }
  // Only r5 is ever dead.
  const Program only_r5 = ParseAssembly(
      "fn main {\nL: out r0\nout r1\nout r2\nout r3\nout r4\nout r6\nout r7\nmovi r5, 1\nout r5\njmp L\n}\n");
  const auto orig = Flat(only_r5);
  bool inserted = false;
  for (std::uint64_t s = 0; s < 20; ++s) {
    c.seed = s;
    const auto got = Flat(InsertGarbage(only_r5, c));
    std::size_t k = 0;
    for (const auto& in : got) {
      if (k < orig.size() && in == orig[k]) {
        ++k;
        continue;
      }
      inserted = true;
      const oracle::UseDef u = oracle::Classify(in);
      CHECK(u.defs.count(5) == 1);
      for (int reg = 0; reg <= 8; ++reg) {
        if (reg != 5) CHECK(u.defs.count(reg) == 0);
      }
    }
    CHECK(k == orig.size());
  }
  CHECK(inserted);

  for (const auto& [name, prog] : testing_support::AllCorpus()) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Program g = InsertGarbage(prog, Cfg(s));
      CheckSameTraces(prog, g, name);
      CHECK(Code(g).size() >= Code(prog).size());
    }
  }
}

TEST_CASE("block randomization") {
  const Program one = ParseAssembly("fn main {\nmovi r0, 1\nout r0\nhalt\n}\n");
  DiversityConfig c = Cfg(1);
  c.p_split = 0;
  CHECK(RandomizeBlocks(one, c) == one);

  // Split at index 1 with the halves separated: the first half must jump.
  const Program p =
      ParseAssembly("fn main {\nmovi r0, 1\nout r0\njmp B\nA: halt\nB: movi r1, 2\nout r1\njmp A\n}\n");
  bool found = false;
  c.p_split = 0.5;
  for (std::uint64_t s = 0; s < 200; ++s) {
    c.seed = s;
    const Program q = RandomizeBlocks(p, c);
    CheckSameTraces(p, q, "blocks");
    const auto& blocks = q.functions[0].blocks;
    const auto& first = blocks[0].instructions;
    if (first[0].op != Mnemonic::kMovi || first.size() > 2 || first.back().op == Mnemonic::kOut) continue;
    // Split after the movi; the second half starts with `out r0`.
    const Instruction out_r0 = MakeInsn(Mnemonic::kOut, Register::R(0));
    int second = -1;
    for (std::size_t b = 1; b < blocks.size(); ++b) {
      if (blocks[b].instructions[0] == out_r0) second = static_cast<int>(b);
    }
    REQUIRE(second > 0);
    CHECK(blocks[static_cast<std::size_t>(second)].label.rfind("_s", 0) == 0);
    if (second == 1) {
      CHECK(first.size() == 1);
    } else {
      found = true;
      REQUIRE(first.size() == 2);
      CHECK(first[1] == MakeBranch(Mnemonic::kJmp, blocks[static_cast<std::size_t>(second)].label));
    }
  }
  CHECK(found);

  for (const auto& [name, prog] : testing_support::AllCorpus()) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Program q = RandomizeBlocks(prog, Cfg(s));
      CheckSameTraces(prog, q, name);
      for (std::size_t f = 0; f < prog.functions.size(); ++f) {
        CHECK(q.functions[f].blocks.size() >= prog.functions[f].blocks.size());
        CHECK(q.functions[f].blocks[0].instructions[0] == prog.functions[f].blocks[0].instructions[0]);
      }
    }
  }
}

TEST_CASE("data obfuscation") {
  const Program p = ParseAssembly(R"(entry main
data z = hex"0000"
fn main {
  movi r1, z
  load r2, [r1+0]
  out r2
  halt
}
)");
  bool saw_ab = false, saw_zero = false;
  for (std::uint64_t s = 0; s < 5000 && !(saw_ab && saw_zero); ++s) {
    const Program q = ObfuscateData(p, Cfg(s));
    REQUIRE(q.data.size() == 1);
    CHECK(q.data[0].encoding == DataEncoding::kXored);
    if (q.data[0].key == 0xAB) {
      saw_ab = true;
      CHECK(q.data[0].bytes == std::vector<std::uint8_t>{0xAB, 0xAB});
      const Trace t = Interpret(Encode(q), {});
      CHECK(t.outputs == std::vector<std::uint32_t>{0});
    }
    if (q.data[0].key == 0) {
      saw_zero = true;
      CHECK(q.data[0].bytes == p.data[0].bytes);
      CheckSameTraces(p, q, "zero key");
    }
  }
  CHECK(saw_ab);
  CHECK(saw_zero);

  // String blobs printed byte by byte.
  for (const std::string name : {"strsearch", "backdoor", "statemachine"}) {
    const Program prog = testing_support::LoadCorpus(name);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Program q = ObfuscateData(prog, Cfg(s));
      CheckSameTraces(prog, q, name);
      CHECK(q.functions.front().name == std::string(kDecoderName));
      const Function* entry = q.find_function(q.entry_function);
      REQUIRE(entry != nullptr);
      CHECK(entry->blocks[0].instructions[0].op == Mnemonic::kCall);
      CHECK(entry->blocks[0].instructions[0].label() == std::string(kDecoderName));
    }
  }

  // Already-encoded blobs compose keys.
  const Program pre = ParseAssembly("entry main\ndata a = hex\"1122\" xor 0x0f\nfn main {\nmovi r1, a\nload r2, [r1+0]\nout r2\nhalt\n}\n");
  for (std::uint64_t s = 0; s < 5; ++s) CheckSameTraces(pre, ObfuscateData(pre, Cfg(s)), "pre-xored");

  // No blobs: the decoder is just a return.
  const Program none = ParseAssembly("fn main {\nmovi r0, 1\nout r0\nhalt\n}\n");
  const Program q = ObfuscateData(none, Cfg(1));
  REQUIRE(q.find_function(kDecoderName) != nullptr);
  CHECK(q.find_function(kDecoderName)->instruction_count() == 1);
  CheckSameTraces(none, q, "no blobs");
}

TEST_CASE("symbol stripping") {
  const Program p = testing_support::LoadCorpus("checksum");
  const Program s = StripSymbols(p);
  CHECK_FALSE(s.symbols.has_value());
  CHECK(Encode(s).layout.size() == 2);
  CHECK(StripSymbols(s) == s);
  const ByteImage a = Encode(p), b = Encode(s);
  CHECK(std::ranges::equal(a.searchable(), b.searchable()));
}

TEST_CASE("pipeline") {
  const Program fib = testing_support::LoadCorpus("fib");
  DiversityConfig id = Cfg(77);
  id.identity = true;
  CHECK(Encode(Diversify(fib, id)) == Encode(StripSymbols(fib)));

  const ByteImage v1 = Encode(Diversify(fib, Cfg(1)));
  const ByteImage v2 = Encode(Diversify(fib, Cfg(2)));
  CHECK(v1.bytes != v2.bytes);
  CHECK(Encode(Diversify(fib, Cfg(1))) == v1);
  CheckSameTraces(fib, Decode(v1), "seed 1");
  CheckSameTraces(fib, Decode(v2), "seed 2");
  CHECK(v1.layout.size() == 2);

  DiversityConfig keep = Cfg(1);
  keep.strip_symbols = false;
  CHECK(Encode(Diversify(fib, keep)).layout.size() == 3);
}

TEST_CASE("disabled passes are the identity") {
  const Program p = testing_support::LoadCorpus("matmul");
  DiversityConfig c = Cfg(8);
  c.enable = PassEnable{false, false, false, false, false, false, false};
  CHECK(ObfuscateData(p, c) == p);
  CHECK(SubstituteInstructions(p, c) == p);
  CHECK(InsertGarbage(p, c) == p);
  CHECK(InsertNops(p, c) == p);
  CHECK(ReorderInstructions(p, c) == p);
  CHECK(PermuteRegisters(p, c) == p);
  CHECK(RandomizeBlocks(p, c) == p);
  CHECK(Diversify(p, c) == StripSymbols(p));
}

TEST_CASE("semantic preservation on random programs") {
  for (std::uint64_t prog_seed = 1000; prog_seed < 1100; ++prog_seed) {
    const Program p = ParseAssembly(gen::RandomProgramText(prog_seed));
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Program q = Diversify(p, Cfg(VariantSeed(prog_seed, s)));
      CheckSameTraces(p, q, "program " + std::to_string(prog_seed) + " seed " + std::to_string(s));
    }
  }
}

TEST_CASE("variants of the large corpus program are pairwise distinct") {
  const Program p = testing_support::LoadCorpus("backdoor");
  CHECK(p.instruction_count() >= 500);
  std::set<std::vector<std::uint8_t>> codes;
  for (std::uint64_t i = 0; i < 10; ++i) codes.insert(Code(Diversify(p, Cfg(VariantSeed(42, i)))));
  CHECK(codes.size() == 10);
}
