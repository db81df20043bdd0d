#include "divlab/diversifier.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "divlab/encoding.hpp"
#include "divlab/liveness.hpp"
#include "divlab/rng.hpp"

namespace divlab {

namespace {

bool Active(const DiversityConfig& cfg, bool flag) { return flag && !cfg.identity; }

bool IsPlainImm(const Instruction& insn, std::size_t i) { return insn.imm(i).symbol.empty(); }

constexpr std::int32_t kIntMin = std::numeric_limits<std::int32_t>::min();

// Alternate form of a substitution-class member, if `insn` is one.
std::optional<Instruction> Alternate(const Instruction& insn) {
  switch (insn.op) {
    case Mnemonic::kMov:
      return MakeInsn(Mnemonic::kLea, insn.reg(0), insn.reg(1), 0);
    case Mnemonic::kLea:
      if (IsPlainImm(insn, 2) && insn.imm(2).value == 0) {
        return MakeInsn(Mnemonic::kMov, insn.reg(0), insn.reg(1));
      }
      break;
    case Mnemonic::kMovi:
      if (IsPlainImm(insn, 1) && insn.imm(1).value == 0) {
        return MakeInsn(Mnemonic::kXor, insn.reg(0), insn.reg(0));
      }
      break;
    case Mnemonic::kXor:
      if (insn.reg(0) == insn.reg(1)) return MakeInsn(Mnemonic::kMovi, insn.reg(0), 0);
      break;
    case Mnemonic::kAddi:
    case Mnemonic::kSubi:
      if (IsPlainImm(insn, 1) && insn.imm(1).value != kIntMin) {
        const Mnemonic other = insn.op == Mnemonic::kAddi ? Mnemonic::kSubi : Mnemonic::kAddi;
        return MakeInsn(other, insn.reg(0), -insn.imm(1).value);
      }
      break;
    default:
      break;
  }
  return std::nullopt;
}

std::string FreshLabel(std::set<std::string>& taken, std::string_view prefix) {
  for (int i = 0;; ++i) {
    std::string candidate = std::string(prefix) + std::to_string(i);
    if (taken.insert(candidate).second) return candidate;
  }
}

std::set<std::string> LabelsOf(const Function& f) {
  std::set<std::string> out;
  for (const auto& b : f.blocks) out.insert(b.label);
  return out;
}

Instruction RandomGarbage(Rng& rng, Register dest) {
  auto src = [&] { return Register::R(static_cast<int>(rng.Below(Register::kCount))); };
  auto imm = [&] { return static_cast<std::int32_t>(rng.Range(-65536, 65535)); };
  static constexpr Mnemonic kArith[] = {Mnemonic::kAdd, Mnemonic::kSub, Mnemonic::kMul,
                                        Mnemonic::kXor, Mnemonic::kAnd, Mnemonic::kOr};
  switch (rng.Below(6)) {
    case 0:
      return MakeInsn(Mnemonic::kMov, dest, src());
    case 1:
      return MakeInsn(Mnemonic::kMovi, dest, imm());
    case 2: {
      const Register s = src();
      return MakeInsn(Mnemonic::kLea, dest, s, imm());
    }
    case 3: {
      const Mnemonic op = kArith[rng.Below(6)];
      return MakeInsn(op, dest, src());
    }
    case 4:
      return MakeInsn(Mnemonic::kAddi, dest, imm());
    default:
      return MakeInsn(Mnemonic::kSubi, dest, imm());
  }
}

}  // namespace

Program SubstituteInstructions(const Program& p, const DiversityConfig& cfg) {
  if (!Active(cfg, cfg.enable.substitute)) return p;
  Program q = p;
  for (std::size_t fi = 0; fi < q.functions.size(); ++fi) {
    Rng rng = Rng::Derive(cfg.seed, "substitute", fi);
    for (auto& b : q.functions[fi].blocks) {
      for (auto& insn : b.instructions) {
        auto alt = Alternate(insn);
        if (alt && rng.Bernoulli(cfg.p_substitute)) insn = std::move(*alt);
      }
    }
  }
  return q;
}

Program ReorderInstructions(const Program& p, const DiversityConfig& cfg) {
  if (!Active(cfg, cfg.enable.reorder)) return p;
  Program q = p;
  for (std::size_t fi = 0; fi < q.functions.size(); ++fi) {
    Rng rng = Rng::Derive(cfg.seed, "reorder", fi);
    for (auto& b : q.functions[fi].blocks) {
      const std::size_t n = b.instructions.size();
      if (n < 2 || !rng.Bernoulli(cfg.p_reorder)) continue;
      std::vector<Effects> fx;
      fx.reserve(n);
      for (const auto& insn : b.instructions) fx.push_back(EffectsOf(insn));
      const bool has_terminator = b.terminator() != nullptr;
      std::vector<std::vector<std::size_t>> succ(n);
      std::vector<int> indegree(n, 0);
      for (std::size_t j = 1; j < n; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
          const bool last = has_terminator && j + 1 == n;
          const bool dep = last || (fx[i].defs & fx[j].uses) || (fx[i].uses & fx[j].defs) ||
                           (fx[i].defs & fx[j].defs) || (fx[i].memory && fx[j].memory);
          if (dep) {
            succ[i].push_back(j);
            ++indegree[j];
          }
        }
      }
      std::vector<std::size_t> ready;
      for (std::size_t i = 0; i < n; ++i) {
        if (indegree[i] == 0) ready.push_back(i);
      }
      std::vector<Instruction> out;
      out.reserve(n);
      while (!ready.empty()) {
        const std::size_t pick = rng.Below(ready.size());
        const std::size_t i = ready[pick];
        ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(pick));
        out.push_back(b.instructions[i]);
        for (std::size_t j : succ[i]) {
          if (--indegree[j] == 0) ready.push_back(j);
        }
      }
      b.instructions = std::move(out);
    }
  }
  return q;
}

Program PermuteRegisters(const Program& p, const DiversityConfig& cfg) {
  if (!Active(cfg, cfg.enable.registers)) return p;
  Rng rng = Rng::Derive(cfg.seed, "registers", 0);
  std::vector<std::uint8_t> perm = {1, 2, 3, 4, 5, 6, 7};
  rng.Shuffle(perm);
  Program q = p;
  for (auto& f : q.functions) {
    for (auto& b : f.blocks) {
      for (auto& insn : b.instructions) {
        for (auto& o : insn.operands) {
          if (auto* r = std::get_if<Register>(&o); r != nullptr && r->index >= 1 && r->index <= 7) {
            r->index = perm[r->index - 1];
          }
        }
      }
    }
  }
  return q;
}

Program InsertNops(const Program& p, const DiversityConfig& cfg) {
  if (!Active(cfg, cfg.enable.nops)) return p;
  Program q = p;
  for (std::size_t fi = 0; fi < q.functions.size(); ++fi) {
    Rng rng = Rng::Derive(cfg.seed, "nops", fi);
    for (auto& b : q.functions[fi].blocks) {
      std::vector<Instruction> out;
      for (std::size_t i = 0; i < b.instructions.size(); ++i) {
        const Instruction& insn = b.instructions[i];
        const bool after_cmp = i > 0 && IsConditionalBranch(insn.op) &&
                               b.instructions[i - 1].op == Mnemonic::kCmp;
        if (!after_cmp && rng.Bernoulli(cfg.p_nop)) {
          const auto len = 1 + rng.Below(static_cast<std::uint64_t>(cfg.max_garbage_len));
          for (std::uint64_t k = 0; k < len; ++k) out.push_back(MakeInsn(Mnemonic::kNop));
        }
        out.push_back(insn);
      }
      b.instructions = std::move(out);
    }
  }
  return q;
}

Program InsertGarbage(const Program& p, const DiversityConfig& cfg) {
  if (!Active(cfg, cfg.enable.garbage)) return p;
  Program q = p;
  for (std::size_t fi = 0; fi < q.functions.size(); ++fi) {
    Function& f = q.functions[fi];
    const Liveness live = ComputeLiveness(f);
    Rng rng = Rng::Derive(cfg.seed, "garbage", fi);
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      auto& b = f.blocks[bi];
      std::vector<Instruction> out;
      for (std::size_t i = 0; i < b.instructions.size(); ++i) {
        if (rng.Bernoulli(cfg.p_garbage)) {
          const RegMask dead =
              static_cast<RegMask>(~live.before(static_cast<int>(bi), static_cast<int>(i)) & kGprMask);
          if (dead != 0) {
            std::vector<int> candidates;
            for (int r = 0; r < 8; ++r) {
              if (dead & (1u << r)) candidates.push_back(r);
            }
            const Register dest = Register::R(candidates[rng.Below(candidates.size())]);
            const auto len = 1 + rng.Below(static_cast<std::uint64_t>(cfg.max_garbage_len));
            for (std::uint64_t k = 0; k < len; ++k) out.push_back(RandomGarbage(rng, dest));
          }
        }
        out.push_back(b.instructions[i]);
      }
      b.instructions = std::move(out);
    }
  }
  return q;
}

Program RandomizeBlocks(const Program& p, const DiversityConfig& cfg) {
  if (!Active(cfg, cfg.enable.blocks)) return p;
  Program q = p;
  for (std::size_t fi = 0; fi < q.functions.size(); ++fi) {
    Function& f = q.functions[fi];
    Rng rng = Rng::Derive(cfg.seed, "blocks", fi);
    std::set<std::string> labels = LabelsOf(f);

    std::vector<BasicBlock> split;
    for (auto& b : f.blocks) {
      BasicBlock current{b.label, {}};
      for (std::size_t i = 0; i < b.instructions.size(); ++i) {
        const bool eligible = i > 0 && !IsConditionalBranch(b.instructions[i].op);
        if (eligible && rng.Bernoulli(cfg.p_split)) {
          split.push_back(std::move(current));
          current = BasicBlock{FreshLabel(labels, "_s"), {}};
        }
        current.instructions.push_back(b.instructions[i]);
      }
      split.push_back(std::move(current));
    }

    std::vector<std::size_t> order(split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<std::size_t> rest(order.begin() + 1, order.end());
    rng.Shuffle(rest);
    std::copy(rest.begin(), rest.end(), order.begin() + 1);

    std::vector<std::string> split_labels;
    for (const auto& b : split) split_labels.push_back(b.label);
    std::vector<BasicBlock> out;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t idx = order[k];
      BasicBlock b = std::move(split[idx]);
      const bool broken = b.falls_through() &&
                          (k + 1 == order.size() || order[k + 1] != idx + 1);
      if (!broken) {
        out.push_back(std::move(b));
        continue;
      }
      const std::string& next = split_labels[idx + 1];
      const Instruction* t = b.terminator();
      if (t != nullptr && IsConditionalBranch(t->op)) {
        out.push_back(std::move(b));
        out.push_back(BasicBlock{FreshLabel(labels, "_t"), {MakeBranch(Mnemonic::kJmp, next)}});
      } else {
        b.instructions.push_back(MakeBranch(Mnemonic::kJmp, next));
        out.push_back(std::move(b));
      }
    }
    f.blocks = std::move(out);
  }
  return q;
}

Program ObfuscateData(const Program& p, const DiversityConfig& cfg) {
  if (!Active(cfg, cfg.enable.data)) return p;
  Program q = p;
  Rng rng = Rng::Derive(cfg.seed, "data", 0);

  std::string name(kDecoderName);
  for (int i = 1; q.find_function(name) != nullptr || [&] {
         for (const auto& d : q.data) {
           if (d.label == name) return true;
         }
         return false;
       }();
       ++i) {
    name = std::string(kDecoderName) + "_" + std::to_string(i);
  }

  Function decoder{name, {}};
  const Register ptr = Register::R(1), count = Register::R(2), key = Register::R(3),
                 word = Register::R(4), zero = Register::R(5);
  for (std::size_t i = 0; i < q.data.size(); ++i) {
    DataBlob& blob = q.data[i];
    const auto k = static_cast<std::uint8_t>(rng.Below(256));
    for (auto& byte : blob.bytes) byte ^= k;
    blob.key = blob.encoding == DataEncoding::kXored ? static_cast<std::uint8_t>(blob.key ^ k) : k;
    blob.encoding = DataEncoding::kXored;
    const std::size_t words = PaddedSize(blob.bytes.size()) / 4;
    if (words == 0) continue;
    const std::string loop = "_dloop" + std::to_string(i);
    BasicBlock setup{"_dset" + std::to_string(i), {}};
    setup.instructions.push_back(Instruction{Mnemonic::kMovi, {ptr, Immediate{0, blob.label}}});
    setup.instructions.push_back(MakeInsn(Mnemonic::kMovi, count, static_cast<std::int32_t>(words)));
    setup.instructions.push_back(
        MakeInsn(Mnemonic::kMovi, key, static_cast<std::int32_t>(0x01010101u * k)));
    BasicBlock body{loop, {}};
    body.instructions = {
        MakeInsn(Mnemonic::kLoad, word, ptr, 0),  MakeInsn(Mnemonic::kXor, word, key),
        MakeInsn(Mnemonic::kStore, ptr, word, 0), MakeInsn(Mnemonic::kAddi, ptr, 4),
        MakeInsn(Mnemonic::kSubi, count, 1),      MakeInsn(Mnemonic::kMovi, zero, 0),
        MakeInsn(Mnemonic::kCmp, count, zero),    MakeBranch(Mnemonic::kJnz, loop),
    };
    decoder.blocks.push_back(std::move(setup));
    decoder.blocks.push_back(std::move(body));
  }
  decoder.blocks.push_back(BasicBlock{"_dret", {MakeInsn(Mnemonic::kRet)}});

  Function* entry = nullptr;
  for (auto& f : q.functions) {
    if (f.name == q.entry_function) entry = &f;
  }
  const RegMask live_in = ComputeLiveness(*entry).live_in(0) & kGprMask;
  std::set<std::string> labels = LabelsOf(*entry);
  BasicBlock init{FreshLabel(labels, "_init"), {MakeBranch(Mnemonic::kCall, name)}};
  // The decoder clobbers registers the entry code may rely on being zero.
  for (int r = 0; r < 8; ++r) {
    if (live_in & (1u << r)) init.instructions.push_back(MakeInsn(Mnemonic::kMovi, Register::R(r), 0));
  }
  entry->blocks.insert(entry->blocks.begin(), std::move(init));
  q.functions.insert(q.functions.begin(), std::move(decoder));
  if (q.symbols) q.symbols = ComputeSymbols(q);
  return q;
}

Program StripSymbols(const Program& p) {
  Program q = p;
  q.symbols.reset();
  return q;
}

Program Diversify(const Program& p, const DiversityConfig& cfg) {
  CheckConfig(cfg);
  Program q = ObfuscateData(p, cfg);
  q = SubstituteInstructions(q, cfg);
  q = InsertGarbage(q, cfg);
  q = InsertNops(q, cfg);
  q = ReorderInstructions(q, cfg);
  q = PermuteRegisters(q, cfg);
  q = RandomizeBlocks(q, cfg);
  if (cfg.strip_symbols) q = StripSymbols(q);
  return q;
}

std::uint64_t VariantSeed(std::uint64_t seed, std::uint64_t index) {
  return Rng::DeriveSeed(seed, "variant", index);
}

}  // namespace divlab
