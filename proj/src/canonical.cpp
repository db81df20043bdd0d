#include "divlab/canonical.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>
#include <sstream>

#include "divlab/digest.hpp"

namespace divlab {

Program StripNops(const Program& p) {
  Program q = p;
  for (auto& f : q.functions) {
    for (auto& b : f.blocks) {
      std::erase_if(b.instructions, [](const Instruction& i) { return i.op == Mnemonic::kNop; });
    }
  }
  return q;
}

Program NormalizeSubstitutions(const Program& p) {
  constexpr std::int32_t kIntMin = std::numeric_limits<std::int32_t>::min();
  Program q = p;
  for (auto& f : q.functions) {
    for (auto& b : f.blocks) {
      for (auto& insn : b.instructions) {
        switch (insn.op) {
          case Mnemonic::kLea:
            if (insn.imm(2).symbol.empty() && insn.imm(2).value == 0) {
              insn = MakeInsn(Mnemonic::kMov, insn.reg(0), insn.reg(1));
            }
            break;
          case Mnemonic::kXor:
            if (insn.reg(0) == insn.reg(1)) insn = MakeInsn(Mnemonic::kMovi, insn.reg(0), 0);
            break;
          case Mnemonic::kSubi:
            if (insn.imm(1).symbol.empty() && insn.imm(1).value <= 0 &&
                insn.imm(1).value != kIntMin) {
              insn = MakeInsn(Mnemonic::kAddi, insn.reg(0), -insn.imm(1).value);
            }
            break;
          case Mnemonic::kAddi:
            if (insn.imm(1).symbol.empty() && insn.imm(1).value < 0 &&
                insn.imm(1).value != kIntMin) {
              insn = MakeInsn(Mnemonic::kSubi, insn.reg(0), -insn.imm(1).value);
            }
            break;
          default:
            break;
        }
      }
    }
  }
  return q;
}

namespace {

std::int64_t ResolvedImmediate(const Immediate& imm,
                               const std::map<std::string, std::uint32_t>& data) {
  if (imm.symbol.empty()) return imm.value;
  return data.at(imm.symbol);
}

// Instruction text with registers erased.
std::string ErasedText(const Instruction& insn, const Program& p,
                       const std::map<std::string, std::uint32_t>& data) {
  std::string out(Name(insn.op));
  bool first = true;
  for (const auto& o : insn.operands) {
    out += first ? " " : ",";
    first = false;
    if (std::holds_alternative<Register>(o)) {
      out += "_";
    } else if (const auto* imm = std::get_if<Immediate>(&o)) {
      out += std::to_string(ResolvedImmediate(*imm, data));
    } else {
      out += "f" + std::to_string(p.function_index(std::get<LabelRef>(o).name));
    }
  }
  return out;
}

enum class ExitKind { kGoto, kCond, kRet, kHalt };

struct Node {
  std::vector<Instruction> body;
  ExitKind kind = ExitKind::kGoto;
  Mnemonic cond = Mnemonic::kJz;
  int taken = -1;  // goto target or branch-taken target
  int fall = -1;
  bool alive = true;
};

struct Graph {
  std::vector<Node> nodes;
  int entry = 0;
  std::vector<int> order;  // canonical layout
};

std::vector<int> Successors(const Node& n) {
  switch (n.kind) {
    case ExitKind::kGoto:
      return {n.taken};
    case ExitKind::kCond:
      return {n.taken, n.fall};
    default:
      return {};
  }
}

std::string ExitName(const Node& n) {
  switch (n.kind) {
    case ExitKind::kGoto:
      return "goto";
    case ExitKind::kCond:
      return std::string(Name(n.cond));
    case ExitKind::kRet:
      return "ret";
    case ExitKind::kHalt:
      return "halt";
  }
  return "?";
}

std::map<std::string, int> Histogram(const std::vector<Instruction>& body, const Program& p,
                                     const std::map<std::string, std::uint32_t>& data) {
  std::map<std::string, int> h;
  for (const auto& insn : body) ++h[ErasedText(insn, p, data)];
  return h;
}

std::string HistogramText(const std::map<std::string, int>& h) {
  std::string out;
  for (const auto& [k, v] : h) out += k + ":" + std::to_string(v) + ";";
  return out;
}

Graph BuildGraph(const Function& f, const Program& p,
                 const std::map<std::string, std::uint32_t>& data) {
  Graph g;
  const int n = static_cast<int>(f.blocks.size());
  for (int i = 0; i < n; ++i) {
    const BasicBlock& b = f.blocks[i];
    Node node;
    node.body = b.instructions;
    const Instruction* t = b.terminator();
    if (t != nullptr) node.body.pop_back();
    if (t == nullptr) {
      node.taken = i + 1;
    } else if (t->op == Mnemonic::kJmp) {
      node.taken = f.block_index(t->label());
    } else if (IsConditionalBranch(t->op)) {
      node.kind = ExitKind::kCond;
      node.cond = t->op;
      node.taken = f.block_index(t->label());
      node.fall = i + 1;
    } else {
      node.kind = t->op == Mnemonic::kRet ? ExitKind::kRet : ExitKind::kHalt;
    }
    g.nodes.push_back(std::move(node));
  }

  // Thread jumps through blocks that only jump.
  auto thread = [&](int t) {
    std::set<int> seen;
    while (g.nodes[t].body.empty() && g.nodes[t].kind == ExitKind::kGoto && seen.insert(t).second) {
      t = g.nodes[t].taken;
    }
    return t;
  };
  g.entry = thread(0);
  for (auto& node : g.nodes) {
    if (node.kind == ExitKind::kGoto || node.kind == ExitKind::kCond) node.taken = thread(node.taken);
    if (node.kind == ExitKind::kCond) node.fall = thread(node.fall);
  }

  auto reachable = [&] {
    std::vector<bool> seen(g.nodes.size(), false);
    std::deque<int> queue = {g.entry};
    seen[g.entry] = true;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int s : Successors(g.nodes[u])) {
        if (!seen[s]) {
          seen[s] = true;
          queue.push_back(s);
        }
      }
    }
    return seen;
  };
  {
    const auto seen = reachable();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      Node& node = g.nodes[i];
      if (!seen[i] && node.body.empty() && node.kind == ExitKind::kGoto) node.alive = false;
    }
  }

  // Merge single-predecessor goto successors into their predecessor.
  std::vector<int> preds(g.nodes.size(), 0);
  for (const auto& node : g.nodes) {
    if (!node.alive) continue;
    for (int s : Successors(node)) ++preds[s];
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    Node& node = g.nodes[i];
    while (node.alive && node.kind == ExitKind::kGoto) {
      const int b = node.taken;
      if (b == g.entry || b == static_cast<int>(i) || preds[b] != 1 || !g.nodes[b].alive) break;
      Node& succ = g.nodes[b];
      node.body.insert(node.body.end(), succ.body.begin(), succ.body.end());
      node.kind = succ.kind;
      node.cond = succ.cond;
      node.taken = succ.taken;
      node.fall = succ.fall;
      succ.alive = false;
    }
  }

  std::vector<bool> placed(g.nodes.size(), false);
  std::deque<int> queue = {g.entry};
  placed[g.entry] = true;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    g.order.push_back(u);
    for (int s : Successors(g.nodes[u])) {
      if (!placed[s]) {
        placed[s] = true;
        queue.push_back(s);
      }
    }
  }
  std::vector<std::pair<std::string, int>> rest;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].alive && !placed[i]) {
      rest.emplace_back(HistogramText(Histogram(g.nodes[i].body, p, data)) + "|" +
                            ExitName(g.nodes[i]),
                        static_cast<int>(i));
    }
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [key, i] : rest) g.order.push_back(i);
  return g;
}

std::vector<int> Positions(const Graph& g) {
  std::vector<int> pos(g.nodes.size(), -1);
  for (std::size_t k = 0; k < g.order.size(); ++k) pos[g.order[k]] = static_cast<int>(k);
  return pos;
}

}  // namespace

std::vector<std::vector<std::string>> CanonicalRegisterAbstraction(const Program& p) {
  const auto data = DataAddresses(p);
  std::vector<std::vector<std::string>> out;
  for (const auto& f : p.functions) {
    std::map<std::uint8_t, int> ordinal;
    auto& stream = out.emplace_back();
    for (const auto& b : f.blocks) {
      for (const auto& insn : b.instructions) {
        std::string text(Name(insn.op));
        bool first = true;
        for (const auto& o : insn.operands) {
          text += first ? " " : ", ";
          first = false;
          if (const auto* r = std::get_if<Register>(&o)) {
            auto [it, fresh] = ordinal.emplace(r->index, static_cast<int>(ordinal.size()));
            text += "ρ" + std::to_string(it->second);
          } else if (const auto* imm = std::get_if<Immediate>(&o)) {
            text += std::to_string(ResolvedImmediate(*imm, data));
          } else if (insn.op == Mnemonic::kCall) {
            text += "f" + std::to_string(p.function_index(std::get<LabelRef>(o).name));
          } else {
            text += "b" + std::to_string(f.block_index(std::get<LabelRef>(o).name));
          }
        }
        stream.push_back(std::move(text));
      }
    }
  }
  return out;
}

Program CanonicalBlockOrder(const Program& p) {
  const auto data = DataAddresses(p);
  Program q = p;
  for (auto& f : q.functions) {
    const Graph g = BuildGraph(f, p, data);
    const auto pos = Positions(g);
    auto label = [&](int node) { return "b" + std::to_string(pos[node]); };
    std::vector<BasicBlock> blocks;
    for (std::size_t k = 0; k < g.order.size(); ++k) {
      const Node& node = g.nodes[g.order[k]];
      BasicBlock b{"b" + std::to_string(k), node.body};
      const bool last = k + 1 == g.order.size();
      auto is_next = [&](int target) { return !last && pos[target] == static_cast<int>(k) + 1; };
      switch (node.kind) {
        case ExitKind::kGoto:
          if (!is_next(node.taken)) b.instructions.push_back(MakeBranch(Mnemonic::kJmp, label(node.taken)));
          blocks.push_back(std::move(b));
          break;
        case ExitKind::kCond:
          b.instructions.push_back(MakeBranch(node.cond, label(node.taken)));
          blocks.push_back(std::move(b));
          if (!is_next(node.fall)) {
            blocks.push_back(BasicBlock{"b" + std::to_string(k) + "f",
                                        {MakeBranch(Mnemonic::kJmp, label(node.fall))}});
          }
          break;
        case ExitKind::kRet:
          b.instructions.push_back(MakeInsn(Mnemonic::kRet));
          blocks.push_back(std::move(b));
          break;
        case ExitKind::kHalt:
          b.instructions.push_back(MakeInsn(Mnemonic::kHalt));
          blocks.push_back(std::move(b));
          break;
      }
    }
    f.blocks = std::move(blocks);
  }
  return q;
}

CanonicalForm Canonicalize(const Program& p) {
  const Program q = NormalizeSubstitutions(StripNops(p));
  const auto data = DataAddresses(q);
  CanonicalForm form;
  std::ostringstream text;
  for (std::size_t fi = 0; fi < q.functions.size(); ++fi) {
    const Graph g = BuildGraph(q.functions[fi], q, data);
    const auto pos = Positions(g);
    auto& summaries = form.functions.emplace_back();
    text << "fn " << fi << "\n";
    for (std::size_t k = 0; k < g.order.size(); ++k) {
      const Node& node = g.nodes[g.order[k]];
      BlockSummary s;
      s.histogram = Histogram(node.body, q, data);
      s.exit = ExitName(node);
      for (int succ : Successors(node)) s.successors.push_back(pos[succ]);
      text << "  b" << k << " exit=" << s.exit << " succ=";
      for (std::size_t i = 0; i < s.successors.size(); ++i) text << (i ? "," : "") << s.successors[i];
      text << " hist=" << HistogramText(s.histogram) << "\n";
      summaries.push_back(std::move(s));
    }
  }
  form.text = text.str();
  form.digest = Sha256Hex(form.text);
  return form;
}

bool CanonicalMatch(const Program& a, const Program& b) {
  return Canonicalize(a).digest == Canonicalize(b).digest;
}

}  // namespace divlab
