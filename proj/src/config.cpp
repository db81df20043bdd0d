#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "divlab/diversifier.hpp"

namespace divlab {

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double ParseProbability(std::string_view key, std::string_view v) {
  std::string text(v);
  char* end = nullptr;
  const double d = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ConfigError("bad number for " + std::string(key) + ": " + text);
  }
  return d;
}

bool ParseBool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + std::string(key) + ": " + std::string(v));
}

template <typename T>
T ParseInteger(std::string_view key, std::string_view v) {
  T out{};
  int base = 10;
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
    v.remove_prefix(2);
    base = 16;
  }
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("bad integer for " + std::string(key) + ": " + std::string(v));
  }
  return out;
}

std::string FormatDouble(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

bool* EnableFlag(PassEnable& e, std::string_view pass) {
  if (pass == "data") return &e.data;
  if (pass == "substitute") return &e.substitute;
  if (pass == "garbage") return &e.garbage;
  if (pass == "nops") return &e.nops;
  if (pass == "reorder") return &e.reorder;
  if (pass == "registers") return &e.registers;
  if (pass == "blocks") return &e.blocks;
  return nullptr;
}

}  // namespace

void CheckConfig(const DiversityConfig& cfg) {
  for (double p : {cfg.p_substitute, cfg.p_reorder, cfg.p_nop, cfg.p_garbage, cfg.p_split}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probability outside [0,1]");
  }
  if (cfg.max_garbage_len < 1) throw ConfigError("max_garbage_len must be at least 1");
}

void ApplyConfigLine(DiversityConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "seed") {
    cfg.seed = ParseInteger<std::uint64_t>(key, value);
  } else if (key == "p_substitute") {
    cfg.p_substitute = ParseProbability(key, value);
  } else if (key == "p_reorder") {
    cfg.p_reorder = ParseProbability(key, value);
  } else if (key == "p_nop") {
    cfg.p_nop = ParseProbability(key, value);
  } else if (key == "p_garbage") {
    cfg.p_garbage = ParseProbability(key, value);
  } else if (key == "p_split") {
    cfg.p_split = ParseProbability(key, value);
  } else if (key == "max_garbage_len") {
    cfg.max_garbage_len = ParseInteger<int>(key, value);
  } else if (key == "strip_symbols") {
    cfg.strip_symbols = ParseBool(key, value);
  } else if (key == "identity") {
    cfg.identity = ParseBool(key, value);
  } else if (key.starts_with("enable.")) {
    bool* flag = EnableFlag(cfg.enable, key.substr(7));
    if (flag == nullptr) throw ConfigError("unknown pass in " + std::string(key));
    *flag = ParseBool(key, value);
  } else {
    throw ConfigError("unknown config key: " + std::string(key));
  }
}

DiversityConfig ParseConfig(std::string_view text, DiversityConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = Trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      ApplyConfigLine(base, Trim(s.substr(0, eq)), Trim(s.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  CheckConfig(base);
  return base;
}

std::string FormatConfig(const DiversityConfig& cfg) {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "seed = " << cfg.seed << "\n"
     << "p_substitute = " << FormatDouble(cfg.p_substitute) << "\n"
     << "p_reorder = " << FormatDouble(cfg.p_reorder) << "\n"
     << "p_nop = " << FormatDouble(cfg.p_nop) << "\n"
     << "p_garbage = " << FormatDouble(cfg.p_garbage) << "\n"
     << "p_split = " << FormatDouble(cfg.p_split) << "\n"
     << "max_garbage_len = " << cfg.max_garbage_len << "\n"
     << "strip_symbols = " << b(cfg.strip_symbols) << "\n"
     << "identity = " << b(cfg.identity) << "\n"
     << "enable.data = " << b(cfg.enable.data) << "\n"
     << "enable.substitute = " << b(cfg.enable.substitute) << "\n"
     << "enable.garbage = " << b(cfg.enable.garbage) << "\n"
     << "enable.nops = " << b(cfg.enable.nops) << "\n"
     << "enable.reorder = " << b(cfg.enable.reorder) << "\n"
     << "enable.registers = " << b(cfg.enable.registers) << "\n"
     << "enable.blocks = " << b(cfg.enable.blocks) << "\n";
  return os.str();
}

DiversityConfig OnlyPasses(DiversityConfig cfg, std::string_view comma_separated) {
  cfg.enable = PassEnable{false, false, false, false, false, false, false};
  while (!comma_separated.empty()) {
    const auto comma = comma_separated.find(',');
    std::string_view name = Trim(comma_separated.substr(0, comma));
    bool* flag = EnableFlag(cfg.enable, name);
    if (flag == nullptr) throw ConfigError("unknown pass: " + std::string(name));
    *flag = true;
    if (comma == std::string_view::npos) break;
    comma_separated.remove_prefix(comma + 1);
  }
  return cfg;
}

}  // namespace divlab
