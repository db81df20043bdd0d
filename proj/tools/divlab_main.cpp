#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "divlab/assembly.hpp"
#include "divlab/encoding.hpp"
#include "divlab/harness.hpp"
#include "divlab/interpreter.hpp"

namespace {

using namespace divlab;

fs::path OutDir(const std::string& flag, const char* fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DIVLAB_OUT_DIR"); env && *env) return env;
  return fallback;
}

DiversityConfig BuildConfig(const std::string& file, const std::vector<std::string>& sets,
                            const std::string& seed, bool identity) {
  DiversityConfig cfg;
  if (!file.empty()) cfg = ParseConfig(ReadTextFile(file));
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
    ApplyConfigLine(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!seed.empty()) ApplyConfigLine(cfg, "seed", seed);
  if (identity) cfg.identity = true;
  CheckConfig(cfg);
  return cfg;
}

int ExitCode(const Trace& t) {
  switch (t.termination) {
    case Termination::kHalted: return 0;
    case Termination::kStepLimit: return 2;
    case Termination::kFault: return 3;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divlab: toy-ISA software diversity and similarity lab"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> config_sets;
  std::string seed;
  std::string out;
  int variants = 10;
  std::size_t min_len = 10;
  int quorum = 2;
  int ngram = 1;
  std::string metric = "jaccard";
  bool identity = false;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", config_sets, "config override key=value (repeatable)");
    cmd->add_option("--seed", seed, "root seed");
  };

  auto* assemble = app.add_subcommand("assemble", "assemble .tasm into a .tbin image");
  std::string asm_in;
  std::string asm_out;
  bool keep_symbols = true;
  assemble->add_option("input", asm_in)->required()->check(CLI::ExistingFile);
  assemble->add_option("output", asm_out)->required();
  assemble->add_flag("!--no-symbols", keep_symbols, "omit the symbol table");

  auto* run = app.add_subcommand("run", "interpret a .tbin or .tasm and print its trace");
  std::string run_in;
  std::vector<std::uint32_t> inputs;
  std::uint64_t step_limit = kDefaultStepLimit;
  run->add_option("image", run_in)->required()->check(CLI::ExistingFile);
  run->add_option("--input", inputs, "input words")->delimiter(',');
  run->add_option("--step-limit", step_limit);

  auto* diversify = app.add_subcommand("diversify", "generate a population of variants");
  std::string div_in;
  diversify->add_option("input", div_in)->required()->check(CLI::ExistingFile);
  diversify->add_option("--variants", variants)->check(CLI::PositiveNumber);
  diversify->add_option("--out", out, "output directory");
  diversify->add_flag("--identity", identity, "disable every pass except symbol stripping");
  add_config(diversify);

  auto* analyze = app.add_subcommand("analyze", "run one analysis over populations");
  std::string sub;
  std::vector<std::string> pops;
  analyze->add_option("subcommand", sub)
      ->required()
      ->check(CLI::IsMember({"subseq", "histogram", "s-matrix", "jaccard", "cfg", "canon"}));
  analyze->add_option("populations", pops, "manifest files or population directories")
      ->required();
  analyze->add_option("--min-len", min_len);
  analyze->add_option("--quorum", quorum);
  analyze->add_option("--ngram", ngram)->check(CLI::Range(1, 16));
  analyze->add_option("--metric", metric, "jaccard or jaccard-weighted");
  analyze->add_option("--out", out);

  auto* experiment = app.add_subcommand("experiment", "full evaluation over a corpus directory");
  std::string corpus;
  ExperimentOptions eopts;
  experiment->add_option("corpus", corpus)->required()->check(CLI::ExistingDirectory);
  experiment->add_option("--variants", eopts.variants)->check(CLI::PositiveNumber);
  experiment->add_option("--min-len", eopts.min_len);
  experiment->add_option("--out", out);
  add_config(experiment);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*assemble) {
      Program p = ParseAssembly(ReadTextFile(asm_in));
      if (!keep_symbols) p.symbols.reset();
      WriteImage(asm_out, Encode(p));
      return 0;
    }
    if (*run) {
      const Trace t = Interpret(LoadImage(run_in), inputs, step_limit);
      std::cout << "outputs:";
      for (auto v : t.outputs) std::cout << ' ' << v;
      std::cout << "\nsteps: " << t.steps << "\ntermination: " << ToString(t.termination);
      if (t.termination == Termination::kFault) std::cout << " (" << ToString(t.fault) << ")";
      std::cout << '\n';
      return ExitCode(t);
    }
    if (*diversify) {
      const DiversityConfig cfg = BuildConfig(config_file, config_sets, seed, identity);
      const fs::path dir = OutDir(out, "population");
      const Manifest m = DiversifyToDirectory(LoadProgram(div_in), div_in, dir, variants, cfg);
      std::cout << ManifestToCsv(m);
      return 0;
    }
    if (*analyze) {
      std::vector<Population> groups;
      for (const auto& p : pops) groups.push_back(LoadPopulation(p));
      AnalyzeOptions o;
      o.min_len = min_len;
      o.quorum = quorum;
      o.ngram = ngram;
      o.metric = MetricFromName(metric);
      const fs::path dir = OutDir(out, "analysis");
      Analyze(sub, groups, o, dir);
      std::cout << "wrote " << dir.string() << '\n';
      return 0;
    }
    if (*experiment) {
      eopts.config = BuildConfig(config_file, config_sets, seed, false);
      RunExperiment(corpus, OutDir(out, "experiment"), eopts, std::cerr);
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
