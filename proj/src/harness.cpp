#include "divlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "divlab/assembly.hpp"
#include "divlab/canonical.hpp"
#include "divlab/digest.hpp"
#include "divlab/signature.hpp"

namespace divlab {

const std::vector<std::vector<std::uint32_t>>& StandardInputs() {
  static const std::vector<std::vector<std::uint32_t>> inputs = {
      {},
      {3, 1, 4, 1, 5, 9, 2, 6, 5, 3},
      {7, 0, 255, 1000, 42, 13, 8, 21, 99, 5, 2, 17},
  };
  return inputs;
}

std::string ReadTextFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HarnessError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteTextFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw HarnessError("cannot write " + path.string());
  out << text;
  if (!out) throw HarnessError("cannot write " + path.string());
}

Program LoadProgram(const fs::path& path) {
  if (path.extension() == ".tasm") return ParseAssembly(ReadTextFile(path));
  return Decode(ReadImage(path));
}

ByteImage LoadImage(const fs::path& path) {
  if (path.extension() == ".tasm") return Encode(ParseAssembly(ReadTextFile(path)));
  return ReadImage(path);
}

namespace {

std::string Fixed(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

double Round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string VariantName(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "variant_%02d.tbin", i);
  return buf;
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::string ManifestToCsv(const Manifest& m) {
  std::ostringstream os;
  os << "# source=" << m.source << "\n# config_digest=" << m.config_digest << "\n";
  os << "variant,seed,image,bytes,sha256\n";
  for (const auto& e : m.entries) {
    os << e.variant << ',' << e.seed << ',' << e.image << ',' << e.bytes << ',' << e.sha256 << '\n';
  }
  return os.str();
}

Manifest ParseManifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# source=", 0) == 0) {
      m.source = line.substr(9);
    } else if (line.rfind("# config_digest=", 0) == 0) {
      m.config_digest = line.substr(16);
    } else if (line[0] == '#') {
      continue;
    } else if (!header) {
      if (line != "variant,seed,image,bytes,sha256") throw HarnessError("bad manifest header");
      header = true;
    } else {
      auto cells = SplitCsv(line);
      if (cells.size() != 5) throw HarnessError("bad manifest row: " + line);
      try {
        m.entries.push_back({std::stoi(cells[0]), std::stoull(cells[1]), cells[2],
                             static_cast<std::size_t>(std::stoull(cells[3])), cells[4]});
      } catch (const std::logic_error&) {
        throw HarnessError("bad manifest row: " + line);
      }
    }
  }
  if (!header) throw HarnessError("manifest has no header");
  return m;
}

Manifest ReadManifest(const fs::path& path) { return ParseManifest(ReadTextFile(path)); }

Manifest DiversifyToDirectory(const Program& p, const std::string& source, const fs::path& out_dir,
                              int variants, const DiversityConfig& cfg) {
  if (variants < 1) throw HarnessError("need at least one variant");
  CheckConfig(cfg);
  fs::create_directories(out_dir);
  const std::string config_text = FormatConfig(cfg);
  Manifest m;
  m.source = source;
  m.config_digest = Sha256Hex(config_text);
  for (int i = 0; i < variants; ++i) {
    DiversityConfig c = cfg;
    c.seed = VariantSeed(cfg.seed, static_cast<std::uint64_t>(i));
    const auto bytes = Serialize(Encode(Diversify(p, c)));
    const std::string name = VariantName(i);
    WriteTextFile(out_dir / name, std::string(bytes.begin(), bytes.end()));
    m.entries.push_back({i, c.seed, name, bytes.size(), Sha256Hex(bytes)});
  }
  WriteTextFile(out_dir / "config.txt", config_text);
  WriteTextFile(out_dir / "manifest.csv", ManifestToCsv(m));
  return m;
}

Population LoadPopulation(const fs::path& path) {
  Population pop;
  fs::path manifest;
  fs::path dir;
  if (fs::is_regular_file(path)) {
    manifest = path;
    dir = path.parent_path();
  } else if (fs::is_directory(path)) {
    dir = path;
    if (fs::exists(path / "manifest.csv")) manifest = path / "manifest.csv";
  } else {
    throw HarnessError("no such population: " + path.string());
  }
  pop.name = fs::absolute(dir).lexically_normal().filename().string();
  if (pop.name.empty()) pop.name = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  if (!manifest.empty()) {
    const Manifest m = ReadManifest(manifest);
    for (const auto& e : m.entries) {
      const auto img_path = dir / e.image;
      const std::string raw = ReadTextFile(img_path);
      const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
      if (Sha256Hex(bytes) != e.sha256) throw HarnessError("hash mismatch for " + img_path.string());
      pop.labels.push_back(fs::path(e.image).stem().string());
      pop.images.push_back(Deserialize(bytes));
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".tbin") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      pop.labels.push_back(f.stem().string());
      pop.images.push_back(ReadImage(f));
    }
  }
  if (pop.images.empty()) throw HarnessError("empty population: " + path.string());
  return pop;
}

namespace {

struct Flattened {
  std::vector<Program> programs;
  std::vector<std::string> labels;
  std::vector<std::vector<int>> groups;
};

Flattened Flatten(const std::vector<Population>& groups) {
  Flattened f;
  for (const auto& g : groups) {
    auto& idx = f.groups.emplace_back();
    for (std::size_t i = 0; i < g.images.size(); ++i) {
      idx.push_back(static_cast<int>(f.programs.size()));
      f.programs.push_back(Decode(g.images[i]));
      f.labels.push_back(g.name + "/" + g.labels[i]);
    }
  }
  return f;
}

SimilarityMatrix WriteMatrix(const std::string& stem, const std::vector<Population>& groups,
                             const Flattened& flat, Metric metric, int n, const fs::path& out_dir) {
  SimilarityMatrix m = PairwiseMatrix(flat.programs, flat.labels, metric, n);
  for (auto& row : m.values) {
    for (auto& v : row) v = Round4(v);
  }
  WriteTextFile(out_dir / (stem + "_matrix.csv"), MatrixToCsv(m));
  std::ostringstream os;
  os << "group_a,group_b,kind,pairs,mean,min\n";
  for (std::size_t a = 0; a < groups.size(); ++a) {
    const auto& ga = flat.groups[a];
    const std::size_t pairs = ga.size() * (ga.size() - 1) / 2;
    os << groups[a].name << ',' << groups[a].name << ",within," << pairs << ','
       << Fixed(m.WithinMean(ga), 6) << ',' << Fixed(m.WithinMin(ga), 6) << '\n';
  }
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      const auto& ga = flat.groups[a];
      const auto& gb = flat.groups[b];
      os << groups[a].name << ',' << groups[b].name << ",cross," << ga.size() * gb.size() << ','
         << Fixed(m.CrossMean(ga, gb), 6) << ",\n";
    }
  }
  WriteTextFile(out_dir / (stem + "_groups.csv"), os.str());
  if (!m.warnings.empty()) {
    std::string w;
    for (const auto& line : m.warnings) w += line + "\n";
    WriteTextFile(out_dir / (stem + "_warnings.txt"), w);
  }
  return m;
}

void AnalyzeSubseq(const std::vector<Population>& groups, const AnalyzeOptions& o,
                   const fs::path& out_dir) {
  for (const auto& g : groups) {
    const int size = static_cast<int>(g.images.size());
    if (o.quorum > size) throw HarnessError("quorum exceeds population size for " + g.name);
    std::vector<ImageView> views;
    for (const auto& img : g.images) views.push_back(MakeImageView(img));
    std::ostringstream hist;
    std::ostringstream cats;
    std::ostringstream dump;
    hist << "quorum,length,count\n";
    cats << "quorum,category,count\n";
    const int top = std::max(o.quorum, std::min(5, size));
    for (int q = o.quorum; q <= top; ++q) {
      const auto subs = SharedSubstrings(std::span<const ByteImage>(g.images), o.min_len, q);
      for (const auto& [len, count] : LengthHistogram(subs)) {
        hist << q << ',' << len << ',' << count << '\n';
      }
      std::map<SubseqCategory, int> counts;
      for (const auto& s : subs) {
        const Classification c = ClassifySubsequence(s, views);
        ++counts[c.category];
        dump << "q=" << q << " len=" << s.bytes.size() << " category=" << ToString(c.category)
             << " support=";
        for (std::size_t i = 0; i < s.support.size(); ++i) dump << (i ? ";" : "") << s.support[i];
        dump << " regions=";
        std::set<std::string> regions;
        for (const auto& occ : s.occurrences) {
          regions.insert(occ.region == RegionKind::kCode ? "code" : "data");
        }
        bool first = true;
        for (const auto& r : regions) {
          dump << (first ? "" : ";") << r;
          first = false;
        }
        dump << " hex=" << HexString(s.bytes) << '\n';
      }
      for (SubseqCategory c : {SubseqCategory::kNopSled, SubseqCategory::kCallSequence,
                               SubseqCategory::kMovSequence, SubseqCategory::kStartCode,
                               SubseqCategory::kPotentialSignature}) {
        cats << q << ',' << ToString(c) << ',' << counts[c] << '\n';
      }
    }
    WriteTextFile(out_dir / ("subseq_" + g.name + "_lengths.csv"), hist.str());
    WriteTextFile(out_dir / ("subseq_" + g.name + "_categories.csv"), cats.str());
    WriteTextFile(out_dir / ("subseq_" + g.name + "_substrings.txt"), dump.str());
  }
}

void AnalyzeHistogram(const std::vector<Population>& groups, const AnalyzeOptions& o,
                      const fs::path& out_dir) {
  std::ostringstream os;
  os << "group,member,gram,count,freq\n";
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.images.size(); ++i) {
      const NgramHistogram h = MnemonicHistogram(Decode(g.images[i]), o.ngram);
      for (const auto& [gram, count] : h.counts) {
        os << g.name << ',' << g.labels[i] << ',' << GramToString(gram) << ',' << count << ','
           << Fixed(Freq(h, gram), 6) << '\n';
      }
    }
  }
  WriteTextFile(out_dir / ("histogram_n" + std::to_string(o.ngram) + ".csv"), os.str());
}

// Returns the number of distinct digests per group.
std::vector<std::size_t> AnalyzeCanon(const std::vector<Population>& groups, const fs::path& out_dir,
                                      const std::string& stem) {
  std::vector<std::size_t> uniques;
  std::ostringstream rows;
  std::ostringstream summary;
  rows << "group,member,digest\n";
  summary << "group,members,unique_digests\n";
  for (const auto& g : groups) {
    std::set<std::string> unique;
    for (std::size_t i = 0; i < g.images.size(); ++i) {
      const std::string d = Canonicalize(Decode(g.images[i])).digest;
      unique.insert(d);
      rows << g.name << ',' << g.labels[i] << ',' << d << '\n';
    }
    summary << g.name << ',' << g.images.size() << ',' << unique.size() << '\n';
    uniques.push_back(unique.size());
  }
  WriteTextFile(out_dir / (stem + ".csv"), rows.str());
  WriteTextFile(out_dir / (stem + "_summary.csv"), summary.str());
  return uniques;
}

}  // namespace

void Analyze(const std::string& subcommand, const std::vector<Population>& groups,
             const AnalyzeOptions& options, const fs::path& out_dir) {
  if (groups.empty()) throw HarnessError("no populations given");
  if (subcommand == "subseq") {
    AnalyzeSubseq(groups, options, out_dir);
  } else if (subcommand == "histogram") {
    AnalyzeHistogram(groups, options, out_dir);
  } else if (subcommand == "s-matrix") {
    WriteMatrix("s_n" + std::to_string(options.ngram), groups, Flatten(groups), Metric::kS,
                options.ngram, out_dir);
  } else if (subcommand == "jaccard") {
    const Metric m =
        options.metric == Metric::kJaccardWeighted ? Metric::kJaccardWeighted : Metric::kJaccardPairs;
    WriteMatrix(std::string(ToString(m)) + "_n" + std::to_string(options.ngram), groups,
                Flatten(groups), m, options.ngram, out_dir);
  } else if (subcommand == "cfg") {
    WriteMatrix("cfg", groups, Flatten(groups), Metric::kCfg, 1, out_dir);
  } else if (subcommand == "canon") {
    AnalyzeCanon(groups, out_dir, "canon");
  } else {
    throw HarnessError("unknown analyze subcommand: " + subcommand);
  }
}

std::vector<fs::path> CorpusFiles(const fs::path& corpus_dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(corpus_dir)) {
    if (entry.path().extension() == ".tasm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void RunExperiment(const fs::path& corpus_dir, const fs::path& out_dir,
                   const ExperimentOptions& options, std::ostream& log) {
  const auto files = CorpusFiles(corpus_dir);
  if (files.size() < 2) throw HarnessError("experiment needs at least two corpus programs");
  fs::create_directories(out_dir);
  const fs::path analysis = out_dir / "analysis";

  std::vector<Program> sources;
  std::vector<Population> populations;
  for (const auto& file : files) {
    const std::string name = file.stem().string();
    log << "diversifying " << name << "\n";
    Program p = ParseAssembly(ReadTextFile(file));
    const fs::path dir = out_dir / "populations" / name;
    DiversifyToDirectory(p, file.filename().string(), dir, options.variants, options.config);
    Population pop = LoadPopulation(dir);
    pop.name = name;
    populations.push_back(std::move(pop));
    sources.push_back(std::move(p));
  }

  log << "shared substrings\n";
  {
    std::vector<Population> small;
    for (const auto& pop : populations) {
      Population s = pop;
      const auto keep = static_cast<std::size_t>(std::min<int>(options.subseq_population,
                                                               static_cast<int>(s.images.size())));
      s.images.resize(keep);
      s.labels.resize(keep);
      small.push_back(std::move(s));
    }
    AnalyzeOptions o;
    o.min_len = options.min_len;
    Analyze("subseq", small, o, analysis);
  }

  log << "histograms and similarity matrices\n";
  const Flattened flat = Flatten(populations);
  std::vector<SimilarityMatrix> s_by_n;
  for (int n = 1; n <= 5; ++n) {
    AnalyzeOptions o;
    o.ngram = n;
    Analyze("histogram", populations, o, analysis);
    s_by_n.push_back(WriteMatrix("s_n" + std::to_string(n), populations, flat, Metric::kS, n, analysis));
  }
  const SimilarityMatrix jac = WriteMatrix("jaccard_n1", populations, flat, Metric::kJaccardPairs, 1, analysis);
  const SimilarityMatrix jacw =
      WriteMatrix("jaccard-weighted_n1", populations, flat, Metric::kJaccardWeighted, 1, analysis);
  const SimilarityMatrix cfg = WriteMatrix("cfg", populations, flat, Metric::kCfg, 1, analysis);

  log << "canonical digests\n";
  const std::vector<std::size_t> canon_unique = AnalyzeCanon(populations, analysis, "canon");
  std::vector<std::size_t> collapse_unique;
  {
    const DiversityConfig collapse_cfg =
        OnlyPasses(options.config, "nops,substitute,reorder,registers,blocks");
    std::vector<Population> collapse;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      Population pop;
      pop.name = populations[i].name;
      for (int v = 0; v < options.variants; ++v) {
        DiversityConfig c = collapse_cfg;
        c.seed = VariantSeed(collapse_cfg.seed, static_cast<std::uint64_t>(v));
        pop.images.push_back(Encode(Diversify(sources[i], c)));
        pop.labels.push_back(fs::path(VariantName(v)).stem().string());
      }
      collapse.push_back(std::move(pop));
    }
    collapse_unique = AnalyzeCanon(collapse, analysis, "canon_collapse");
  }

  log << "evasion\n";
  std::ostringstream evasion_summary;
  evasion_summary << "program,trials,trials_with_signature,mean_match_rate,effective_match_rate,"
                     "false_positive_rate\n";
  std::vector<EvasionReport> evasion;
  auto summarize = [&](const std::string& name, const EvasionReport& r) {
    evasion_summary << name << ',' << r.trials.size() << ',' << r.trials_with_signature << ','
                    << Fixed(r.mean_match_rate, 6) << ',' << Fixed(r.effective_match_rate, 6)
                    << ',' << Fixed(r.false_positive_rate, 6) << '\n';
  };
  for (std::size_t i = 0; i < populations.size(); ++i) {
    std::vector<ByteImage> benign;
    for (std::size_t j = 0; j < populations.size(); ++j) {
      if (j != i) benign.insert(benign.end(), populations[j].images.begin(), populations[j].images.end());
    }
    const EvasionReport r =
        EvasionExperiment(populations[i].images, benign, options.evasion_k, options.signature_len,
                          options.evasion_trials, options.config.seed);
    WriteTextFile(out_dir / "evasion" / (populations[i].name + ".csv"), EvasionToCsv(r));
    summarize(populations[i].name, r);
    evasion.push_back(r);
  }
  {
    // Control arm: identical copies of the largest program.
    std::size_t largest = 0;
    for (std::size_t i = 1; i < sources.size(); ++i) {
      if (sources[i].instruction_count() > sources[largest].instruction_count()) largest = i;
    }
    const ByteImage copy = Encode(StripSymbols(sources[largest]));
    const std::vector<ByteImage> copies(static_cast<std::size_t>(options.variants), copy);
    const EvasionReport r = EvasionExperiment(copies, {}, options.evasion_k, options.signature_len,
                                              options.evasion_trials, options.config.seed);
    WriteTextFile(out_dir / "evasion" / "control_identical.csv", EvasionToCsv(r));
    summarize("control_identical:" + populations[largest].name, r);
  }
  WriteTextFile(out_dir / "evasion" / "summary.csv", evasion_summary.str());

  // Per-program headline numbers; every value also appears in the files above.
  std::ostringstream report;
  report << "program,instructions,variants,s_n1_within,s_n5_within,jaccard_within,"
            "jaccard_weighted_within,cfg_within,canon_unique,canon_collapse_unique,"
            "evasion_signatures,evasion_match_rate\n";
  for (std::size_t i = 0; i < populations.size(); ++i) {
    const auto& g = flat.groups[i];
    report << populations[i].name << ',' << sources[i].instruction_count() << ','
           << populations[i].images.size() << ',' << Fixed(s_by_n.front().WithinMean(g), 6) << ','
           << Fixed(s_by_n.back().WithinMean(g), 6) << ',' << Fixed(jac.WithinMean(g), 6) << ','
           << Fixed(jacw.WithinMean(g), 6) << ',' << Fixed(cfg.WithinMean(g), 6) << ','
           << canon_unique[i] << ',' << collapse_unique[i] << ',' << evasion[i].trials_with_signature
           << '/' << evasion[i].trials.size() << ',' << Fixed(evasion[i].effective_match_rate, 6) << '\n';
  }
  WriteTextFile(out_dir / "report.csv", report.str());

  std::ostringstream summary;
  summary << "programs=" << populations.size() << "\n"
          << "variants=" << options.variants << "\n"
          << "config_digest=" << Sha256Hex(FormatConfig(options.config)) << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %6s %8s %8s %8s %8s %6s %8s %8s\n", "program", "insns", "S(n=1)",
                "S(n=5)", "JS", "cfg", "canon", "collapse", "evasion");
  summary << line;
  for (std::size_t i = 0; i < populations.size(); ++i) {
    const auto& g = flat.groups[i];
    std::snprintf(line, sizeof line, "%-14s %6zu %8.4f %8.4f %8.4f %8.4f %6zu %8zu %8.4f\n",
                  populations[i].name.c_str(), sources[i].instruction_count(), s_by_n.front().WithinMean(g),
                  s_by_n.back().WithinMean(g), jac.WithinMean(g), cfg.WithinMean(g), canon_unique[i],
                  collapse_unique[i], evasion[i].effective_match_rate);
    summary << line;
  }
  WriteTextFile(out_dir / "summary.txt", summary.str());
  log << "done\n";
}

}  // namespace divlab
