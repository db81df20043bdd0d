#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "corpus.hpp"
#include "divlab/canonical.hpp"
#include "divlab/diversifier.hpp"
#include "divlab/encoding.hpp"
#include "divlab/harness.hpp"
#include "divlab/signature.hpp"

using namespace divlab;

namespace {

fs::path FreshDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("divlab_test_" + std::to_string(getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> ReadCsv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(ReadTextFile(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

fs::path CorpusPath(const std::string& name) { return testing_support::CorpusDir() / (name + ".tasm"); }

DiversityConfig Seeded(std::uint64_t seed) {
  DiversityConfig c;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("diversify to a directory is deterministic") {
  const Program p = LoadProgram(CorpusPath("sort"));
  const fs::path a = FreshDir("det_a"), b = FreshDir("det_b");
  const Manifest ma = DiversifyToDirectory(p, "sort.tasm", a, 10, Seeded(7));
  const Manifest mb = DiversifyToDirectory(p, "sort.tasm", b, 10, Seeded(7));
  CHECK(ma == mb);
  CHECK(ReadTextFile(a / "manifest.csv") == ReadTextFile(b / "manifest.csv"));
  REQUIRE(ma.entries.size() == 10);
  std::set<std::string> hashes;
  for (const auto& e : ma.entries) {
    hashes.insert(e.sha256);
    CHECK(ReadTextFile(a / e.image) == ReadTextFile(b / e.image));
    CHECK(e.bytes == fs::file_size(a / e.image));
    CHECK(e.seed == VariantSeed(7, static_cast<std::uint64_t>(e.variant)));
    // Regenerating from the manifest seed gives the same image.
    DiversityConfig c = Seeded(e.seed);
    CHECK(LoadImage(a / e.image) == Encode(Diversify(p, c)));
  }
  CHECK(hashes.size() == 10);
  CHECK(ReadManifest(a / "manifest.csv") == ma);
  CHECK(ParseManifest(ManifestToCsv(ma)) == ma);
}

TEST_CASE("a single identity variant is the stripped assembly") {
  const Program p = LoadProgram(CorpusPath("fib"));
  DiversityConfig c = Seeded(99);
  c.identity = true;
  const fs::path dir = FreshDir("identity");
  const Manifest m = DiversifyToDirectory(p, "fib.tasm", dir, 1, c);
  REQUIRE(m.entries.size() == 1);
  CHECK(LoadImage(dir / m.entries[0].image) == Encode(StripSymbols(p)));
}

TEST_CASE("populations load from manifests and verify hashes") {
  const Program p = LoadProgram(CorpusPath("fib"));
  const fs::path dir = FreshDir("fibpop");
  DiversifyToDirectory(p, "fib.tasm", dir, 4, Seeded(1));
  const Population a = LoadPopulation(dir);
  const Population b = LoadPopulation(dir / "manifest.csv");
  CHECK(a.name == "fibpop");
  CHECK(a.images.size() == 4);
  CHECK(a.images == b.images);
  CHECK(a.labels == std::vector<std::string>{"variant_00", "variant_01", "variant_02", "variant_03"});

  const fs::path loose = FreshDir("loose");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".tbin") fs::copy_file(entry.path(), loose / entry.path().filename());
  }
  CHECK(LoadPopulation(loose).images == a.images);

  std::vector<std::uint8_t> raw = Serialize(a.images[0]);
  raw.back() ^= 1;
  std::ofstream(dir / "variant_00.tbin", std::ios::binary).write(reinterpret_cast<const char*>(raw.data()),
                                                                static_cast<std::streamsize>(raw.size()));
  CHECK_THROWS_AS(LoadPopulation(dir), HarnessError);
}

TEST_CASE("jaccard within-group mean is the mean of the pairs") {
  const fs::path dir = FreshDir("jac_pop"), out = FreshDir("jac_out");
  DiversifyToDirectory(LoadProgram(CorpusPath("checksum")), "checksum.tasm", dir, 3, Seeded(5));
  AnalyzeOptions o;
  Analyze("jaccard", {LoadPopulation(dir)}, o, out);
  const auto matrix = ReadCsv(out / "jaccard_n1_matrix.csv");
  REQUIRE(matrix.size() == 4);
  auto cell = [&](int i, int j) { return std::stod(matrix[i + 1][j + 1]); };
  for (int i = 0; i < 3; ++i) {
    CHECK(cell(i, i) == 1.0);
    for (int j = 0; j < 3; ++j) CHECK(cell(i, j) == cell(j, i));
  }
  const auto groups = ReadCsv(out / "jaccard_n1_groups.csv");
  REQUIRE(groups.size() == 2);
  CHECK(groups[1][2] == "within");
  CHECK(groups[1][3] == "3");
  const double mean = (cell(0, 1) + cell(0, 2) + cell(1, 2)) / 3.0;
  CHECK(std::fabs(std::stod(groups[1][4]) - mean) < 1e-6);
  CHECK(std::fabs(std::stod(groups[1][5]) - std::min({cell(0, 1), cell(0, 2), cell(1, 2)})) < 1e-6);
}

TEST_CASE("cross-group means recompute from the matrix") {
  const fs::path a = FreshDir("fibx"), b = FreshDir("sortx"), out = FreshDir("cross_out");
  DiversifyToDirectory(LoadProgram(CorpusPath("fib")), "fib.tasm", a, 3, Seeded(2));
  DiversifyToDirectory(LoadProgram(CorpusPath("sort")), "sort.tasm", b, 3, Seeded(2));
  AnalyzeOptions o;
  o.ngram = 2;
  Analyze("s-matrix", {LoadPopulation(a), LoadPopulation(b)}, o, out);
  const auto matrix = ReadCsv(out / "s_n2_matrix.csv");
  REQUIRE(matrix.size() == 7);
  double sum = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 3; j < 6; ++j) sum += std::stod(matrix[i + 1][j + 1]);
  }
  const auto groups = ReadCsv(out / "s_n2_groups.csv");
  REQUIRE(groups.size() == 4);
  CHECK(groups[3][2] == "cross");
  CHECK(groups[3][3] == "9");
  CHECK(std::fabs(std::stod(groups[3][4]) - sum / 9.0) < 1e-6);
}

TEST_CASE("subseq counts fall with the quorum") {
  const fs::path dir = FreshDir("subpop"), out = FreshDir("sub_out");
  DiversifyToDirectory(LoadProgram(CorpusPath("interp")), "interp.tasm", dir, 5, Seeded(42));
  const Population pop = LoadPopulation(dir);
  AnalyzeOptions o;
  Analyze("subseq", {pop}, o, out);
  std::map<int, std::size_t> per_quorum;
  for (int q = 2; q <= 5; ++q) per_quorum[q] = 0;
  const auto rows = ReadCsv(out / "subseq_subpop_lengths.csv");
  REQUIRE(rows[0] == std::vector<std::string>{"quorum", "length", "count"});
  for (std::size_t r = 1; r < rows.size(); ++r) per_quorum[std::stoi(rows[r][0])] += std::stoul(rows[r][2]);
  CHECK(per_quorum.size() == 4);
  for (int q = 2; q <= 5; ++q) {
    CHECK(per_quorum[q] == SharedSubstrings(std::span<const ByteImage>(pop.images), 10, q).size());
    if (q > 2) CHECK(per_quorum[q] <= per_quorum[q - 1]);
  }
  std::map<int, std::size_t> by_category;
  const auto cats = ReadCsv(out / "subseq_subpop_categories.csv");
  for (std::size_t r = 1; r < cats.size(); ++r) by_category[std::stoi(cats[r][0])] += std::stoul(cats[r][2]);
  for (int q = 2; q <= 5; ++q) CHECK(by_category[q] == per_quorum[q]);

  o.quorum = 6;
  CHECK_THROWS_AS(Analyze("subseq", {pop}, o, out), HarnessError);
  CHECK_THROWS_AS(Analyze("bindiff", {pop}, AnalyzeOptions{}, out), HarnessError);
}

TEST_CASE("canon on a nop-only population has one digest") {
  const fs::path dir = FreshDir("noppop"), out = FreshDir("canon_out");
  const Program p = LoadProgram(CorpusPath("statemachine"));
  DiversifyToDirectory(p, "statemachine.tasm", dir, 5, OnlyPasses(Seeded(3), "nops"));
  Analyze("canon", {LoadPopulation(dir)}, AnalyzeOptions{}, out);
  const auto summary = ReadCsv(out / "canon_summary.csv");
  REQUIRE(summary.size() == 2);
  CHECK(summary[1] == std::vector<std::string>{"noppop", "5", "1"});
  const auto rows = ReadCsv(out / "canon.csv");
  REQUIRE(rows.size() == 6);
  for (std::size_t r = 1; r < rows.size(); ++r) CHECK(rows[r][2] == rows[1][2]);
}

TEST_CASE("histogram frequencies sum to one per member") {
  const fs::path dir = FreshDir("histpop"), out = FreshDir("hist_out");
  DiversifyToDirectory(LoadProgram(CorpusPath("matmul")), "matmul.tasm", dir, 3, Seeded(8));
  AnalyzeOptions o;
  o.ngram = 3;
  Analyze("histogram", {LoadPopulation(dir)}, o, out);
  std::map<std::string, double> sums;
  std::map<std::string, std::uint64_t> counts;
  const auto rows = ReadCsv(out / "histogram_n3.csv");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    sums[rows[r][1]] += std::stod(rows[r][4]);
    counts[rows[r][1]] += std::stoull(rows[r][3]);
  }
  CHECK(sums.size() == 3);
  for (const auto& [member, s] : sums) CHECK(std::fabs(s - 1.0) < 1e-4);
}

TEST_CASE("experiment output is a pure function of its inputs") {
  const fs::path corpus = FreshDir("mini_corpus");
  for (const std::string name : {"fib", "sort", "checksum"}) fs::copy_file(CorpusPath(name), corpus / (name + ".tasm"));
  ExperimentOptions o;
  o.config.seed = 11;
  o.variants = 4;
  o.subseq_population = 3;
  o.evasion_trials = 4;
  const fs::path a = FreshDir("exp_a"), b = FreshDir("exp_b");
  std::ostringstream log;
  RunExperiment(corpus, a, o, log);
  RunExperiment(corpus, b, o, log);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(entry.path(), a);
    REQUIRE(fs::exists(b / rel));
    CHECK_MESSAGE(ReadTextFile(entry.path()) == ReadTextFile(b / rel), rel.string());
  }
  CHECK(files > 20);
  const auto control = ReadCsv(a / "evasion" / "control_identical.csv");
  for (std::size_t r = 1; r < control.size(); ++r) CHECK(control[r][4] == control[r][3]);

  // The report's numbers recompute from the detailed tables.
  const auto report = ReadCsv(a / "report.csv");
  REQUIRE(report.size() == 4);
  const auto jac = ReadCsv(a / "analysis" / "jaccard_n1_groups.csv");
  const auto cfg = ReadCsv(a / "analysis" / "cfg_groups.csv");
  const auto collapse = ReadCsv(a / "analysis" / "canon_collapse_summary.csv");
  const auto evasion = ReadCsv(a / "evasion" / "summary.csv");
  for (std::size_t r = 1; r < report.size(); ++r) {
    CHECK(report[r][0] == jac[r][0]);
    CHECK(report[r][5] == jac[r][4]);
    CHECK(report[r][7] == cfg[r][4]);
    CHECK(report[r][9] == collapse[r][2]);
    CHECK(report[r][11] == evasion[r][4]);
    CHECK(std::stoul(report[r][9]) == 1);
  }
}

TEST_CASE("experiment needs two programs") {
  const fs::path corpus = FreshDir("tiny_corpus");
  fs::copy_file(CorpusPath("fib"), corpus / "fib.tasm");
  std::ostringstream log;
  CHECK_THROWS_AS(RunExperiment(corpus, FreshDir("tiny_out"), ExperimentOptions{}, log), HarnessError);
}
