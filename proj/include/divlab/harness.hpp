#ifndef DIVLAB_HARNESS_HPP
#define DIVLAB_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "divlab/diversifier.hpp"
#include "divlab/encoding.hpp"
#include "divlab/metrics.hpp"

namespace divlab {

namespace fs = std::filesystem;

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The three input vectors every trace comparison runs under.
const std::vector<std::vector<std::uint32_t>>& StandardInputs();

std::string ReadTextFile(const fs::path& path);
void WriteTextFile(const fs::path& path, const std::string& text);

// .tasm is parsed, anything else is read as a .tbin image and decoded.
Program LoadProgram(const fs::path& path);
ByteImage LoadImage(const fs::path& path);

struct ManifestEntry {
  int variant = 0;
  std::uint64_t seed = 0;
  std::string image;  // relative to the manifest's directory
  std::size_t bytes = 0;
  std::string sha256;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::string source;
  std::string config_digest;
  std::vector<ManifestEntry> entries;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

std::string ManifestToCsv(const Manifest& m);
Manifest ParseManifest(const std::string& text);
Manifest ReadManifest(const fs::path& path);

// Writes variant_NN.tbin, manifest.csv and config.txt into out_dir. Variant i
// uses VariantSeed(cfg.seed, i).
Manifest DiversifyToDirectory(const Program& p, const std::string& source, const fs::path& out_dir,
                              int variants, const DiversityConfig& cfg);

struct Population {
  std::string name;
  std::vector<std::string> labels;
  std::vector<ByteImage> images;
};

// A manifest.csv file, a directory holding one, or a directory of .tbin files.
Population LoadPopulation(const fs::path& path);

struct AnalyzeOptions {
  std::size_t min_len = 10;
  int quorum = 2;
  int ngram = 1;
  Metric metric = Metric::kJaccardPairs;
};

// subcommand: subseq, histogram, s-matrix, jaccard, cfg or canon. Each group
// is one population. Writes CSV files into out_dir.
void Analyze(const std::string& subcommand, const std::vector<Population>& groups,
             const AnalyzeOptions& options, const fs::path& out_dir);

struct ExperimentOptions {
  DiversityConfig config;
  int variants = 10;
  int subseq_population = 5;
  std::size_t min_len = 10;
  int evasion_k = 2;
  std::size_t signature_len = 25;
  int evasion_trials = 20;
};

// Full evaluation over every .tasm in corpus_dir. Output is a pure function
// of the corpus and the options.
void RunExperiment(const fs::path& corpus_dir, const fs::path& out_dir,
                   const ExperimentOptions& options, std::ostream& log);

std::vector<fs::path> CorpusFiles(const fs::path& corpus_dir);

}  // namespace divlab

#endif  // DIVLAB_HARNESS_HPP
