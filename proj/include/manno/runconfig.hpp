#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "manno/corpus.hpp"
#include "manno/models.hpp"
#include "manno/synthetic.hpp"

namespace manno {

// How test folds are produced: repeated stratified k-fold CV, or one fixed
// stratified holdout (which the pipeline treats as a single fold).
struct SplitConfig {
  bool cv = true;
  int k = 5;
  int iterations = 1;
  double test_fraction = 0.2;  // fixed mode only
  double val_fraction = 0.1;
};

// Which uncertainty estimators the eval/compare reports include.
struct EstimatorConfig {
  bool variance = true;    // predicted-annotation variance, per-annotator archs
  bool softmax = true;     // baseline softmax margin
  bool mc_dropout = true;  // baseline MC dropout
  bool regressor = false;  // dedicated disagreement regressor (extra training)
  int mc_samples = 30;
  std::size_t example_cap = 5;  // mismatch examples kept per cell
};

// One config file drives one run directory. Exactly one data source: either a
// corpus on disk or a synthetic generator section.
struct RunConfig {
  std::string corpus_path;  // empty in synthetic mode
  CorpusFormat corpus_format = CorpusFormat::Jsonl;
  std::optional<SyntheticConfig> synthetic;
  std::string truth_path;  // optional generator-truth sidecar for a corpus
  std::string out_dir = "manno-out";
  std::uint64_t seed = 1;
  std::size_t min_annotations = 0;  // drop sparser annotators up front
  std::vector<Arch> archs{Arch::Baseline, Arch::MultiTask};
  TrainConfig train;
  SplitConfig split;
  EstimatorConfig estimators;
};

// Strict parse: unknown or mistyped keys raise ValidationError naming the
// offending field path; files referenced by the config must already exist.
// `origin` labels error messages (normally the config path).
RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

// Canonical JSON echo with every default filled in; written into the output
// directory so a run can be reproduced from its artifacts alone. Parsing the
// echo yields the same config back.
std::string config_echo(const RunConfig& cfg);

}  // namespace manno
