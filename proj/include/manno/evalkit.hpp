#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "manno/models.hpp"
#include "manno/uncert.hpp"

namespace manno {

// --- classification metrics ---------------------------------------------------

struct PRF {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
  bool degenerate = false;  // some zero denominator was coerced to 0
};

PRF prf(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);

// aggregate prediction vs the gold majority label over `idx`
PRF majority_eval(const AnyModel& model, const AnnotationMatrix& m,
                  const std::vector<std::size_t>& idx,
                  Exec ex = default_exec());

// micro-averaged over every observed (instance, annotator) cell
struct IndividualEval {
  PRF scores;
  std::size_t evaluated_cells = 0;
  std::size_t skipped_flagged_cells = 0;  // cells of untrained annotators
};

// per-annotator predictions against each annotator's own labels; throws
// UnsupportedOperationError for the baseline, which has no such predictions
IndividualEval individual_label_eval(const AnyModel& model,
                                     const AnnotationMatrix& m,
                                     const std::vector<std::size_t>& idx,
                                     Exec ex = default_exec());
// the model's single aggregate prediction scored against every observed cell
// (how well one label per instance can do against individual annotators)
IndividualEval majority_vs_individual_eval(const AnyModel& model,
                                           const AnnotationMatrix& m,
                                           const std::vector<std::size_t>& idx,
                                           Exec ex = default_exec());

// --- correlation ----------------------------------------------------------------

// two-pass Pearson r; ArgumentError under 3 points or on length mismatch,
// UndefinedCorrelationError when either input is constant
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct ScoreColumn {
  std::string name;  // "variance:multitask", "softmax:baseline", ...
  std::vector<double> values;
};

// which trained models feed the uncertainty columns; any subset may be set
struct EstimatorSet {
  const BaselineModel* baseline = nullptr;
  const EnsembleModel* ensemble = nullptr;
  const MultiLabelModel* multilabel = nullptr;
  const MultiTaskModel* multitask = nullptr;
  const DisagreementModel* regressor = nullptr;
  int mc_samples = 30;        // 0 disables the MC-dropout column
  std::uint64_t mc_seed = 0;
};

std::vector<ScoreColumn> uncertainty_columns(
    const EstimatorSet& set, const AnnotationMatrix& m,
    const std::vector<std::size_t>& idx, Exec ex = default_exec());

struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> r;  // unit diagonal, mirrored exactly
};
CorrelationMatrix pairwise_estimator_correlation(
    const std::vector<ScoreColumn>& columns);

// --- uncertainty vs errors --------------------------------------------------------

struct BucketStats {
  std::size_t count = 0;
  // NaN when the bucket is empty
  double mean, min, max, median;
};

// uncertainty grouped by prediction outcome against the gold label
struct ErrorBuckets {
  BucketStats correct, incorrect, tp, fp, fn, tn;
};
ErrorBuckets error_buckets(const std::vector<int>& preds,
                           const std::vector<int>& golds,
                           const std::vector<double>& uncertainty);

// --- where the baseline and the multi-task model part ways -----------------------

struct MismatchExample {
  std::string instance_id;
  double prediction_fraction = 0.0;  // multi-task positive-vote share
  double annotation_fraction = 0.0;  // human positive-vote share
};

struct MismatchCell {
  int gold = 0, baseline = 0, multitask = 0;
  std::size_t count = 0;
  double pct_of_disagreements = 0.0;
  double mean_prediction_fraction = 0.0;
  double mean_annotation_fraction = 0.0;
  std::vector<MismatchExample> examples;  // capped
};

struct MismatchReport {
  std::size_t n_instances = 0;
  std::size_t n_disagreements = 0;
  std::size_t baseline_right = 0, multitask_right = 0;
  std::vector<MismatchCell> cells;  // the 4 (gold, bl, mt) combinations
};

MismatchReport mismatch_analysis(const BaselineModel& bl,
                                 const MultiTaskModel& mt,
                                 const AnnotationMatrix& m,
                                 const std::vector<std::size_t>& idx,
                                 std::size_t example_cap = 5);

// --- repeated cross-validation -----------------------------------------------------

struct CvConfig {
  std::vector<Arch> archs{Arch::Baseline, Arch::MultiTask};
  int k = 5;
  int iterations = 1;
  std::uint64_t master_seed = 1;
  TrainConfig train;
  bool train_regressor = false;
  int mc_samples = 30;
  // optional per-instance generator truth, aligned with matrix order
  const std::vector<double>* true_disagreement = nullptr;
};

struct RunRecord {
  int iteration = 0, fold = 0;
  std::string arch;
  std::uint64_t seed = 0;
  PRF majority;
  IndividualEval individual;  // vs-individual flavor for the baseline
  double train_seconds = 0.0;
};

struct RegressorRecord {
  int iteration = 0, fold = 0;
  std::uint64_t seed = 0;
  double test_mse = 0.0;
  double train_seconds = 0.0;
};

struct CorrelationRecord {
  int iteration = 0;
  std::string estimator;
  std::optional<double> r_vs_disagreement;  // empty when undefined (constant)
  std::optional<double> r_vs_truth;
};

struct ArchSummary {
  std::string arch;
  std::size_t runs = 0;
  double majority_f1_mean = 0.0, majority_f1_sd = 0.0;  // population sd
  double individual_f1_mean = 0.0, individual_f1_sd = 0.0;
};

struct CvResult {
  std::vector<RunRecord> runs;
  std::vector<RegressorRecord> regressor_runs;
  std::vector<CorrelationRecord> correlations;
  std::vector<ArchSummary> summaries;           // recomputable from runs
  std::vector<std::vector<std::size_t>> fold_sizes;  // per iteration
};

// iterations x k stratified folds; every (arch, iteration, fold) trains one
// model seeded by derive_seed(derive_seed(master, "iter", i), arch, fold).
// Estimator correlations pool the k test folds of one iteration.
CvResult cross_validate(const AnnotationMatrix& m, const CvConfig& cfg);

// mean and population sd of per-run majority/individual F1, per architecture
std::vector<ArchSummary> summarize_runs(const std::vector<RunRecord>& runs);

}  // namespace manno
