#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace manno {

// How exact 50/50 votes are resolved, both for gold majority labels and for
// aggregated predictions. Default is positive (label 1).
enum class TiePolicy { Positive, Negative };

struct Instance {
  std::string id;
  std::string text;
  std::optional<std::vector<double>> embedding;  // frozen-embedding mode
};

struct Entry {
  int annotator = 0;  // column index into AnnotationMatrix::annotators
  int label = 0;      // 0 or 1
};

// Sparse instance x annotator label matrix. Missing entries are simply absent
// from the row — there is no sentinel label. Immutable after construction;
// safe to share across threads.
struct AnnotationMatrix {
  std::vector<Instance> instances;
  std::vector<std::string> annotators;
  std::vector<std::vector<Entry>> rows;  // rows[i] sorted by annotator index
  TiePolicy tie_policy = TiePolicy::Positive;
  int embedding_dim = 0;  // 0 when instances carry no embeddings

  std::size_t n_instances() const { return instances.size(); }
  std::size_t n_annotators() const { return annotators.size(); }
  std::size_t n_entries() const;
  std::vector<std::size_t> annotator_counts() const;  // entries per column
};

// Validates all matrix invariants (labels in {0,1}, indices in range, rows
// sorted without duplicates, every instance and annotator covered, unique
// instance ids, consistent embedding dimension). Throws ValidationError.
AnnotationMatrix make_matrix(std::vector<Instance> instances,
                             std::vector<std::string> annotators,
                             std::vector<std::vector<Entry>> rows,
                             TiePolicy tie_policy = TiePolicy::Positive);

// Shared core of majority voting and the disagreement measure, also used on
// predicted annotations. `total` > 0.
int majority_of(std::size_t ones, std::size_t total, TiePolicy tie_policy);
// (#1s * #0s) / n^2, the population variance of a binary vector; in [0, 0.25].
double binary_label_variance(std::size_t ones, std::size_t total);

int majority_label(const AnnotationMatrix& m, std::size_t i);
double disagreement(const AnnotationMatrix& m, std::size_t i);

struct DatasetSplit {
  int k = 0;
  std::vector<int> fold_of;                     // instance index -> fold id
  std::vector<std::vector<std::size_t>> folds;  // ascending indices per fold
  // coverage[fold][annotator] = number of annotations (post-hoc report, not
  // an enforced constraint)
  std::vector<std::vector<std::size_t>> coverage;

  const std::vector<std::size_t>& test_indices(int fold) const;
  int val_fold(int fold) const { return (fold + 1) % k; }
  // All instances outside the test fold; when hold_out_val is set, the
  // validation fold (the next fold cyclically) is excluded as well.
  std::vector<std::size_t> train_indices(int fold, bool hold_out_val) const;
  std::vector<std::size_t> val_indices(int fold) const;
};

// Stratified on the majority label: shuffled positives and negatives are
// dealt round-robin with a shared counter, so per-fold positive counts and
// fold sizes each stay within 1 of the proportional share.
DatasetSplit stratified_kfold(const AnnotationMatrix& m, int k,
                              std::uint64_t seed);

// Single stratified holdout split, expressed as a 1-fold DatasetSplit would
// be awkward; fixed mode returns explicit index sets instead.
struct FixedSplit {
  std::vector<std::size_t> train, val, test;
};
FixedSplit fixed_split(const AnnotationMatrix& m, double test_fraction,
                       double val_fraction, std::uint64_t seed);

struct FilterResult {
  AnnotationMatrix matrix;
  std::size_t dropped_annotators = 0;
  std::size_t dropped_instances = 0;
  std::size_t dropped_entries = 0;
};

// Keeps annotators with strictly more than min_annotations entries, then
// drops instances left without any annotation. Idempotent per threshold.
FilterResult filter_annotators(const AnnotationMatrix& m,
                               std::size_t min_annotations);

enum class CorpusFormat { Jsonl, Csv };

// One annotation per record: instance_id, text and/or embedding,
// annotator_id, label. Instance and annotator order is first appearance.
AnnotationMatrix load_corpus(const std::string& path, CorpusFormat format);
void save_corpus(const AnnotationMatrix& m, const std::string& path,
                 CorpusFormat format);

struct MatrixStats {
  std::size_t n_instances = 0, n_annotators = 0, n_entries = 0;
  double annotations_per_instance_mean = 0, annotations_per_instance_sd = 0;
  double annotations_per_annotator_mean = 0, annotations_per_annotator_sd = 0;
  double positive_rate = 0;           // fraction of 1-entries
  double majority_positive_rate = 0;  // fraction of positive majority labels
};
MatrixStats matrix_stats(const AnnotationMatrix& m);
std::string format_stats(const MatrixStats& s);

}  // namespace manno
