#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "manno/corpus.hpp"
#include "manno/nn.hpp"
#include "manno/parallel.hpp"

namespace manno {

enum class Arch { Baseline, Ensemble, MultiLabel, MultiTask };
std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);  // ArgumentError

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 1e-3;
  double dropout = 0.1;
  bool early_stopping = false;
  int patience = 3;  // epochs past the best validation score
  std::uint64_t seed = 1;
  int embed_dim = 32;
  int hidden_dim = 64;
  int repr_dim = 64;
  std::size_t vocab_min_count = 1;
  Exec exec = Exec::Serial;
};
void validate(const TrainConfig& cfg);

// train / validation instance indices; val may be empty when early stopping
// is off
struct SplitView {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
SplitView split_view(const DatasetSplit& split, int fold, bool hold_out_val);
SplitView split_view(const FixedSplit& split);

struct TrainTracePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1 = -1.0;  // -1 when no validation ran this epoch
  bool is_best = false;
};

// encoder + head parameters and the vocabulary they were trained with
struct ModelCore {
  EncoderConfig enc;
  Vocabulary vocab;
  ParamLayout layout;
  std::vector<double> params;
};

struct BaselineModel {
  ModelCore core;
  TiePolicy tie_policy = TiePolicy::Positive;
  TrainConfig cfg;
  std::vector<TrainTracePoint> trace;
};

struct MultiTaskModel {
  ModelCore core;  // shared encoder + per-annotator softmax heads
  std::vector<std::string> annotators;
  std::vector<std::uint8_t> flagged;  // no observed train labels; kept at init
  TiePolicy tie_policy = TiePolicy::Positive;
  TrainConfig cfg;
  std::vector<TrainTracePoint> trace;
};

struct MultiLabelModel {
  ModelCore core;  // shared encoder + one |A| x d sigmoid layer
  std::vector<std::string> annotators;
  std::vector<std::uint8_t> flagged;
  TiePolicy tie_policy = TiePolicy::Positive;
  TrainConfig cfg;
  std::vector<TrainTracePoint> trace;
};

struct EnsembleModel {
  EncoderConfig enc;  // every member uses this shape and vocabulary
  Vocabulary vocab;
  ParamLayout member_layout;
  std::vector<std::vector<double>> member_params;  // |A| members
  std::vector<std::string> annotators;
  std::vector<std::uint8_t> flagged;  // empty member train set; left at init
  TiePolicy tie_policy = TiePolicy::Positive;
  TrainConfig cfg;
  std::vector<std::vector<TrainTracePoint>> traces;
};

BaselineModel train_baseline(const AnnotationMatrix& m, const SplitView& sv,
                             const TrainConfig& cfg);
// member j trains only on train instances annotated by j, seeded with
// cfg.seed + j; throws TrainingError if every member would be empty
EnsembleModel train_ensemble(const AnnotationMatrix& m, const SplitView& sv,
                             const TrainConfig& cfg);
MultiLabelModel train_multilabel(const AnnotationMatrix& m,
                                 const SplitView& sv, const TrainConfig& cfg);
MultiTaskModel train_multitask(const AnnotationMatrix& m, const SplitView& sv,
                               const TrainConfig& cfg);

// --- prediction -------------------------------------------------------------

struct AnnotationPrediction {
  std::vector<double> prob;           // P(label 1), per annotator slot
  std::vector<std::uint8_t> present;  // 0 for flagged (untrained) slots
  std::vector<int> label;             // prob >= 0.5, ties to positive
};

struct MajorityPrediction {
  int label = 0;
  // baseline: P(label 1); the rest: fraction of present slots voting 1
  double score = 0.0;
};

AnnotationPrediction predict_annotations(const EnsembleModel& m,
                                         const Instance& x);
AnnotationPrediction predict_annotations(const MultiLabelModel& m,
                                         const Instance& x);
AnnotationPrediction predict_annotations(const MultiTaskModel& m,
                                         const Instance& x);

MajorityPrediction predict_majority(const BaselineModel& m, const Instance& x);
MajorityPrediction predict_majority(const EnsembleModel& m, const Instance& x);
MajorityPrediction predict_majority(const MultiLabelModel& m,
                                    const Instance& x);
MajorityPrediction predict_majority(const MultiTaskModel& m,
                                    const Instance& x);

using AnyModel =
    std::variant<BaselineModel, EnsembleModel, MultiLabelModel, MultiTaskModel>;

Arch arch_of(const AnyModel& m);
AnyModel train_model(Arch arch, const AnnotationMatrix& m, const SplitView& sv,
                     const TrainConfig& cfg);
// throws UnsupportedOperationError for the baseline (it has no per-annotator
// outputs)
AnnotationPrediction predict_annotations(const AnyModel& m, const Instance& x);
MajorityPrediction predict_majority(const AnyModel& m, const Instance& x);
const std::vector<std::uint8_t>& flagged_slots(const AnyModel& m);

std::vector<MajorityPrediction> predict_majority_batch(
    const AnyModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, Exec ex = default_exec());
std::vector<AnnotationPrediction> predict_annotations_batch(
    const AnyModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, Exec ex = default_exec());

// --- checkpoints --------------------------------------------------------------

// versioned JSON container; numeric values survive round trips exactly
void save_checkpoint(const AnyModel& m, const std::string& path);
AnyModel load_checkpoint(const std::string& path);

// --- disagreement regressor -----------------------------------------------------

// trained to output the annotation-variance measure directly; the head is
// 0.25 * sigmoid, so predictions live in the measure's (0, 0.25) range
struct DisagreementModel {
  ModelCore core;
  TrainConfig cfg;
  std::vector<TrainTracePoint> trace;
};

// squared-error training against each instance's gold disagreement; early
// stopping minimizes validation MSE
DisagreementModel train_disagreement(const AnnotationMatrix& m,
                                     const SplitView& sv,
                                     const TrainConfig& cfg);
double predict_disagreement(const DisagreementModel& m, const Instance& x);
std::vector<double> predict_disagreement_batch(
    const DisagreementModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, Exec ex = default_exec());

// --- training internals -------------------------------------------------------
// Exposed for the gradient/masking tests and the kernel benchmark; everything
// below is what the train_* loops run per batch.

// what the heads predict and which loss applies
enum class TargetKind {
  MajoritySoftmax,      // one softmax head on the majority (or member) label
  PerAnnotatorSoftmax,  // |A| softmax heads, masked cross-entropy
  PerAnnotatorSigmoid,  // |A|-dim sigmoid layer, masked BCE
  DisagreementRegressor // 0.25 * sigmoid, squared error vs gold disagreement
};

ParamLayout make_layout(TargetKind kind, const EncoderConfig& enc,
                        std::size_t n_targets);

// one prepared training instance: token ids plus a dense label row with an
// observation mask (cells with observed[j] == 0 must never influence the
// loss — the masking tests flip them and require bit-equal results)
struct TrainItem {
  std::size_t instance = 0;  // matrix index; keys the dropout stream
  std::vector<int> tokens;
  const double* embedding = nullptr;  // passthrough mode
  std::vector<std::int8_t> labels;
  std::vector<std::uint8_t> observed;
  double target = 0.0;  // regressor: gold disagreement of the annotations
};

std::vector<TrainItem> make_train_items(const AnnotationMatrix& m,
                                        const std::vector<std::size_t>& idx,
                                        const Vocabulary& vocab,
                                        TargetKind kind);

inline constexpr std::size_t kGradChunk = 8;  // reduction granularity (fixed)

// mean over the batch of per-instance losses (each the sum over observed
// targets); accumulates gradients into grad. Bit-identical for any Exec and
// thread count.
double batch_loss_grad(TargetKind kind, const EncoderConfig& enc,
                       const ParamLayout& layout,
                       const std::vector<double>& params,
                       const std::vector<const TrainItem*>& batch,
                       std::uint64_t epoch_key, std::vector<double>& grad,
                       Exec ex);

}  // namespace manno
