#pragma once

#include <cstdint>
#include <vector>

#include "manno/models.hpp"

namespace manno {

// Per-instance uncertainty, all estimators normalized so that bigger means
// less certain. The annotation-variance and MC-dropout values share the
// [0, 0.25] scale of the corpus disagreement measure; the softmax margin
// lives in [0, 0.5].

struct UncertaintyScore {
  double value = 0.0;
  double prob_variance = 0.0;  // MC dropout: spread of the T probabilities
  int samples = 0;             // MC dropout: T; other estimators leave 0
};

// variance of the predicted annotation set across present slots, the same
// statistic the corpus applies to human labels; MissingDataError when every
// slot is flagged
double variance_uncertainty(const AnnotationPrediction& ap);
// convenience: predict, then score (UnsupportedOperationError for baselines)
double variance_uncertainty(const AnyModel& m, const Instance& x);

// 1 - max(p, 1-p) for an aggregate positive-class probability
double softmax_uncertainty(double positive_prob);

// T forward passes with dropout left on; value is the variance of the T
// binary predictions, prob_variance the population variance of the T
// probabilities. Deterministic in (seed, samples). samples >= 2.
UncertaintyScore mc_dropout_uncertainty(const BaselineModel& m,
                                        const Instance& x, int samples,
                                        std::uint64_t seed);
// per-instance streams are keyed by matrix index, so scores do not depend on
// which other instances share the batch
std::vector<UncertaintyScore> mc_dropout_batch(
    const BaselineModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, int samples, std::uint64_t seed,
    Exec ex = default_exec());

}  // namespace manno
