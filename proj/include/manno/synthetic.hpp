#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "manno/corpus.hpp"

namespace manno {

// Generative model per instance:
//   1. latent score s ~ U(0,1), encoded into the text: ordinary token "w<i>"
//      carries weight i/(V-1) and tokens are drawn near s, so the realized
//      score (the mean token weight) is exactly recoverable from the text;
//   2. with probability trigger_fraction the token "xtrig" is appended;
//   3. each of `annotations_per_instance` sampled annotators labels 1 iff
//      s + trigger_bias * is_trigger > threshold, then flips the label with
//      probability noise.
// Because the label probabilities p_j are known in closed form, the expected
// disagreement over the sampled annotator set is exact:
//   E[var] = (m*S1 - S1^2 - sum_j p_j(1-p_j)) / m^2,  S1 = sum_j p_j.
struct AnnotatorProfile {
  double threshold = 0.5;
  double trigger_bias = 0.0;
  double noise = 0.0;  // label flip probability, in [0, 1]
};

struct SyntheticConfig {
  std::size_t n_instances = 100;
  std::vector<AnnotatorProfile> annotators;
  int annotations_per_instance = 3;
  int vocab_ordinary = 32;      // ordinary score-carrying tokens w0..w{V-1}
  int tokens_per_instance = 8;
  double token_jitter = 0.1;    // sd of per-token deviation, in score units
  double trigger_fraction = 0.3;
  std::uint64_t seed = 1;
};

void validate(const SyntheticConfig& cfg);

struct SyntheticTruth {
  std::vector<std::string> instance_ids;
  std::vector<double> latent;  // realized score (mean token weight)
  std::vector<std::uint8_t> is_trigger;
  std::vector<double> expected_disagreement;
};

struct SyntheticResult {
  AnnotationMatrix matrix;
  SyntheticTruth truth;
  // annotators that were never sampled get dropped so the matrix invariants
  // hold; only possible for tiny corpora
  std::size_t dropped_annotators = 0;
};

SyntheticResult generate_synthetic(const SyntheticConfig& cfg);

// Sidecar: one JSON object per line with instance_id, latent_score,
// is_trigger, expected_disagreement.
void save_truth(const SyntheticTruth& t, const std::string& path);
SyntheticTruth load_truth(const std::string& path);

// The 18-annotator two-group preset used by the benchmark comparisons: group
// thresholds fan out over [0.45, 0.65] and the groups react to the trigger
// token in opposite directions, so trigger instances split the annotator pool
// while plain instances mostly agree.
SyntheticConfig benchmark_config(std::uint64_t seed,
                                 std::size_t n_instances = 2000);

}  // namespace manno
