#include "manno/uncert.hpp"

#include <algorithm>

#include "manno/common.hpp"

namespace manno {

double variance_uncertainty(const AnnotationPrediction& ap) {
  std::size_t ones = 0, present = 0;
  for (std::size_t j = 0; j < ap.label.size(); ++j) {
    if (!ap.present[j]) continue;
    ++present;
    ones += static_cast<std::size_t>(ap.label[j]);
  }
  if (present == 0)
    throw MissingDataError("no present predictions to take a variance over");
  return binary_label_variance(ones, present);
}

double variance_uncertainty(const AnyModel& m, const Instance& x) {
  return variance_uncertainty(predict_annotations(m, x));
}

double softmax_uncertainty(double positive_prob) {
  if (!(positive_prob >= 0.0 && positive_prob <= 1.0))
    throw ArgumentError("probability must be in [0, 1]");
  return 1.0 - std::max(positive_prob, 1.0 - positive_prob);
}

UncertaintyScore mc_dropout_uncertainty(const BaselineModel& m,
                                        const Instance& x, int samples,
                                        std::uint64_t seed) {
  if (samples < 2)
    throw ArgumentError("MC dropout needs at least 2 samples");

  const auto& enc = m.core.enc;
  const auto& layout = m.core.layout;
  const int d = enc.d();
  std::vector<int> tokens;
  const double* emb = nullptr;
  if (enc.passthrough) {
    if (!x.embedding)
      throw MissingDataError("instance '" + x.id + "' has no embedding");
    emb = x.embedding->data();
  } else {
    tokens = tokenize(x.text, m.core.vocab);
  }
  const double* W =
      m.core.params.data() + layout.find("head_w").offset;
  const double* b =
      m.core.params.data() + layout.find("head_b").offset;

  std::vector<double> h(static_cast<std::size_t>(d));
  std::size_t positive = 0;
  double p_sum = 0.0, p_sq = 0.0;
  double p_min = 1.0, p_max = 0.0;
  for (int t = 0; t < samples; ++t) {
    encoder_forward(enc, layout, m.core.params.data(), tokens, emb,
                    Phase::McDropout,
                    derive_seed(seed, "mc", static_cast<std::uint64_t>(t)),
                    h.data(), nullptr);
    double out[2];
    softmax_head(W, b, h.data(), d, out);
    if (out[1] >= 0.5) ++positive;
    p_sum += out[1];
    p_sq += out[1] * out[1];
    p_min = std::min(p_min, out[1]);
    p_max = std::max(p_max, out[1]);
  }

  UncertaintyScore s;
  s.samples = samples;
  s.value = binary_label_variance(positive, static_cast<std::size_t>(samples));
  if (p_min == p_max) {
    s.prob_variance = 0.0;  // identical samples, exactly (rate-0 dropout)
  } else {
    const double n = static_cast<double>(samples);
    const double mean = p_sum / n;
    s.prob_variance = std::max(0.0, p_sq / n - mean * mean);
  }
  return s;
}

std::vector<UncertaintyScore> mc_dropout_batch(
    const BaselineModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, int samples, std::uint64_t seed,
    Exec ex) {
  std::vector<UncertaintyScore> out(indices.size());
  parallel_for(
      indices.size(),
      [&](std::size_t t) {
        out[t] = mc_dropout_uncertainty(
            m, matrix.instances[indices[t]], samples,
            derive_seed(seed, "mc-inst", indices[t]));
      },
      ex);
  return out;
}

}  // namespace manno
