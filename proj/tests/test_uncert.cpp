#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "manno/common.hpp"
#include "manno/uncert.hpp"

using namespace manno;

namespace {

AnnotationPrediction prediction_with(std::size_t ones, std::size_t zeros,
                                     std::size_t flagged) {
  AnnotationPrediction ap;
  for (std::size_t i = 0; i < ones; ++i) {
    ap.label.push_back(1);
    ap.present.push_back(1);
    ap.prob.push_back(0.9);
  }
  for (std::size_t i = 0; i < zeros; ++i) {
    ap.label.push_back(0);
    ap.present.push_back(1);
    ap.prob.push_back(0.1);
  }
  for (std::size_t i = 0; i < flagged; ++i) {
    ap.label.push_back(1);  // must be ignored
    ap.present.push_back(0);
    ap.prob.push_back(0.0);
  }
  return ap;
}

// passthrough baseline whose prediction flips with the dropout mask: a kept
// input drives the logits negative, a dropped one leaves a 0.5/0.5 tie
BaselineModel masked_coin(double rate) {
  BaselineModel bl;
  bl.core.enc.passthrough = true;
  bl.core.enc.input_dim = 1;
  bl.core.enc.dropout = rate;
  bl.core.layout = make_layout(TargetKind::MajoritySoftmax, bl.core.enc, 1);
  bl.core.params.assign(bl.core.layout.total, 0.0);
  bl.core.params[bl.core.layout.find("head_w").offset + 1] = -1.0;
  return bl;
}

std::vector<std::size_t> range_idx(std::size_t from, std::size_t to) {
  std::vector<std::size_t> idx;
  for (std::size_t i = from; i < to; ++i) idx.push_back(i);
  return idx;
}

// sweet instances are unanimous (disagreement 0), sour ones split 2-1 (2/9)
AnnotationMatrix disagreement_corpus(bool all_split) {
  const std::vector<std::string> pos{"sweet great fun", "really sweet show",
                                     "sweet and lovely", "so sweet so fun"};
  const std::vector<std::string> neg{"sour bad slog", "really sour mess",
                                     "sour and dull", "so sour so bad"};
  std::vector<Instance> instances;
  std::vector<std::vector<Entry>> rows;
  for (int i = 0; i < 24; ++i) {
    const bool split = all_split || i % 2 == 0;
    const auto& bank = split ? neg : pos;
    instances.push_back({"d" + std::to_string(i),
                         bank[static_cast<std::size_t>(i / 2) % bank.size()],
                         std::nullopt});
    if (split)
      rows.push_back({{0, 1}, {1, 0}, {2, 0}});
    else
      rows.push_back({{0, 1}, {1, 1}, {2, 1}});
  }
  return make_matrix(std::move(instances), {"a", "b", "c"}, std::move(rows));
}

TrainConfig reg_cfg() {
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 6;
  cfg.lr = 0.05;
  cfg.dropout = 0.0;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 12;
  cfg.repr_dim = 6;
  cfg.seed = 21;
  return cfg;
}

}  // namespace

TEST_CASE("prediction variance is the human disagreement statistic") {
  CHECK(variance_uncertainty(prediction_with(7, 11, 0)) ==
        doctest::Approx(7.0 * 11.0 / 324.0).epsilon(1e-15));
  CHECK(variance_uncertainty(prediction_with(4, 4, 0)) == 0.25);
  CHECK(variance_uncertainty(prediction_with(5, 0, 0)) == 0.0);
  // flagged slots are invisible, whatever their labels say
  CHECK(variance_uncertainty(prediction_with(3, 3, 12)) == 0.25);
  CHECK(variance_uncertainty(prediction_with(2, 0, 16)) == 0.0);
  CHECK_THROWS_AS(variance_uncertainty(prediction_with(0, 0, 5)),
                  MissingDataError);
}

TEST_CASE("softmax uncertainty is the distance from a confident call") {
  CHECK(softmax_uncertainty(0.5) == 0.5);
  CHECK(softmax_uncertainty(1.0) == 0.0);
  CHECK(softmax_uncertainty(0.0) == 0.0);
  CHECK(softmax_uncertainty(0.8) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(softmax_uncertainty(0.2) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(softmax_uncertainty(1.2), ArgumentError);
  CHECK_THROWS_AS(softmax_uncertainty(-0.1), ArgumentError);
}

TEST_CASE("mc dropout with rate 0 sees no spread at all") {
  auto bl = masked_coin(0.0);
  Instance x{"x", "", std::vector<double>{1.0}};
  const auto s = mc_dropout_uncertainty(bl, x, 50, 4);
  CHECK(s.value == 0.0);
  CHECK(s.prob_variance == 0.0);
  CHECK(s.samples == 50);
}

TEST_CASE("mc dropout recovers the dropout coin's variance") {
  // the positive call happens exactly when the single input is dropped, so
  // the T labels are Bernoulli(rate) draws and their variance ~ rate*(1-rate)
  auto bl = masked_coin(0.3);
  Instance x{"x", "", std::vector<double>{1.0}};
  const auto s = mc_dropout_uncertainty(bl, x, 1000, 77);
  CHECK(std::abs(s.value - 0.3 * 0.7) < 0.025);  // 3+ sigma at T=1000

  // probabilities take two values, 0.5 (dropped) and sigmoid(-1/0.7) (kept)
  const double pk = 1.0 / (1.0 + std::exp(1.0 / 0.7));
  const double expected_pv = 0.3 * 0.7 * (0.5 - pk) * (0.5 - pk);
  CHECK(std::abs(s.prob_variance - expected_pv) < 0.006);
}

TEST_CASE("mc dropout replays exactly and keys streams per instance") {
  auto bl = masked_coin(0.4);
  Instance x{"x", "", std::vector<double>{1.0}};
  const auto a = mc_dropout_uncertainty(bl, x, 64, 123);
  const auto b = mc_dropout_uncertainty(bl, x, 64, 123);
  CHECK(a.value == b.value);
  CHECK(a.prob_variance == b.prob_variance);

  CHECK_THROWS_AS(mc_dropout_uncertainty(bl, x, 1, 123), ArgumentError);

  // batch scores depend on the instance's own index, not on batch makeup
  std::vector<Instance> instances;
  std::vector<std::vector<Entry>> rows;
  for (int i = 0; i < 4; ++i) {
    instances.push_back(
        {"m" + std::to_string(i), "", std::vector<double>{1.0 + i}});
    rows.push_back({{0, 1}});
  }
  auto m = make_matrix(std::move(instances), {"a"}, std::move(rows));
  const auto full = mc_dropout_batch(bl, m, {0, 1, 2, 3}, 32, 9, Exec::Serial);
  const auto part = mc_dropout_batch(bl, m, {2}, 32, 9, Exec::Serial);
  CHECK(full[2].value == part[0].value);
  CHECK(full[2].prob_variance == part[0].prob_variance);

  set_exec_threads(3);
  const auto par = mc_dropout_batch(bl, m, {0, 1, 2, 3}, 32, 9, Exec::OpenMP);
  set_exec_threads(0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(par[i].value == full[i].value);
}

TEST_CASE("variance estimator runs on any per-annotator model") {
  auto m = disagreement_corpus(false);
  const SplitView sv{range_idx(0, 24), {}};
  TrainConfig cfg = reg_cfg();
  cfg.epochs = 40;
  cfg.lr = 0.02;

  AnyModel mt = train_multitask(m, sv, cfg);
  for (std::size_t i : sv.train) {
    const double v = variance_uncertainty(mt, m.instances[i]);
    CHECK(v >= 0.0);
    CHECK(v <= 0.25);
  }

  AnyModel bl = train_baseline(m, sv, cfg);
  CHECK_THROWS_AS(variance_uncertainty(bl, m.instances[0]),
                  UnsupportedOperationError);
}

TEST_CASE("regressor fits a constant disagreement target") {
  auto m = disagreement_corpus(true);  // every instance splits 2-1
  const SplitView sv{range_idx(0, 24), {}};
  auto reg = train_disagreement(m, sv, reg_cfg());

  const double target = 2.0 / 9.0;
  double mse = 0.0;
  for (std::size_t i : sv.train) {
    const double pred = predict_disagreement(reg, m.instances[i]);
    CHECK(pred > 0.0);
    CHECK(pred < 0.25);
    mse += (pred - target) * (pred - target);
  }
  mse /= 24.0;
  CHECK(mse < 1e-3);
}

TEST_CASE("regressor separates contested from unanimous instances") {
  auto m = disagreement_corpus(false);
  const SplitView sv{range_idx(0, 24), {}};
  auto reg = train_disagreement(m, sv, reg_cfg());

  double split_mean = 0.0, unanimous_mean = 0.0;
  for (std::size_t i : sv.train) {
    const double pred = predict_disagreement(reg, m.instances[i]);
    (i % 2 == 0 ? split_mean : unanimous_mean) += pred / 12.0;
  }
  CHECK(split_mean > unanimous_mean + 0.08);

  const auto batch = predict_disagreement_batch(reg, m, sv.train, Exec::Serial);
  set_exec_threads(3);
  const auto par = predict_disagreement_batch(reg, m, sv.train, Exec::OpenMP);
  set_exec_threads(0);
  CHECK(batch == par);
  CHECK(batch[0] == predict_disagreement(reg, m.instances[0]));
}

TEST_CASE("regressor early stopping tracks negated validation MSE") {
  auto m = disagreement_corpus(false);
  const SplitView sv{range_idx(0, 18), range_idx(18, 24)};
  TrainConfig cfg = reg_cfg();
  cfg.epochs = 100;
  cfg.early_stopping = true;
  cfg.patience = 3;

  auto reg = train_disagreement(m, sv, cfg);
  REQUIRE(!reg.trace.empty());
  CHECK(reg.trace.size() < 100);

  double best = -1e9;
  for (const auto& tp : reg.trace) {
    CHECK(tp.val_f1 <= 0.0);  // negated MSE
    if (tp.is_best) best = tp.val_f1;
  }
  double mse = 0.0;
  for (std::size_t i : sv.val) {
    const double pred = predict_disagreement(reg, m.instances[i]);
    const double gold = disagreement(m, i);
    mse += (pred - gold) * (pred - gold);
  }
  mse /= static_cast<double>(sv.val.size());
  CHECK(-mse == doctest::Approx(best).epsilon(1e-12));

  auto reg2 = train_disagreement(m, sv, cfg);
  CHECK(reg2.core.params == reg.core.params);
}
