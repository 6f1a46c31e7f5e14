#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "manno/common.hpp"
#include "manno/nn.hpp"

using namespace manno;

namespace {

AnnotationMatrix text_matrix(const std::vector<std::string>& texts) {
  std::vector<Instance> instances;
  std::vector<std::vector<Entry>> rows;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    instances.push_back({"i" + std::to_string(i), texts[i], std::nullopt});
    rows.push_back({{0, static_cast<int>(i % 2)}});
  }
  return make_matrix(std::move(instances), {"a"}, std::move(rows));
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

TEST_CASE("split_tokens lowercases and splits on anything non-alphanumeric") {
  CHECK(split_tokens("Hey, you!h3y") ==
        std::vector<std::string>{"hey", "you", "h3y"});
  CHECK(split_tokens("  a\tb\nc  ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_tokens("don't") == std::vector<std::string>{"don", "t"});
  CHECK(split_tokens("") == std::vector<std::string>{});
  CHECK(split_tokens("!!!") == std::vector<std::string>{});
}

TEST_CASE("vocabulary is built from the training split only") {
  auto m = text_matrix({"red green", "green blue", "PURPLE red"});
  auto v = build_vocabulary(m, {0, 1});

  CHECK(v.size() == 5);  // pad, oov, blue, green, red
  CHECK(v.tokens[0] == "<pad>");
  CHECK(v.tokens[1] == "<oov>");
  CHECK(v.tokens[2] == "blue");  // alphabetical, independent of instance order
  CHECK(v.tokens[3] == "green");
  CHECK(v.tokens[4] == "red");
  CHECK(v.lookup("purple") == Vocabulary::kOov);
  CHECK(v.lookup("red") == 4);

  CHECK(tokenize("Red PURPLE green", v) == std::vector<int>{4, 1, 3});
  CHECK(tokenize("", v) == std::vector<int>{Vocabulary::kOov});
  CHECK(tokenize("?!", v) == std::vector<int>{Vocabulary::kOov});
}

TEST_CASE("vocabulary min_count drops rare tokens to OOV") {
  auto m = text_matrix({"rare common", "common common", "common"});
  auto v = build_vocabulary(m, all_indices(3), 2);
  CHECK(v.size() == 3);
  CHECK(v.lookup("common") == 2);
  CHECK(v.lookup("rare") == Vocabulary::kOov);
}

TEST_CASE("param layout tracks offsets and rejects unknown blocks") {
  ParamLayout layout;
  CHECK(layout.add("w1", 3, 4) == 0);
  CHECK(layout.add("b1", 3) == 12);
  CHECK(layout.total == 15);
  CHECK(layout.find("b1").offset == 12);
  CHECK(layout.find("w1").cols == 4);
  CHECK(layout.has("w1"));
  CHECK(!layout.has("nope"));
  CHECK_THROWS_AS(layout.find("nope"), ArgumentError);
}

TEST_CASE("init draws each block from its own named stream") {
  ParamLayout a;
  a.add("ff1_w", 4, 3);
  a.add("ff2_w", 2, 4);
  a.add("ff1_b", 4);
  ParamLayout b;
  b.add("ff2_w", 2, 4);

  const auto pa = init_params(a, 99);
  const auto pb = init_params(b, 99);
  // same block name + seed -> same values, wherever the block sits
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(pa[a.find("ff2_w").offset + i] == pb[i]);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(pa[a.find("ff1_b").offset + i] == 0.0);
  CHECK(init_params(a, 99) == pa);   // deterministic
  CHECK(init_params(a, 100) != pa);  // seed-sensitive
}

TEST_CASE("init scales: embeddings sd 0.2, weights sd 1/sqrt(fan-in)") {
  ParamLayout layout;
  layout.add("embed", 100, 8);
  layout.add("ff1_w", 50, 16);
  const auto p = init_params(layout, 7);

  auto sample_sd = [&](const BlockSpec& b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
      ss += p[b.offset + i] * p[b.offset + i];
    return std::sqrt(ss / static_cast<double>(b.size()));
  };
  CHECK(sample_sd(layout.find("embed")) == doctest::Approx(0.2).epsilon(0.15));
  CHECK(sample_sd(layout.find("ff1_w")) ==
        doctest::Approx(0.25).epsilon(0.15));
}

TEST_CASE("dropout mask has mean one and the configured zero rate") {
  const std::size_t n = 20000;
  std::vector<double> mask(n);
  std::mt19937_64 rng(42);

  fill_dropout_mask(0.0, Phase::Train, rng, mask.data(), n);
  for (std::size_t i = 0; i < 100; ++i) CHECK(mask[i] == 1.0);

  fill_dropout_mask(0.3, Phase::Infer, rng, mask.data(), n);
  for (std::size_t i = 0; i < 100; ++i) CHECK(mask[i] == 1.0);

  fill_dropout_mask(0.3, Phase::Train, rng, mask.data(), n);
  double sum = 0.0;
  std::size_t zeros = 0;
  for (double x : mask) {
    sum += x;
    if (x == 0.0) ++zeros;
    else CHECK(x == doctest::Approx(1.0 / 0.7));
  }
  // 4 sigma bands around the inverted-dropout expectations
  CHECK(sum / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(static_cast<double>(zeros) / static_cast<double>(n) ==
        doctest::Approx(0.3).epsilon(0.045));

  CHECK_THROWS_AS(fill_dropout_mask(1.0, Phase::Train, rng, mask.data(), n),
                  ArgumentError);
}

TEST_CASE("sigmoid and softmax stay stable at extreme logits") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(sigmoid(-1000.0) == 0.0);
  for (double z : {-30.0, -2.5, 0.0, 0.1, 4.0, 25.0})
    CHECK(sigmoid(z) + sigmoid(-z) == doctest::Approx(1.0).epsilon(1e-14));

  double p[2];
  softmax_pair(1000.0, -1000.0, p);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
  softmax_pair(3.0, 1.0, p);
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
}

TEST_CASE("cross-entropy losses match a long-double reference") {
  for (double z0 : {-3.0, -0.2, 0.0, 1.7}) {
    for (double z1 : {-1.1, 0.0, 2.4}) {
      for (int y : {0, 1}) {
        double dl[2];
        const double loss = softmax_pair_xent(z0, z1, y, dl);
        const long double e0 = std::exp(static_cast<long double>(z0));
        const long double e1 = std::exp(static_cast<long double>(z1));
        const long double py = (y == 1 ? e1 : e0) / (e0 + e1);
        CHECK(loss == doctest::Approx(static_cast<double>(-std::log(py)))
                          .epsilon(1e-12));
        CHECK(dl[0] + dl[1] == doctest::Approx(0.0).epsilon(1e-12));
      }
    }
  }
  for (double z : {-4.0, -0.3, 0.0, 2.2}) {
    for (int y : {0, 1}) {
      double dz;
      const double loss = bce_logit(z, y, &dz);
      const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(z)));
      const long double ref = y == 1 ? -std::log(p) : -std::log(1.0L - p);
      CHECK(loss == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
      CHECK(dz == doctest::Approx(static_cast<double>(p) - y).epsilon(1e-12));
    }
  }
  // overflow-free at huge logits
  double dz;
  CHECK(bce_logit(1000.0, 0, &dz) == doctest::Approx(1000.0));
  CHECK(bce_logit(-1000.0, 1, &dz) == doctest::Approx(1000.0));
  double dl[2];
  CHECK(std::isfinite(softmax_pair_xent(800.0, -800.0, 1, dl)));
}

TEST_CASE("loss primitives agree with finite differences") {
  const double eps = 1e-6;
  for (double z0 : {-1.3, 0.4}) {
    for (int y : {0, 1}) {
      double dl[2], scratch[2];
      softmax_pair_xent(z0, 0.7, y, dl);
      const double fd0 = (softmax_pair_xent(z0 + eps, 0.7, y, scratch) -
                          softmax_pair_xent(z0 - eps, 0.7, y, scratch)) /
                         (2 * eps);
      const double fd1 = (softmax_pair_xent(z0, 0.7 + eps, y, scratch) -
                          softmax_pair_xent(z0, 0.7 - eps, y, scratch)) /
                         (2 * eps);
      CHECK(dl[0] == doctest::Approx(fd0).epsilon(1e-7));
      CHECK(dl[1] == doctest::Approx(fd1).epsilon(1e-7));

      double dz, unused;
      bce_logit(z0, y, &dz);
      const double fd = (bce_logit(z0 + eps, y, &unused) -
                         bce_logit(z0 - eps, y, &unused)) /
                        (2 * eps);
      CHECK(dz == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("mean pooling: repeating a token changes nothing") {
  EncoderConfig cfg;
  cfg.vocab_size = 5;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 6;
  cfg.repr_dim = 3;
  cfg.dropout = 0.0;
  ParamLayout layout;
  add_encoder_blocks(layout, cfg);
  const auto params = init_params(layout, 11);

  std::vector<double> h1(3), h2(3), h3(3);
  encoder_forward(cfg, layout, params.data(), {2}, nullptr, Phase::Infer, 0,
                  h1.data(), nullptr);
  encoder_forward(cfg, layout, params.data(), {2, 2}, nullptr, Phase::Infer, 0,
                  h2.data(), nullptr);
  encoder_forward(cfg, layout, params.data(), {2, 2, 2}, nullptr, Phase::Infer,
                  0, h3.data(), nullptr);
  CHECK(h1 == h2);
  CHECK(h1 == h3);

  CHECK_THROWS_AS(encoder_forward(cfg, layout, params.data(), {}, nullptr,
                                  Phase::Infer, 0, h1.data(), nullptr),
                  ArgumentError);
  CHECK_THROWS_AS(encoder_forward(cfg, layout, params.data(), {7}, nullptr,
                                  Phase::Infer, 0, h1.data(), nullptr),
                  ArgumentError);
}

TEST_CASE("dropout 0 makes training and inference forwards identical") {
  EncoderConfig cfg;
  cfg.vocab_size = 9;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 7;
  cfg.repr_dim = 4;
  cfg.dropout = 0.0;
  ParamLayout layout;
  add_encoder_blocks(layout, cfg);
  const auto params = init_params(layout, 3);

  std::vector<double> ht(4), hi(4);
  const std::vector<int> tokens{1, 4, 8, 2};
  encoder_forward(cfg, layout, params.data(), tokens, nullptr, Phase::Train,
                  123, ht.data(), nullptr);
  encoder_forward(cfg, layout, params.data(), tokens, nullptr, Phase::Infer, 0,
                  hi.data(), nullptr);
  CHECK(std::memcmp(ht.data(), hi.data(), 4 * sizeof(double)) == 0);
}

TEST_CASE("same noise key, same masks; different key, different masks") {
  EncoderConfig cfg;
  cfg.vocab_size = 9;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 16;
  cfg.repr_dim = 8;
  cfg.dropout = 0.5;
  ParamLayout layout;
  add_encoder_blocks(layout, cfg);
  const auto params = init_params(layout, 3);

  std::vector<double> a(8), b(8), c(8);
  const std::vector<int> tokens{1, 4, 8};
  encoder_forward(cfg, layout, params.data(), tokens, nullptr, Phase::Train,
                  777, a.data(), nullptr);
  encoder_forward(cfg, layout, params.data(), tokens, nullptr, Phase::Train,
                  777, b.data(), nullptr);
  encoder_forward(cfg, layout, params.data(), tokens, nullptr, Phase::Train,
                  778, c.data(), nullptr);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("passthrough mode uses the instance embedding as h") {
  EncoderConfig cfg;
  cfg.passthrough = true;
  cfg.input_dim = 3;
  cfg.dropout = 0.0;
  ParamLayout layout;
  add_encoder_blocks(layout, cfg);
  CHECK(layout.total == 0);  // nothing to learn in the encoder

  const std::vector<double> emb{0.25, -1.5, 3.0};
  std::vector<double> h(3);
  encoder_forward(cfg, layout, nullptr, {}, emb.data(), Phase::Infer, 0,
                  h.data(), nullptr);
  CHECK(h == emb);
  CHECK_THROWS_AS(encoder_forward(cfg, layout, nullptr, {}, nullptr,
                                  Phase::Infer, 0, h.data(), nullptr),
                  MissingDataError);
}

TEST_CASE("encoder gradients match central finite differences") {
  EncoderConfig cfg;
  cfg.vocab_size = 7;
  cfg.embed_dim = 3;
  cfg.hidden_dim = 4;
  cfg.repr_dim = 3;
  ParamLayout layout;
  add_encoder_blocks(layout, cfg);
  const std::vector<int> tokens{2, 5, 2, 6};

  // linear probe loss sum_k c_k h_k, so dL/dh = c
  const std::vector<double> c{0.7, -1.3, 0.4};
  const double eps = 1e-5;

  for (double rate : {0.0, 0.4}) {
    cfg.dropout = rate;
    const auto params = init_params(layout, 17);
    const std::uint64_t key = 909;  // fixed masks make dropout differentiable

    EncoderTape tape;
    std::vector<double> h(3);
    encoder_forward(cfg, layout, params.data(), tokens, nullptr, Phase::Train,
                    key, h.data(), &tape);
    std::vector<double> grad(layout.total, 0.0);
    encoder_backward(cfg, layout, params.data(), tape, c.data(), grad.data());

    auto loss_at = [&](std::vector<double> p) {
      std::vector<double> hh(3);
      encoder_forward(cfg, layout, p.data(), tokens, nullptr, Phase::Train,
                      key, hh.data(), nullptr);
      double l = 0.0;
      for (int k = 0; k < 3; ++k) l += c[k] * hh[k];
      return l;
    };

    double max_rel = 0.0;
    for (std::size_t p = 0; p < layout.total; ++p) {
      auto plus = params, minus = params;
      plus[p] += eps;
      minus[p] -= eps;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2 * eps);
      const double rel = std::abs(grad[p] - fd) /
                         std::max({std::abs(grad[p]), std::abs(fd), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel < 1e-6);
  }
}

TEST_CASE("adam: first step matches the hand-computed update") {
  ParamLayout layout;
  layout.add("w", 1, 1);
  std::vector<double> params{1.0};
  AdamConfig cfg;
  cfg.lr = 0.1;
  auto state = make_adam(1, cfg);

  adam_step(params, {0.5}, state, layout);
  // t=1: mhat=g, vhat=g^2, step = lr * g / (|g| + eps)
  CHECK(params[0] ==
        doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(state.t == 1);
}

TEST_CASE("adam: zero gradient from a fresh state moves nothing") {
  ParamLayout layout;
  layout.add("w", 2, 3);
  layout.add("b", 2);
  auto params = init_params(layout, 5);
  const auto before = params;
  auto state = make_adam(layout.total, {});
  const std::vector<double> zero(layout.total, 0.0);
  for (int i = 0; i < 3; ++i) adam_step(params, zero, state, layout);
  CHECK(params == before);  // exact: 0 / (sqrt(0) + eps) is 0
  CHECK(state.t == 3);
}

TEST_CASE("adam names the block carrying a bad gradient") {
  ParamLayout layout;
  layout.add("w", 2, 1);
  layout.add("odd_block", 1, 1);
  std::vector<double> params{1.0, 1.0, 1.0};
  auto state = make_adam(3, {});
  try {
    adam_step(params, {0.0, 0.0, std::nan("")}, state, layout);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("odd_block") != std::string::npos);
  }
}
