#include "manno/nn.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "manno/common.hpp"

namespace manno {

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary build_vocabulary(const AnnotationMatrix& m,
                            const std::vector<std::size_t>& train_indices,
                            std::size_t min_count) {
  // std::map: alphabetical order makes the vocabulary independent of
  // instance order
  std::map<std::string, std::size_t> counts;
  for (std::size_t i : train_indices)
    for (auto& tok : split_tokens(m.instances.at(i).text)) counts[tok]++;

  Vocabulary v;
  v.tokens = {"<pad>", "<oov>"};
  for (const auto& [tok, n] : counts) {
    if (n < min_count) continue;
    v.index.emplace(tok, v.size());
    v.tokens.push_back(tok);
  }
  return v;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> out;
  for (const auto& tok : split_tokens(text)) out.push_back(vocab.lookup(tok));
  if (out.empty()) out.push_back(Vocabulary::kOov);
  return out;
}

std::size_t ParamLayout::add(std::string name, std::size_t rows,
                             std::size_t cols) {
  const std::size_t offset = total;
  blocks.push_back({std::move(name), offset, rows, cols});
  total += rows * cols;
  return offset;
}

const BlockSpec& ParamLayout::find(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw ArgumentError("no parameter block named '" + std::string(name) + "'");
}

bool ParamLayout::has(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return true;
  return false;
}

std::vector<double> init_params(const ParamLayout& layout,
                                std::uint64_t seed) {
  std::vector<double> p(layout.total, 0.0);
  for (const auto& b : layout.blocks) {
    if (b.name.size() >= 2 && b.name.compare(b.name.size() - 2, 2, "_b") == 0)
      continue;  // biases stay zero
    std::mt19937_64 rng(derive_seed(seed, b.name));
    const double scale =
        b.name == "embed" ? 0.2 : 1.0 / std::sqrt(static_cast<double>(b.cols));
    for (std::size_t i = 0; i < b.size(); ++i)
      p[b.offset + i] = rand_normal(rng) * scale;
  }
  return p;
}

void fill_dropout_mask(double rate, Phase phase, std::mt19937_64& rng,
                       double* mask, std::size_t n) {
  if (!dropout_active(phase) || rate <= 0.0) {
    std::fill(mask, mask + n, 1.0);
    return;
  }
  if (rate >= 1.0) throw ArgumentError("dropout rate must be < 1");
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = rand_unit(rng) < rate ? 0.0 : keep;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void softmax_pair(double z0, double z1, double out[2]) {
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  out[0] = e0 / (e0 + e1);
  out[1] = e1 / (e0 + e1);
}

double softmax_pair_xent(double z0, double z1, int y, double dlogits[2]) {
  double p[2];
  softmax_pair(z0, z1, p);
  dlogits[0] = p[0] - (y == 0 ? 1.0 : 0.0);
  dlogits[1] = p[1] - (y == 1 ? 1.0 : 0.0);
  // -log p_y = logsumexp(z) - z_y
  const double m = std::max(z0, z1);
  const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
  return lse - (y == 1 ? z1 : z0);
}

double bce_logit(double z, int y, double* dz) {
  const double p = sigmoid(z);
  *dz = p - static_cast<double>(y);
  // max(z,0) - z*y + log(1+exp(-|z|)) is the overflow-free form
  return std::max(z, 0.0) - z * static_cast<double>(y) +
         std::log1p(std::exp(-std::abs(z)));
}

void softmax_head(const double* W, const double* b, const double* h, int d,
                  double out[2]) {
  double z[2] = {b[0], b[1]};
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < d; ++k) z[c] += W[c * d + k] * h[k];
  softmax_pair(z[0], z[1], out);
}

double sigmoid_head(const double* w, double b, const double* h, int d) {
  double z = b;
  for (int k = 0; k < d; ++k) z += w[k] * h[k];
  return sigmoid(z);
}

void add_encoder_blocks(ParamLayout& layout, const EncoderConfig& cfg) {
  if (cfg.passthrough) return;  // the input embedding is the representation
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  const auto hh = static_cast<std::size_t>(cfg.hidden_dim);
  const auto d = static_cast<std::size_t>(cfg.repr_dim);
  layout.add("embed", V, e);
  layout.add("ff1_w", hh, e);
  layout.add("ff1_b", hh);
  layout.add("ff2_w", d, hh);
  layout.add("ff2_b", d);
}

namespace {

void check_finite(const double* x, std::size_t n, const char* what) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i]))
      throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

void encoder_forward(const EncoderConfig& cfg, const ParamLayout& layout,
                     const double* params, const std::vector<int>& tokens,
                     const double* embedding, Phase phase,
                     std::uint64_t noise_key, double* h_out,
                     EncoderTape* tape) {
  std::mt19937_64 noise(noise_key);

  if (cfg.passthrough) {
    const auto d = static_cast<std::size_t>(cfg.input_dim);
    if (embedding == nullptr)
      throw MissingDataError("passthrough encoder needs an instance embedding");
    std::vector<double> mask(d);
    fill_dropout_mask(cfg.dropout, phase, noise, mask.data(), d);
    for (std::size_t k = 0; k < d; ++k) h_out[k] = embedding[k] * mask[k];
    check_finite(h_out, d, "encoder output");
    if (tape) {
      tape->tokens.clear();
      tape->mask0.assign(mask.begin(), mask.end());
      tape->x0.assign(h_out, h_out + d);
      tape->h.assign(h_out, h_out + d);
    }
    return;
  }

  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  const auto hh = static_cast<std::size_t>(cfg.hidden_dim);
  const auto d = static_cast<std::size_t>(cfg.repr_dim);
  const double* embed = params + layout.find("embed").offset;
  const double* w1 = params + layout.find("ff1_w").offset;
  const double* b1 = params + layout.find("ff1_b").offset;
  const double* w2 = params + layout.find("ff2_w").offset;
  const double* b2 = params + layout.find("ff2_b").offset;

  if (tokens.empty()) throw ArgumentError("empty token sequence");
  std::vector<double> pooled(e, 0.0);
  for (int t : tokens) {
    if (t < 0 || t >= cfg.vocab_size)
      throw ArgumentError("token index out of range");
    const double* row = embed + static_cast<std::size_t>(t) * e;
    for (std::size_t k = 0; k < e; ++k) pooled[k] += row[k];
  }
  const double inv_n = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t k = 0; k < e; ++k) pooled[k] *= inv_n;

  std::vector<double> mask0(e), mask1(hh);
  fill_dropout_mask(cfg.dropout, phase, noise, mask0.data(), e);
  fill_dropout_mask(cfg.dropout, phase, noise, mask1.data(), hh);

  std::vector<double> x0(e), t1(hh), a1(hh);
  for (std::size_t k = 0; k < e; ++k) x0[k] = pooled[k] * mask0[k];
  for (std::size_t r = 0; r < hh; ++r) {
    double z = b1[r];
    const double* wrow = w1 + r * e;
    for (std::size_t k = 0; k < e; ++k) z += wrow[k] * x0[k];
    t1[r] = std::tanh(z);
    a1[r] = t1[r] * mask1[r];
  }
  for (std::size_t r = 0; r < d; ++r) {
    double z = b2[r];
    const double* wrow = w2 + r * hh;
    for (std::size_t k = 0; k < hh; ++k) z += wrow[k] * a1[k];
    h_out[r] = z;
  }
  check_finite(h_out, d, "encoder output");

  if (tape) {
    tape->tokens = tokens;
    tape->x0 = std::move(x0);
    tape->mask0 = std::move(mask0);
    tape->t1 = std::move(t1);
    tape->mask1 = std::move(mask1);
    tape->a1 = std::move(a1);
    tape->h.assign(h_out, h_out + d);
  }
}

void encoder_backward(const EncoderConfig& cfg, const ParamLayout& layout,
                      const double* params, const EncoderTape& tape,
                      const double* dh, double* grad) {
  if (cfg.passthrough) return;  // no encoder parameters

  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  const auto hh = static_cast<std::size_t>(cfg.hidden_dim);
  const auto d = static_cast<std::size_t>(cfg.repr_dim);
  const double* w1 = params + layout.find("ff1_w").offset;
  const double* w2 = params + layout.find("ff2_w").offset;
  double* g_embed = grad + layout.find("embed").offset;
  double* g_w1 = grad + layout.find("ff1_w").offset;
  double* g_b1 = grad + layout.find("ff1_b").offset;
  double* g_w2 = grad + layout.find("ff2_w").offset;
  double* g_b2 = grad + layout.find("ff2_b").offset;

  // h = W2 a1 + b2
  std::vector<double> da1(hh, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const double g = dh[r];
    const double* wrow = w2 + r * hh;
    double* grow = g_w2 + r * hh;
    for (std::size_t k = 0; k < hh; ++k) {
      grow[k] += g * tape.a1[k];
      da1[k] += g * wrow[k];
    }
    g_b2[r] += g;
  }

  // a1 = tanh(z1) * mask1
  std::vector<double> dx0(e, 0.0);
  for (std::size_t r = 0; r < hh; ++r) {
    const double dz = da1[r] * tape.mask1[r] * (1.0 - tape.t1[r] * tape.t1[r]);
    if (dz == 0.0) continue;
    const double* wrow = w1 + r * e;
    double* grow = g_w1 + r * e;
    for (std::size_t k = 0; k < e; ++k) {
      grow[k] += dz * tape.x0[k];
      dx0[k] += dz * wrow[k];
    }
    g_b1[r] += dz;
  }

  // x0 = mean(embed rows) * mask0
  const double inv_n = 1.0 / static_cast<double>(tape.tokens.size());
  std::vector<double> dpooled(e);
  for (std::size_t k = 0; k < e; ++k)
    dpooled[k] = dx0[k] * tape.mask0[k] * inv_n;
  for (int t : tape.tokens) {
    double* grow = g_embed + static_cast<std::size_t>(t) * e;
    for (std::size_t k = 0; k < e; ++k) grow[k] += dpooled[k];
  }
}

AdamState make_adam(std::size_t n_params, AdamConfig cfg) {
  AdamState s;
  s.cfg = cfg;
  s.m.assign(n_params, 0.0);
  s.v.assign(n_params, 0.0);
  return s;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad,
               AdamState& state, const ParamLayout& layout) {
  if (params.size() != layout.total || grad.size() != layout.total ||
      state.m.size() != layout.total)
    throw ArgumentError("adam_step: shape mismatch");

  state.t += 1;
  const auto& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));

  for (const auto& b : layout.blocks) {
    for (std::size_t i = b.offset; i < b.offset + b.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in block '" + b.name + "'");
      state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
      state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = state.m[i] / bc1;
      const double vhat = state.v[i] / bc2;
      params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
      if (!std::isfinite(params[i]))
        throw NumericError("non-finite parameter in block '" + b.name + "'");
    }
  }
}

}  // namespace manno
