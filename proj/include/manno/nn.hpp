#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "manno/corpus.hpp"

namespace manno {

// --- tokens -----------------------------------------------------------------

struct Vocabulary {
  static constexpr int kPad = 0;  // reserved, unused by mean pooling
  static constexpr int kOov = 1;
  std::vector<std::string> tokens;             // [0]="<pad>", [1]="<oov>"
  std::unordered_map<std::string, int> index;  // real tokens only, >= 2

  int size() const { return static_cast<int>(tokens.size()); }
  int lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? kOov : it->second;
  }
};

// lowercase; any non-alphanumeric byte separates tokens
std::vector<std::string> split_tokens(const std::string& text);

// built from the training split only; tokens below min_count are left OOV
Vocabulary build_vocabulary(const AnnotationMatrix& m,
                            const std::vector<std::size_t>& train_indices,
                            std::size_t min_count = 1);

// empty text maps to the single-token sequence [OOV]
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

// --- named parameter blocks ---------------------------------------------------

struct BlockSpec {
  std::string name;
  std::size_t offset = 0, rows = 0, cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct ParamLayout {
  std::vector<BlockSpec> blocks;
  std::size_t total = 0;

  std::size_t add(std::string name, std::size_t rows, std::size_t cols = 1);
  const BlockSpec& find(std::string_view name) const;  // ArgumentError
  bool has(std::string_view name) const;
};

// Per-block streams keyed by (seed, block name), so a block's initial values
// do not depend on what other blocks exist. Names ending in "_b" start at
// zero, "embed" is N(0, 0.2), weight matrices are N(0, 1/sqrt(cols)).
std::vector<double> init_params(const ParamLayout& layout, std::uint64_t seed);

// --- primitives ---------------------------------------------------------------

enum class Phase { Train, Infer, McDropout };

inline bool dropout_active(Phase p) { return p != Phase::Infer; }

// inverted dropout: entries are 0 with probability rate, else 1/(1-rate), so
// the expected mask is 1 and inference needs no rescaling
void fill_dropout_mask(double rate, Phase phase, std::mt19937_64& rng,
                       double* mask, std::size_t n);

double sigmoid(double z);  // branch-stable, no overflow on large |z|
void softmax_pair(double z0, double z1, double out[2]);
// cross-entropy of label y under softmax(z0, z1), log-sum-exp stabilized;
// fills dlogits with softmax(z) - onehot(y)
double softmax_pair_xent(double z0, double z1, int y, double dlogits[2]);
// binary cross-entropy with logits; sets *dz = sigmoid(z) - y
double bce_logit(double z, int y, double* dz);

// probability heads over a representation h (W row-major)
void softmax_head(const double* W, const double* b, const double* h, int d,
                  double out[2]);
double sigmoid_head(const double* w, double b, const double* h, int d);

// --- encoder ------------------------------------------------------------------

// mean-pooled token embeddings -> dropout -> affine -> tanh -> dropout ->
// affine -> h. In passthrough mode the precomputed instance embedding is used
// directly as h (dropout still applies in Train/McDropout phases).
struct EncoderConfig {
  int vocab_size = 0;
  int embed_dim = 32;
  int hidden_dim = 64;
  int repr_dim = 64;
  double dropout = 0.1;
  bool passthrough = false;
  int input_dim = 0;  // embedding length in passthrough mode

  int d() const { return passthrough ? input_dim : repr_dim; }
};

void add_encoder_blocks(ParamLayout& layout, const EncoderConfig& cfg);

// saved activations for one forward pass (single-threaded per evaluation)
struct EncoderTape {
  std::vector<int> tokens;
  std::vector<double> x0;     // pooled (or input) after dropout
  std::vector<double> mask0;
  std::vector<double> t1;     // tanh(z1)
  std::vector<double> mask1;
  std::vector<double> a1;     // t1 after dropout
  std::vector<double> h;
};

// Exactly one of tokens/embedding is used (embedding in passthrough mode).
// noise_key seeds the dropout masks; callers derive it from (run seed, epoch,
// instance), which makes masks independent of batch order and thread count.
// Throws NumericError if the produced representation is not finite.
void encoder_forward(const EncoderConfig& cfg, const ParamLayout& layout,
                     const double* params, const std::vector<int>& tokens,
                     const double* embedding, Phase phase,
                     std::uint64_t noise_key, double* h_out,
                     EncoderTape* tape);

// accumulates dL/dparams into grad (same layout as params) given dL/dh
void encoder_backward(const EncoderConfig& cfg, const ParamLayout& layout,
                      const double* params, const EncoderTape& tape,
                      const double* dh, double* grad);

// --- Adam ---------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> m, v;  // first/second moments, same shape as params
  long long t = 0;
};

AdamState make_adam(std::size_t n_params, AdamConfig cfg);

// standard bias-corrected update, in place; throws NumericError naming the
// parameter block that carries a non-finite gradient or result
void adam_step(std::vector<double>& params, const std::vector<double>& grad,
               AdamState& state, const ParamLayout& layout);

}  // namespace manno
