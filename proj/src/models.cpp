#include "manno/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "manno/common.hpp"

namespace manno {

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::Baseline: return "baseline";
    case Arch::Ensemble: return "ensemble";
    case Arch::MultiLabel: return "multilabel";
    case Arch::MultiTask: return "multitask";
  }
  throw ArgumentError("bad Arch value");
}

Arch arch_from_name(const std::string& name) {
  if (name == "baseline") return Arch::Baseline;
  if (name == "ensemble") return Arch::Ensemble;
  if (name == "multilabel") return Arch::MultiLabel;
  if (name == "multitask") return Arch::MultiTask;
  throw ArgumentError("unknown architecture '" + name + "'");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (cfg.patience < 0) throw ArgumentError("patience must be >= 0");
  if (!(cfg.lr > 0.0)) throw ArgumentError("lr must be > 0");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw ArgumentError("dropout must be in [0, 1)");
  if (cfg.embed_dim < 1 || cfg.hidden_dim < 1 || cfg.repr_dim < 1)
    throw ArgumentError("encoder dimensions must be >= 1");
}

SplitView split_view(const DatasetSplit& split, int fold, bool hold_out_val) {
  SplitView sv;
  sv.train = split.train_indices(fold, hold_out_val);
  if (hold_out_val) sv.val = split.val_indices(fold);
  return sv;
}

SplitView split_view(const FixedSplit& split) {
  return {split.train, split.val};
}

// --- layouts and batch preparation ------------------------------------------

namespace {

std::string head_w(std::size_t j) { return "head" + std::to_string(j) + "_w"; }
std::string head_b(std::size_t j) { return "head" + std::to_string(j) + "_b"; }

}  // namespace

ParamLayout make_layout(TargetKind kind, const EncoderConfig& enc,
                        std::size_t n_targets) {
  ParamLayout layout;
  add_encoder_blocks(layout, enc);
  const auto d = static_cast<std::size_t>(enc.d());
  switch (kind) {
    case TargetKind::MajoritySoftmax:
      layout.add("head_w", 2, d);
      layout.add("head_b", 2);
      break;
    case TargetKind::PerAnnotatorSoftmax:
      for (std::size_t j = 0; j < n_targets; ++j) {
        layout.add(head_w(j), 2, d);
        layout.add(head_b(j), 2);
      }
      break;
    case TargetKind::PerAnnotatorSigmoid:
      layout.add("ml_w", n_targets, d);
      layout.add("ml_b", n_targets);
      break;
    case TargetKind::DisagreementRegressor:
      layout.add("reg_w", 1, d);
      layout.add("reg_b", 1);
      break;
  }
  return layout;
}

std::vector<TrainItem> make_train_items(const AnnotationMatrix& m,
                                        const std::vector<std::size_t>& idx,
                                        const Vocabulary& vocab,
                                        TargetKind kind) {
  const std::size_t n_ann = m.n_annotators();
  std::vector<TrainItem> items;
  items.reserve(idx.size());
  for (std::size_t i : idx) {
    TrainItem it;
    it.instance = i;
    // carry both input forms; the encoder reads the one its mode needs
    it.tokens = tokenize(m.instances[i].text, vocab);
    if (m.instances[i].embedding)
      it.embedding = m.instances[i].embedding->data();
    switch (kind) {
      case TargetKind::MajoritySoftmax:
        it.labels = {static_cast<std::int8_t>(majority_label(m, i))};
        it.observed = {1};
        break;
      case TargetKind::PerAnnotatorSoftmax:
      case TargetKind::PerAnnotatorSigmoid:
        it.labels.assign(n_ann, 0);
        it.observed.assign(n_ann, 0);
        for (const auto& e : m.rows[i]) {
          it.labels[static_cast<std::size_t>(e.annotator)] =
              static_cast<std::int8_t>(e.label);
          it.observed[static_cast<std::size_t>(e.annotator)] = 1;
        }
        break;
      case TargetKind::DisagreementRegressor:
        it.target = disagreement(m, i);
        break;
    }
    items.push_back(std::move(it));
  }
  return items;
}

// --- the batch kernel ---------------------------------------------------------

namespace {

struct HeadOffsets {
  std::size_t w = 0, b = 0;
};

std::vector<HeadOffsets> head_offsets(TargetKind kind,
                                      const ParamLayout& layout,
                                      std::size_t n_targets) {
  std::vector<HeadOffsets> off;
  switch (kind) {
    case TargetKind::MajoritySoftmax:
      off.push_back({layout.find("head_w").offset, layout.find("head_b").offset});
      break;
    case TargetKind::PerAnnotatorSoftmax:
      for (std::size_t j = 0; j < n_targets; ++j)
        off.push_back({layout.find(head_w(j)).offset,
                       layout.find(head_b(j)).offset});
      break;
    case TargetKind::PerAnnotatorSigmoid: {
      const auto& w = layout.find("ml_w");
      const auto& b = layout.find("ml_b");
      for (std::size_t j = 0; j < n_targets; ++j)
        off.push_back({w.offset + j * w.cols, b.offset + j});
      break;
    }
    case TargetKind::DisagreementRegressor:
      off.push_back({layout.find("reg_w").offset, layout.find("reg_b").offset});
      break;
  }
  return off;
}

}  // namespace

double batch_loss_grad(TargetKind kind, const EncoderConfig& enc,
                       const ParamLayout& layout,
                       const std::vector<double>& params,
                       const std::vector<const TrainItem*>& batch,
                       std::uint64_t epoch_key, std::vector<double>& grad,
                       Exec ex) {
  if (batch.empty()) throw ArgumentError("empty batch");
  const std::size_t d = static_cast<std::size_t>(enc.d());
  const std::size_t n_targets =
      kind == TargetKind::MajoritySoftmax ||
              kind == TargetKind::DisagreementRegressor
          ? 1
          : batch.front()->labels.size();
  const auto heads = head_offsets(kind, layout, n_targets);
  const std::size_t P = layout.total;

  auto add_item = [&](std::size_t bi, double* acc) {
    const TrainItem& it = *batch[bi];
    const std::uint64_t key = derive_seed(epoch_key, "inst", it.instance);
    EncoderTape tape;
    std::vector<double> h(d), dh(d, 0.0);
    encoder_forward(enc, layout, params.data(), it.tokens, it.embedding,
                    Phase::Train, key, h.data(), &tape);
    double loss = 0.0;

    auto softmax_target = [&](const HeadOffsets& ho, int y) {
      const double* W = params.data() + ho.w;
      const double* b = params.data() + ho.b;
      double z0 = b[0], z1 = b[1];
      for (std::size_t k = 0; k < d; ++k) {
        z0 += W[k] * h[k];
        z1 += W[d + k] * h[k];
      }
      double dl[2];
      loss += softmax_pair_xent(z0, z1, y, dl);
      double* gW = acc + ho.w;
      double* gb = acc + ho.b;
      for (std::size_t k = 0; k < d; ++k) {
        gW[k] += dl[0] * h[k];
        gW[d + k] += dl[1] * h[k];
        dh[k] += dl[0] * W[k] + dl[1] * W[d + k];
      }
      gb[0] += dl[0];
      gb[1] += dl[1];
    };
    auto sigmoid_target = [&](const HeadOffsets& ho, double dz) {
      const double* w = params.data() + ho.w;
      double* gw = acc + ho.w;
      for (std::size_t k = 0; k < d; ++k) {
        gw[k] += dz * h[k];
        dh[k] += dz * w[k];
      }
      acc[ho.b] += dz;
    };

    switch (kind) {
      case TargetKind::MajoritySoftmax:
        if (it.observed[0]) softmax_target(heads[0], it.labels[0]);
        break;
      case TargetKind::PerAnnotatorSoftmax:
        for (std::size_t j = 0; j < n_targets; ++j)
          if (it.observed[j]) softmax_target(heads[j], it.labels[j]);
        break;
      case TargetKind::PerAnnotatorSigmoid:
        for (std::size_t j = 0; j < n_targets; ++j) {
          if (!it.observed[j]) continue;
          const double* w = params.data() + heads[j].w;
          double z = params[heads[j].b];
          for (std::size_t k = 0; k < d; ++k) z += w[k] * h[k];
          double dz;
          loss += bce_logit(z, it.labels[j], &dz);
          sigmoid_target(heads[j], dz);
        }
        break;
      case TargetKind::DisagreementRegressor: {
        const double* w = params.data() + heads[0].w;
        double z = params[heads[0].b];
        for (std::size_t k = 0; k < d; ++k) z += w[k] * h[k];
        const double p = sigmoid(z);
        const double pred = 0.25 * p;
        const double diff = pred - it.target;
        loss += diff * diff;
        sigmoid_target(heads[0], 2.0 * diff * 0.25 * p * (1.0 - p));
        break;
      }
    }

    encoder_backward(enc, layout, params.data(), tape, dh.data(), acc);
    acc[P] += loss;
  };

  std::vector<double> sum(P + 1, 0.0);
  chunked_accumulate(batch.size(), P + 1, kGradChunk, add_item, sum.data(),
                     ex);
  const double inv = 1.0 / static_cast<double>(batch.size());
  grad.assign(P, 0.0);
  for (std::size_t i = 0; i < P; ++i) grad[i] = sum[i] * inv;
  return sum[P] * inv;
}

// --- shared training loop -----------------------------------------------------

namespace {

double binary_f1(const std::vector<int>& preds, const std::vector<int>& golds) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && golds[i] == 1) ++tp;
    else if (preds[i] == 1) ++fp;
    else if (golds[i] == 1) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) /
                                static_cast<double>(denom);
}

// forward-only label per target slot for a working parameter vector
void predict_labels_raw(TargetKind kind, const EncoderConfig& enc,
                        const ParamLayout& layout,
                        const std::vector<double>& params,
                        const std::vector<HeadOffsets>& heads,
                        const TrainItem& it, std::vector<int>& labels) {
  const std::size_t d = static_cast<std::size_t>(enc.d());
  std::vector<double> h(d);
  encoder_forward(enc, layout, params.data(), it.tokens, it.embedding,
                  Phase::Infer, 0, h.data(), nullptr);
  labels.resize(heads.size());
  for (std::size_t j = 0; j < heads.size(); ++j) {
    const double* w = params.data() + heads[j].w;
    if (kind == TargetKind::PerAnnotatorSigmoid) {
      double z = params[heads[j].b];
      for (std::size_t k = 0; k < d; ++k) z += w[k] * h[k];
      labels[j] = z >= 0.0 ? 1 : 0;  // sigmoid(z) >= 0.5
    } else {
      const double* b = params.data() + heads[j].b;
      double z0 = b[0], z1 = b[1];
      for (std::size_t k = 0; k < d; ++k) {
        z0 += w[k] * h[k];
        z1 += w[d + k] * h[k];
      }
      labels[j] = z1 >= z0 ? 1 : 0;  // P(1) >= 0.5, ties to positive
    }
  }
}

struct CoreResult {
  std::vector<double> params;
  std::vector<TrainTracePoint> trace;
};

CoreResult train_core(
    TargetKind kind, const EncoderConfig& enc, const ParamLayout& layout,
    const std::vector<TrainItem>& items,
    const std::function<double(const std::vector<double>&)>& val_metric,
    const TrainConfig& cfg) {
  if (items.empty()) throw ArgumentError("empty training split");

  auto params = init_params(layout, derive_seed(cfg.seed, "init"));
  AdamConfig ac;
  ac.lr = cfg.lr;
  auto adam = make_adam(layout.total, ac);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  const std::uint64_t dropout_base = derive_seed(cfg.seed, "dropout");

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const TrainItem*> batch;
  std::vector<double> grad;

  CoreResult res;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  int best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    deterministic_shuffle(order, shuffle_rng);
    const std::uint64_t epoch_key =
        derive_seed(dropout_base, "epoch", static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t t = start; t < end; ++t)
        batch.push_back(&items[order[t]]);
      const double loss = batch_loss_grad(kind, enc, layout, params, batch,
                                          epoch_key, grad, cfg.exec);
      if (!std::isfinite(loss))
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch));
      loss_sum += loss * static_cast<double>(batch.size());
      adam_step(params, grad, adam, layout);
    }

    TrainTracePoint tp;
    tp.epoch = epoch;
    tp.train_loss = loss_sum / static_cast<double>(items.size());
    if (val_metric) {
      tp.val_f1 = val_metric(params);
      if (tp.val_f1 > best) {
        best = tp.val_f1;
        best_params = params;
        best_epoch = epoch;
        tp.is_best = true;
      }
      res.trace.push_back(tp);
      if (epoch - best_epoch > cfg.patience) break;
    } else {
      res.trace.push_back(tp);
    }
  }

  res.params = val_metric ? std::move(best_params) : std::move(params);
  return res;
}

EncoderConfig encoder_config_for(const AnnotationMatrix& m,
                                 const TrainConfig& cfg,
                                 const Vocabulary& vocab) {
  EncoderConfig enc;
  enc.dropout = cfg.dropout;
  const bool all_embedded = m.embedding_dim > 0 &&
                            std::all_of(m.instances.begin(), m.instances.end(),
                                        [](const Instance& x) {
                                          return x.embedding.has_value();
                                        });
  if (all_embedded) {
    enc.passthrough = true;
    enc.input_dim = m.embedding_dim;
  } else {
    enc.vocab_size = vocab.size();
    enc.embed_dim = cfg.embed_dim;
    enc.hidden_dim = cfg.hidden_dim;
    enc.repr_dim = cfg.repr_dim;
  }
  return enc;
}

void check_split(const SplitView& sv, const TrainConfig& cfg) {
  if (sv.train.empty()) throw ArgumentError("empty training split");
  if (cfg.early_stopping && sv.val.empty())
    throw ArgumentError("early stopping needs validation instances");
}

std::vector<int> majority_golds(const AnnotationMatrix& m,
                                const std::vector<std::size_t>& idx) {
  std::vector<int> gold;
  gold.reserve(idx.size());
  for (std::size_t i : idx) gold.push_back(majority_label(m, i));
  return gold;
}

// validation metric: F1 of aggregated majority predictions vs gold majority
std::function<double(const std::vector<double>&)> majority_f1_metric(
    TargetKind kind, const EncoderConfig& enc, const ParamLayout& layout,
    std::vector<TrainItem> val_items, std::vector<int> val_gold,
    std::vector<HeadOffsets> heads, const std::vector<std::uint8_t>* flagged,
    TiePolicy tie) {
  return [kind, &enc, &layout, val_items = std::move(val_items),
          val_gold = std::move(val_gold), heads = std::move(heads), flagged,
          tie](const std::vector<double>& params) {
    std::vector<int> preds(val_items.size());
    std::vector<int> labels;
    for (std::size_t i = 0; i < val_items.size(); ++i) {
      predict_labels_raw(kind, enc, layout, params, heads, val_items[i],
                         labels);
      if (labels.size() == 1) {
        preds[i] = labels[0];
      } else {
        std::size_t ones = 0, present = 0;
        for (std::size_t j = 0; j < labels.size(); ++j) {
          if (flagged && (*flagged)[j]) continue;
          ++present;
          ones += static_cast<std::size_t>(labels[j]);
        }
        preds[i] = majority_of(ones, present, tie);
      }
    }
    return binary_f1(preds, val_gold);
  };
}

}  // namespace

// --- per-architecture training -------------------------------------------------

BaselineModel train_baseline(const AnnotationMatrix& m, const SplitView& sv,
                             const TrainConfig& cfg) {
  validate(cfg);
  check_split(sv, cfg);

  BaselineModel model;
  model.core.vocab = build_vocabulary(m, sv.train, cfg.vocab_min_count);
  model.core.enc = encoder_config_for(m, cfg, model.core.vocab);
  model.core.layout =
      make_layout(TargetKind::MajoritySoftmax, model.core.enc, 1);
  model.tie_policy = m.tie_policy;
  model.cfg = cfg;

  const auto items = make_train_items(m, sv.train, model.core.vocab,
                                      TargetKind::MajoritySoftmax);
  std::function<double(const std::vector<double>&)> val;
  if (cfg.early_stopping) {
    val = majority_f1_metric(
        TargetKind::MajoritySoftmax, model.core.enc, model.core.layout,
        make_train_items(m, sv.val, model.core.vocab,
                         TargetKind::MajoritySoftmax),
        majority_golds(m, sv.val),
        head_offsets(TargetKind::MajoritySoftmax, model.core.layout, 1),
        nullptr, m.tie_policy);
  }
  auto cr = train_core(TargetKind::MajoritySoftmax, model.core.enc,
                       model.core.layout, items, val, cfg);
  model.core.params = std::move(cr.params);
  model.trace = std::move(cr.trace);
  return model;
}

MultiTaskModel train_multitask(const AnnotationMatrix& m, const SplitView& sv,
                               const TrainConfig& cfg) {
  validate(cfg);
  check_split(sv, cfg);
  const std::size_t n_ann = m.n_annotators();

  MultiTaskModel model;
  model.core.vocab = build_vocabulary(m, sv.train, cfg.vocab_min_count);
  model.core.enc = encoder_config_for(m, cfg, model.core.vocab);
  model.core.layout =
      make_layout(TargetKind::PerAnnotatorSoftmax, model.core.enc, n_ann);
  model.annotators = m.annotators;
  model.tie_policy = m.tie_policy;
  model.cfg = cfg;

  const auto items = make_train_items(m, sv.train, model.core.vocab,
                                      TargetKind::PerAnnotatorSoftmax);
  model.flagged.assign(n_ann, 1);
  for (const auto& it : items)
    for (std::size_t j = 0; j < n_ann; ++j)
      if (it.observed[j]) model.flagged[j] = 0;

  std::function<double(const std::vector<double>&)> val;
  if (cfg.early_stopping) {
    val = majority_f1_metric(
        TargetKind::PerAnnotatorSoftmax, model.core.enc, model.core.layout,
        make_train_items(m, sv.val, model.core.vocab,
                         TargetKind::PerAnnotatorSoftmax),
        majority_golds(m, sv.val),
        head_offsets(TargetKind::PerAnnotatorSoftmax, model.core.layout,
                     n_ann),
        &model.flagged, m.tie_policy);
  }
  auto cr = train_core(TargetKind::PerAnnotatorSoftmax, model.core.enc,
                       model.core.layout, items, val, cfg);
  model.core.params = std::move(cr.params);
  model.trace = std::move(cr.trace);
  return model;
}

MultiLabelModel train_multilabel(const AnnotationMatrix& m,
                                 const SplitView& sv, const TrainConfig& cfg) {
  validate(cfg);
  check_split(sv, cfg);
  const std::size_t n_ann = m.n_annotators();

  MultiLabelModel model;
  model.core.vocab = build_vocabulary(m, sv.train, cfg.vocab_min_count);
  model.core.enc = encoder_config_for(m, cfg, model.core.vocab);
  model.core.layout =
      make_layout(TargetKind::PerAnnotatorSigmoid, model.core.enc, n_ann);
  model.annotators = m.annotators;
  model.tie_policy = m.tie_policy;
  model.cfg = cfg;

  const auto items = make_train_items(m, sv.train, model.core.vocab,
                                      TargetKind::PerAnnotatorSigmoid);
  model.flagged.assign(n_ann, 1);
  for (const auto& it : items)
    for (std::size_t j = 0; j < n_ann; ++j)
      if (it.observed[j]) model.flagged[j] = 0;

  std::function<double(const std::vector<double>&)> val;
  if (cfg.early_stopping) {
    val = majority_f1_metric(
        TargetKind::PerAnnotatorSigmoid, model.core.enc, model.core.layout,
        make_train_items(m, sv.val, model.core.vocab,
                         TargetKind::PerAnnotatorSigmoid),
        majority_golds(m, sv.val),
        head_offsets(TargetKind::PerAnnotatorSigmoid, model.core.layout,
                     n_ann),
        &model.flagged, m.tie_policy);
  }
  auto cr = train_core(TargetKind::PerAnnotatorSigmoid, model.core.enc,
                       model.core.layout, items, val, cfg);
  model.core.params = std::move(cr.params);
  model.trace = std::move(cr.trace);
  return model;
}

EnsembleModel train_ensemble(const AnnotationMatrix& m, const SplitView& sv,
                             const TrainConfig& cfg) {
  validate(cfg);
  check_split(sv, cfg);
  const std::size_t n_ann = m.n_annotators();

  EnsembleModel model;
  model.vocab = build_vocabulary(m, sv.train, cfg.vocab_min_count);
  model.enc = encoder_config_for(m, cfg, model.vocab);
  model.member_layout = make_layout(TargetKind::MajoritySoftmax, model.enc, 1);
  model.annotators = m.annotators;
  model.flagged.assign(n_ann, 0);
  model.tie_policy = m.tie_policy;
  model.cfg = cfg;
  model.member_params.resize(n_ann);
  model.traces.resize(n_ann);

  // shared tokenization; members differ only in rows and labels
  const auto base_items = make_train_items(m, sv.train, model.vocab,
                                           TargetKind::MajoritySoftmax);
  std::vector<TrainItem> val_items;
  std::vector<int> val_gold;
  if (cfg.early_stopping) {
    val_items = make_train_items(m, sv.val, model.vocab,
                                 TargetKind::MajoritySoftmax);
    val_gold = majority_golds(m, sv.val);
  }

  // label lookup: annotator -> (instance -> label)
  std::vector<std::vector<std::pair<std::size_t, int>>> by_annotator(n_ann);
  for (std::size_t t = 0; t < sv.train.size(); ++t) {
    const std::size_t i = sv.train[t];
    for (const auto& e : m.rows[i])
      by_annotator[static_cast<std::size_t>(e.annotator)].push_back(
          {t, e.label});
  }

  std::size_t trained = 0;
  for (std::size_t j = 0; j < n_ann; ++j) {
    TrainConfig member_cfg = cfg;
    member_cfg.seed = cfg.seed + j;  // decorrelated but reproducible inits
    if (by_annotator[j].empty()) {
      model.flagged[j] = 1;
      model.member_params[j] = init_params(
          model.member_layout, derive_seed(member_cfg.seed, "init"));
      continue;
    }
    std::vector<TrainItem> items;
    items.reserve(by_annotator[j].size());
    for (const auto& [t, label] : by_annotator[j]) {
      TrainItem it = base_items[t];
      it.labels = {static_cast<std::int8_t>(label)};
      it.observed = {1};
      items.push_back(std::move(it));
    }
    std::function<double(const std::vector<double>&)> val;
    if (cfg.early_stopping) {
      val = majority_f1_metric(
          TargetKind::MajoritySoftmax, model.enc, model.member_layout,
          val_items, val_gold,
          head_offsets(TargetKind::MajoritySoftmax, model.member_layout, 1),
          nullptr, m.tie_policy);
    }
    auto cr = train_core(TargetKind::MajoritySoftmax, model.enc,
                         model.member_layout, items, val, member_cfg);
    model.member_params[j] = std::move(cr.params);
    model.traces[j] = std::move(cr.trace);
    ++trained;
  }
  if (trained == 0)
    throw TrainingError("every ensemble member has an empty training set");
  return model;
}

DisagreementModel train_disagreement(const AnnotationMatrix& m,
                                     const SplitView& sv,
                                     const TrainConfig& cfg) {
  validate(cfg);
  check_split(sv, cfg);

  DisagreementModel model;
  model.core.vocab = build_vocabulary(m, sv.train, cfg.vocab_min_count);
  model.core.enc = encoder_config_for(m, cfg, model.core.vocab);
  model.core.layout =
      make_layout(TargetKind::DisagreementRegressor, model.core.enc, 1);
  model.cfg = cfg;

  const auto items = make_train_items(m, sv.train, model.core.vocab,
                                      TargetKind::DisagreementRegressor);
  std::function<double(const std::vector<double>&)> val;
  if (cfg.early_stopping) {
    auto val_items = make_train_items(m, sv.val, model.core.vocab,
                                      TargetKind::DisagreementRegressor);
    const auto& enc = model.core.enc;
    const auto& layout = model.core.layout;
    const std::size_t w_off = layout.find("reg_w").offset;
    const std::size_t b_off = layout.find("reg_b").offset;
    // negated MSE, since the shared loop maximizes its metric
    val = [&enc, &layout, w_off, b_off,
           val_items = std::move(val_items)](const std::vector<double>& p) {
      const std::size_t d = static_cast<std::size_t>(enc.d());
      std::vector<double> h(d);
      double se = 0.0;
      for (const auto& it : val_items) {
        encoder_forward(enc, layout, p.data(), it.tokens, it.embedding,
                        Phase::Infer, 0, h.data(), nullptr);
        const double pred =
            0.25 * sigmoid_head(p.data() + w_off, p[b_off], h.data(),
                                static_cast<int>(d));
        se += (pred - it.target) * (pred - it.target);
      }
      return -se / static_cast<double>(val_items.size());
    };
  }
  auto cr = train_core(TargetKind::DisagreementRegressor, model.core.enc,
                       model.core.layout, items, val, cfg);
  model.core.params = std::move(cr.params);
  model.trace = std::move(cr.trace);
  return model;
}

// --- prediction -----------------------------------------------------------------

namespace {

std::vector<double> infer_h(const EncoderConfig& enc, const ParamLayout& layout,
                            const std::vector<double>& params,
                            const Vocabulary& vocab, const Instance& x) {
  std::vector<double> h(static_cast<std::size_t>(enc.d()));
  std::vector<int> tokens;
  const double* emb = nullptr;
  if (enc.passthrough) {
    if (!x.embedding)
      throw MissingDataError("instance '" + x.id + "' has no embedding");
    if (static_cast<int>(x.embedding->size()) != enc.input_dim)
      throw ArgumentError("instance '" + x.id + "' embedding length mismatch");
    emb = x.embedding->data();
  } else {
    tokens = tokenize(x.text, vocab);
  }
  encoder_forward(enc, layout, params.data(), tokens, emb, Phase::Infer, 0,
                  h.data(), nullptr);
  return h;
}

MajorityPrediction aggregate(const AnnotationPrediction& ap, TiePolicy tie) {
  std::size_t ones = 0, present = 0;
  for (std::size_t j = 0; j < ap.label.size(); ++j) {
    if (!ap.present[j]) continue;
    ++present;
    ones += static_cast<std::size_t>(ap.label[j]);
  }
  if (present == 0)
    throw MissingDataError("no present annotator predictions to aggregate");
  MajorityPrediction mp;
  mp.label = majority_of(ones, present, tie);
  mp.score = static_cast<double>(ones) / static_cast<double>(present);
  return mp;
}

}  // namespace

AnnotationPrediction predict_annotations(const MultiTaskModel& m,
                                         const Instance& x) {
  const auto h = infer_h(m.core.enc, m.core.layout, m.core.params,
                         m.core.vocab, x);
  const int d = m.core.enc.d();
  AnnotationPrediction ap;
  const std::size_t n = m.annotators.size();
  ap.prob.assign(n, 0.0);
  ap.present.assign(n, 0);
  ap.label.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (m.flagged[j]) continue;
    double out[2];
    softmax_head(m.core.params.data() + m.core.layout.find(head_w(j)).offset,
                 m.core.params.data() + m.core.layout.find(head_b(j)).offset,
                 h.data(), d, out);
    ap.prob[j] = out[1];
    ap.present[j] = 1;
    ap.label[j] = out[1] >= 0.5 ? 1 : 0;
  }
  return ap;
}

AnnotationPrediction predict_annotations(const MultiLabelModel& m,
                                         const Instance& x) {
  const auto h = infer_h(m.core.enc, m.core.layout, m.core.params,
                         m.core.vocab, x);
  const int d = m.core.enc.d();
  const auto& w = m.core.layout.find("ml_w");
  const auto& b = m.core.layout.find("ml_b");
  AnnotationPrediction ap;
  const std::size_t n = m.annotators.size();
  ap.prob.assign(n, 0.0);
  ap.present.assign(n, 0);
  ap.label.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (m.flagged[j]) continue;
    const double p = sigmoid_head(
        m.core.params.data() + w.offset + j * w.cols,
        m.core.params[b.offset + j], h.data(), d);
    ap.prob[j] = p;
    ap.present[j] = 1;
    ap.label[j] = p >= 0.5 ? 1 : 0;
  }
  return ap;
}

AnnotationPrediction predict_annotations(const EnsembleModel& m,
                                         const Instance& x) {
  const int d = m.enc.d();
  const auto& w = m.member_layout.find("head_w");
  const auto& b = m.member_layout.find("head_b");
  AnnotationPrediction ap;
  const std::size_t n = m.annotators.size();
  ap.prob.assign(n, 0.0);
  ap.present.assign(n, 0);
  ap.label.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (m.flagged[j]) continue;
    const auto h =
        infer_h(m.enc, m.member_layout, m.member_params[j], m.vocab, x);
    double out[2];
    softmax_head(m.member_params[j].data() + w.offset,
                 m.member_params[j].data() + b.offset, h.data(), d, out);
    ap.prob[j] = out[1];
    ap.present[j] = 1;
    ap.label[j] = out[1] >= 0.5 ? 1 : 0;
  }
  return ap;
}

MajorityPrediction predict_majority(const BaselineModel& m, const Instance& x) {
  const auto h = infer_h(m.core.enc, m.core.layout, m.core.params,
                         m.core.vocab, x);
  double out[2];
  softmax_head(m.core.params.data() + m.core.layout.find("head_w").offset,
               m.core.params.data() + m.core.layout.find("head_b").offset,
               h.data(), m.core.enc.d(), out);
  return {out[1] >= 0.5 ? 1 : 0, out[1]};
}

MajorityPrediction predict_majority(const EnsembleModel& m, const Instance& x) {
  return aggregate(predict_annotations(m, x), m.tie_policy);
}
MajorityPrediction predict_majority(const MultiLabelModel& m,
                                    const Instance& x) {
  return aggregate(predict_annotations(m, x), m.tie_policy);
}
MajorityPrediction predict_majority(const MultiTaskModel& m,
                                    const Instance& x) {
  return aggregate(predict_annotations(m, x), m.tie_policy);
}

double predict_disagreement(const DisagreementModel& m, const Instance& x) {
  const auto h = infer_h(m.core.enc, m.core.layout, m.core.params,
                         m.core.vocab, x);
  const auto& w = m.core.layout.find("reg_w");
  const auto& b = m.core.layout.find("reg_b");
  return 0.25 * sigmoid_head(m.core.params.data() + w.offset,
                             m.core.params[b.offset], h.data(),
                             m.core.enc.d());
}

std::vector<double> predict_disagreement_batch(
    const DisagreementModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, Exec ex) {
  std::vector<double> out(indices.size());
  parallel_for(
      indices.size(),
      [&](std::size_t t) {
        out[t] = predict_disagreement(m, matrix.instances[indices[t]]);
      },
      ex);
  return out;
}

Arch arch_of(const AnyModel& m) {
  return std::visit(
      [](const auto& model) -> Arch {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, BaselineModel>) return Arch::Baseline;
        else if constexpr (std::is_same_v<T, EnsembleModel>)
          return Arch::Ensemble;
        else if constexpr (std::is_same_v<T, MultiLabelModel>)
          return Arch::MultiLabel;
        else
          return Arch::MultiTask;
      },
      m);
}

AnyModel train_model(Arch arch, const AnnotationMatrix& m, const SplitView& sv,
                     const TrainConfig& cfg) {
  switch (arch) {
    case Arch::Baseline: return train_baseline(m, sv, cfg);
    case Arch::Ensemble: return train_ensemble(m, sv, cfg);
    case Arch::MultiLabel: return train_multilabel(m, sv, cfg);
    case Arch::MultiTask: return train_multitask(m, sv, cfg);
  }
  throw ArgumentError("bad Arch value");
}

AnnotationPrediction predict_annotations(const AnyModel& m, const Instance& x) {
  return std::visit(
      [&](const auto& model) -> AnnotationPrediction {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, BaselineModel>) {
          (void)model;
          throw UnsupportedOperationError(
              "the baseline has no per-annotator predictions");
        } else {
          return predict_annotations(model, x);
        }
      },
      m);
}

MajorityPrediction predict_majority(const AnyModel& m, const Instance& x) {
  return std::visit(
      [&](const auto& model) { return predict_majority(model, x); }, m);
}

const std::vector<std::uint8_t>& flagged_slots(const AnyModel& m) {
  static const std::vector<std::uint8_t> none;
  return std::visit(
      [](const auto& model) -> const std::vector<std::uint8_t>& {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, BaselineModel>) {
          (void)model;
          return none;
        } else {
          return model.flagged;
        }
      },
      m);
}

std::vector<MajorityPrediction> predict_majority_batch(
    const AnyModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, Exec ex) {
  std::vector<MajorityPrediction> out(indices.size());
  parallel_for(
      indices.size(),
      [&](std::size_t t) {
        out[t] = predict_majority(m, matrix.instances[indices[t]]);
      },
      ex);
  return out;
}

std::vector<AnnotationPrediction> predict_annotations_batch(
    const AnyModel& m, const AnnotationMatrix& matrix,
    const std::vector<std::size_t>& indices, Exec ex) {
  std::vector<AnnotationPrediction> out(indices.size());
  parallel_for(
      indices.size(),
      [&](std::size_t t) {
        out[t] = predict_annotations(m, matrix.instances[indices[t]]);
      },
      ex);
  return out;
}

}  // namespace manno
