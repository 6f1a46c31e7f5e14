#include "manno/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "manno/common.hpp"

namespace manno {

PRF prf(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  PRF s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.tn = tn;
  const std::size_t total = tp + fp + fn + tn;

  if (tp + fp == 0) {
    s.precision = 0.0;
    s.degenerate = true;
  } else {
    s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    s.recall = 0.0;
    s.degenerate = true;
  } else {
    s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (s.precision + s.recall == 0.0) {
    s.f1 = 0.0;
    s.degenerate = true;
  } else {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  if (total == 0) {
    s.accuracy = 0.0;
    s.degenerate = true;
  } else {
    s.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  }
  return s;
}

PRF majority_eval(const AnyModel& model, const AnnotationMatrix& m,
                  const std::vector<std::size_t>& idx, Exec ex) {
  const auto preds = predict_majority_batch(model, m, idx, ex);
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const int gold = majority_label(m, idx[t]);
    const int pred = preds[t].label;
    if (pred == 1 && gold == 1) ++tp;
    else if (pred == 1) ++fp;
    else if (gold == 1) ++fn;
    else ++tn;
  }
  return prf(tp, fp, fn, tn);
}

IndividualEval individual_label_eval(const AnyModel& model,
                                     const AnnotationMatrix& m,
                                     const std::vector<std::size_t>& idx,
                                     Exec ex) {
  const auto preds = predict_annotations_batch(model, m, idx, ex);
  const auto& flagged = flagged_slots(model);

  IndividualEval ev;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    for (const auto& e : m.rows[idx[t]]) {
      const auto j = static_cast<std::size_t>(e.annotator);
      if (!flagged.empty() && flagged[j]) {
        ++ev.skipped_flagged_cells;
        continue;
      }
      ++ev.evaluated_cells;
      const int pred = preds[t].label[j];
      if (pred == 1 && e.label == 1) ++tp;
      else if (pred == 1) ++fp;
      else if (e.label == 1) ++fn;
      else ++tn;
    }
  }
  ev.scores = prf(tp, fp, fn, tn);
  return ev;
}

IndividualEval majority_vs_individual_eval(const AnyModel& model,
                                           const AnnotationMatrix& m,
                                           const std::vector<std::size_t>& idx,
                                           Exec ex) {
  const auto preds = predict_majority_batch(model, m, idx, ex);
  IndividualEval ev;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const int pred = preds[t].label;
    for (const auto& e : m.rows[idx[t]]) {
      ++ev.evaluated_cells;
      if (pred == 1 && e.label == 1) ++tp;
      else if (pred == 1) ++fp;
      else if (e.label == 1) ++fn;
      else ++tn;
    }
  }
  ev.scores = prf(tp, fp, fn, tn);
  return ev;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ArgumentError("correlation inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw ArgumentError("correlation needs at least 3 points");

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw UndefinedCorrelationError(
        "correlation is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<ScoreColumn> uncertainty_columns(
    const EstimatorSet& set, const AnnotationMatrix& m,
    const std::vector<std::size_t>& idx, Exec ex) {
  std::vector<ScoreColumn> cols;

  auto variance_col = [&](const auto& model, const char* name) {
    ScoreColumn col{std::string("variance:") + name,
                    std::vector<double>(idx.size())};
    parallel_for(
        idx.size(),
        [&](std::size_t t) {
          col.values[t] =
              variance_uncertainty(predict_annotations(model, m.instances[idx[t]]));
        },
        ex);
    cols.push_back(std::move(col));
  };
  if (set.ensemble) variance_col(*set.ensemble, "ensemble");
  if (set.multilabel) variance_col(*set.multilabel, "multilabel");
  if (set.multitask) variance_col(*set.multitask, "multitask");

  if (set.baseline) {
    ScoreColumn col{"softmax:baseline", std::vector<double>(idx.size())};
    parallel_for(
        idx.size(),
        [&](std::size_t t) {
          col.values[t] = softmax_uncertainty(
              predict_majority(*set.baseline, m.instances[idx[t]]).score);
        },
        ex);
    cols.push_back(std::move(col));

    if (set.mc_samples >= 2) {
      const auto scores =
          mc_dropout_batch(*set.baseline, m, idx, set.mc_samples, set.mc_seed, ex);
      ScoreColumn mc{"mc-dropout:baseline", std::vector<double>(idx.size())};
      for (std::size_t t = 0; t < idx.size(); ++t) mc.values[t] = scores[t].value;
      cols.push_back(std::move(mc));
    }
  }

  if (set.regressor) {
    cols.push_back(
        {"regressor", predict_disagreement_batch(*set.regressor, m, idx, ex)});
  }
  return cols;
}

CorrelationMatrix pairwise_estimator_correlation(
    const std::vector<ScoreColumn>& columns) {
  if (columns.size() < 2)
    throw ArgumentError("need at least two estimator columns");
  CorrelationMatrix cm;
  const std::size_t n = columns.size();
  cm.names.reserve(n);
  for (const auto& c : columns) cm.names.push_back(c.name);
  cm.r.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    cm.r[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = pearson(columns[i].values, columns[j].values);
      cm.r[i][j] = v;
      cm.r[j][i] = v;  // mirrored, not recomputed
    }
  }
  return cm;
}

namespace {

BucketStats bucket_stats(std::vector<double> values) {
  BucketStats s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.min = s.max = s.median = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.min = values.front();
  s.max = values.back();
  const std::size_t h = values.size() / 2;
  s.median = values.size() % 2 ? values[h] : 0.5 * (values[h - 1] + values[h]);
  return s;
}

}  // namespace

ErrorBuckets error_buckets(const std::vector<int>& preds,
                           const std::vector<int>& golds,
                           const std::vector<double>& uncertainty) {
  if (preds.size() != golds.size() || preds.size() != uncertainty.size())
    throw ArgumentError("error_buckets inputs differ in length");

  std::vector<double> correct, incorrect, tp, fp, fn, tn;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double u = uncertainty[i];
    (preds[i] == golds[i] ? correct : incorrect).push_back(u);
    if (preds[i] == 1 && golds[i] == 1) tp.push_back(u);
    else if (preds[i] == 1) fp.push_back(u);
    else if (golds[i] == 1) fn.push_back(u);
    else tn.push_back(u);
  }
  ErrorBuckets b;
  b.correct = bucket_stats(std::move(correct));
  b.incorrect = bucket_stats(std::move(incorrect));
  b.tp = bucket_stats(std::move(tp));
  b.fp = bucket_stats(std::move(fp));
  b.fn = bucket_stats(std::move(fn));
  b.tn = bucket_stats(std::move(tn));
  return b;
}

MismatchReport mismatch_analysis(const BaselineModel& bl,
                                 const MultiTaskModel& mt,
                                 const AnnotationMatrix& m,
                                 const std::vector<std::size_t>& idx,
                                 std::size_t example_cap) {
  MismatchReport rep;
  rep.n_instances = idx.size();
  for (int gold : {0, 1})
    for (int b : {0, 1}) {
      MismatchCell cell;
      cell.gold = gold;
      cell.baseline = b;
      cell.multitask = 1 - b;
      rep.cells.push_back(cell);
    }

  auto cell_of = [&](int gold, int b) -> MismatchCell& {
    return rep.cells[static_cast<std::size_t>(gold) * 2 +
                     static_cast<std::size_t>(b)];
  };

  for (std::size_t i : idx) {
    const int pb = predict_majority(bl, m.instances[i]).label;
    const auto pm = predict_majority(mt, m.instances[i]);
    if (pb == pm.label) continue;
    ++rep.n_disagreements;
    const int gold = majority_label(m, i);
    if (pb == gold) ++rep.baseline_right;
    if (pm.label == gold) ++rep.multitask_right;

    std::size_t ones = 0;
    for (const auto& e : m.rows[i]) ones += static_cast<std::size_t>(e.label);
    const double ann_frac =
        static_cast<double>(ones) / static_cast<double>(m.rows[i].size());

    auto& cell = cell_of(gold, pb);
    ++cell.count;
    cell.mean_prediction_fraction += pm.score;
    cell.mean_annotation_fraction += ann_frac;
    if (cell.examples.size() < example_cap)
      cell.examples.push_back({m.instances[i].id, pm.score, ann_frac});
  }

  for (auto& cell : rep.cells) {
    if (cell.count > 0) {
      cell.mean_prediction_fraction /= static_cast<double>(cell.count);
      cell.mean_annotation_fraction /= static_cast<double>(cell.count);
      cell.pct_of_disagreements = 100.0 * static_cast<double>(cell.count) /
                                  static_cast<double>(rep.n_disagreements);
    }
  }
  return rep;
}

std::vector<ArchSummary> summarize_runs(const std::vector<RunRecord>& runs) {
  std::vector<ArchSummary> out;
  for (const auto& r : runs) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ArchSummary& s) { return s.arch == r.arch; });
    if (it == out.end()) {
      out.push_back({r.arch, 0, 0, 0, 0, 0});
      it = out.end() - 1;
    }
    ++it->runs;
  }
  for (auto& s : out) {
    double msum = 0.0, isum = 0.0;
    for (const auto& r : runs)
      if (r.arch == s.arch) {
        msum += r.majority.f1;
        isum += r.individual.scores.f1;
      }
    const double n = static_cast<double>(s.runs);
    s.majority_f1_mean = msum / n;
    s.individual_f1_mean = isum / n;
    double mdev = 0.0, idev = 0.0;
    for (const auto& r : runs)
      if (r.arch == s.arch) {
        mdev += (r.majority.f1 - s.majority_f1_mean) *
                (r.majority.f1 - s.majority_f1_mean);
        idev += (r.individual.scores.f1 - s.individual_f1_mean) *
                (r.individual.scores.f1 - s.individual_f1_mean);
      }
    s.majority_f1_sd = std::sqrt(mdev / n);  // population sd
    s.individual_f1_sd = std::sqrt(idev / n);
  }
  return out;
}

CvResult cross_validate(const AnnotationMatrix& m, const CvConfig& cfg) {
  if (cfg.iterations < 1) throw ArgumentError("iterations must be >= 1");
  if (cfg.archs.empty() && !cfg.train_regressor)
    throw ArgumentError("nothing to train");
  if (cfg.true_disagreement &&
      cfg.true_disagreement->size() != m.n_instances())
    throw ArgumentError("truth vector does not match the corpus");
  validate(cfg.train);

  using clock = std::chrono::steady_clock;
  CvResult res;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const std::uint64_t iter_seed =
        derive_seed(cfg.master_seed, "iter", static_cast<std::uint64_t>(iter));
    const auto split = stratified_kfold(m, cfg.k, iter_seed);
    {
      std::vector<std::size_t> sizes;
      for (const auto& f : split.folds) sizes.push_back(f.size());
      res.fold_sizes.push_back(std::move(sizes));
    }

    // first-appearance order keeps reports deterministic
    std::vector<ScoreColumn> pooled;
    std::vector<double> pooled_gold, pooled_truth;
    auto pool = [&](const ScoreColumn& col) {
      auto it = std::find_if(pooled.begin(), pooled.end(),
                             [&](const ScoreColumn& p) { return p.name == col.name; });
      if (it == pooled.end()) {
        pooled.push_back({col.name, {}});
        it = pooled.end() - 1;
      }
      it->values.insert(it->values.end(), col.values.begin(), col.values.end());
    };

    for (int fold = 0; fold < cfg.k; ++fold) {
      const auto sv = split_view(split, fold, cfg.train.early_stopping);
      const auto& test = split.test_indices(fold);

      EstimatorSet set;
      set.mc_samples = cfg.mc_samples;
      set.mc_seed = derive_seed(iter_seed, "mc", static_cast<std::uint64_t>(fold));
      std::vector<AnyModel> trained;
      trained.reserve(cfg.archs.size());

      for (Arch arch : cfg.archs) {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(iter_seed, arch_name(arch),
                              static_cast<std::uint64_t>(fold));
        const auto t0 = clock::now();
        trained.push_back(train_model(arch, m, sv, tc));
        const auto t1 = clock::now();
        const AnyModel& model = trained.back();

        RunRecord rec;
        rec.iteration = iter;
        rec.fold = fold;
        rec.arch = arch_name(arch);
        rec.seed = tc.seed;
        rec.majority = majority_eval(model, m, test, tc.exec);
        rec.individual = arch == Arch::Baseline
                             ? majority_vs_individual_eval(model, m, test, tc.exec)
                             : individual_label_eval(model, m, test, tc.exec);
        rec.train_seconds = std::chrono::duration<double>(t1 - t0).count();
        res.runs.push_back(std::move(rec));

        if (const auto* p = std::get_if<BaselineModel>(&model)) set.baseline = p;
        if (const auto* p = std::get_if<EnsembleModel>(&model)) set.ensemble = p;
        if (const auto* p = std::get_if<MultiLabelModel>(&model))
          set.multilabel = p;
        if (const auto* p = std::get_if<MultiTaskModel>(&model)) set.multitask = p;
      }

      DisagreementModel reg;
      if (cfg.train_regressor) {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(iter_seed, "regressor",
                              static_cast<std::uint64_t>(fold));
        const auto t0 = clock::now();
        reg = train_disagreement(m, sv, tc);
        const auto t1 = clock::now();

        RegressorRecord rec;
        rec.iteration = iter;
        rec.fold = fold;
        rec.seed = tc.seed;
        double se = 0.0;
        const auto preds = predict_disagreement_batch(reg, m, test, tc.exec);
        for (std::size_t t = 0; t < test.size(); ++t) {
          const double diff = preds[t] - disagreement(m, test[t]);
          se += diff * diff;
        }
        rec.test_mse = se / static_cast<double>(test.size());
        rec.train_seconds = std::chrono::duration<double>(t1 - t0).count();
        res.regressor_runs.push_back(rec);
        set.regressor = &reg;
      }

      for (const auto& col : uncertainty_columns(set, m, test, cfg.train.exec))
        pool(col);
      for (std::size_t i : test) {
        pooled_gold.push_back(disagreement(m, i));
        if (cfg.true_disagreement)
          pooled_truth.push_back((*cfg.true_disagreement)[i]);
      }
    }

    for (const auto& col : pooled) {
      CorrelationRecord rec;
      rec.iteration = iter;
      rec.estimator = col.name;
      try {
        rec.r_vs_disagreement = pearson(col.values, pooled_gold);
      } catch (const UndefinedCorrelationError&) {
      }
      if (cfg.true_disagreement) {
        try {
          rec.r_vs_truth = pearson(col.values, pooled_truth);
        } catch (const UndefinedCorrelationError&) {
        }
      }
      res.correlations.push_back(std::move(rec));
    }
  }

  res.summaries = summarize_runs(res.runs);
  return res;
}

}  // namespace manno
