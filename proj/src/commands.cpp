#include "manno/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "manno/common.hpp"
#include "manno/evalkit.hpp"
#include "manno/synthetic.hpp"
#include "manno/uncert.hpp"

namespace manno {

using nlohmann::json;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

// ---- small helpers -------------------------------------------------------------

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw MissingDataError("cannot open '" + p.string() + "' for writing");
  out << s;
  out.flush();
  if (!out) throw MissingDataError("write to '" + p.string() + "' failed");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    q += c;
    if (c == '"') q += '"';
  }
  return q + "\"";
}

std::string csv_num(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.10g", v);
  return b;
}

std::string fixed4(double v) {
  if (std::isnan(v)) return "-";
  char b[40];
  std::snprintf(b, sizeof b, "%.4f", v);
  return b;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string iso_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char b[32];
  std::strftime(b, sizeof b, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return b;
}

double seconds_since(const clock_type::time_point& t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

json opt_or_null(const std::optional<double>& v) {
  return v ? json(*v) : json();
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---- error mapping -------------------------------------------------------------

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ArgumentError*>(&e)) return "argument";
  if (dynamic_cast<const MissingDataError*>(&e)) return "missing-data";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  return "runtime";
}

int exit_code_for(const std::exception& e) {
  const std::string kind = error_kind(e);
  return kind == "validation" || kind == "parse" || kind == "argument" ? 1 : 2;
}

template <typename Fn>
int guarded(const char* verb, const RunConfig& cfg, Fn&& body) {
  try {
    body();
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "manno %s: %s\n", verb, e.what());
    try {
      json err{{"command", verb},
               {"error", error_kind(e)},
               {"message", e.what()}};
      write_text(fs::path(cfg.out_dir) / "error.json", err.dump(2) + "\n");
    } catch (...) {
      // the error record is best effort; the exit code is the contract
    }
    return exit_code_for(e);
  }
}

// ---- data resolution -----------------------------------------------------------

struct DataBundle {
  AnnotationMatrix matrix;
  std::vector<double> truth;  // generator truth, empty when unavailable
  std::size_t generator_dropped = 0;  // synthetic annotators never sampled
  std::size_t dropped_annotators = 0, dropped_instances = 0,
              dropped_entries = 0;  // min_annotations filter
};

DataBundle resolve_data(const RunConfig& cfg) {
  DataBundle d;
  if (cfg.synthetic) {
    auto res = generate_synthetic(*cfg.synthetic);
    d.matrix = std::move(res.matrix);
    d.truth = std::move(res.truth.expected_disagreement);
    d.generator_dropped = res.dropped_annotators;
  } else {
    d.matrix = load_corpus(cfg.corpus_path, cfg.corpus_format);
    if (!cfg.truth_path.empty()) {
      auto t = load_truth(cfg.truth_path);
      if (t.instance_ids.size() != d.matrix.n_instances())
        throw ValidationError("truth sidecar '" + cfg.truth_path +
                              "' covers " +
                              std::to_string(t.instance_ids.size()) +
                              " instances, the corpus has " +
                              std::to_string(d.matrix.n_instances()));
      for (std::size_t i = 0; i < t.instance_ids.size(); ++i)
        if (t.instance_ids[i] != d.matrix.instances[i].id)
          throw ValidationError("truth sidecar '" + cfg.truth_path +
                                "' does not align with the corpus at row " +
                                std::to_string(i));
      d.truth = std::move(t.expected_disagreement);
    }
  }

  if (cfg.min_annotations > 0) {
    // the filter may drop instances, so carry the truth across by id
    std::map<std::string, double> truth_by_id;
    if (!d.truth.empty())
      for (std::size_t i = 0; i < d.matrix.n_instances(); ++i)
        truth_by_id[d.matrix.instances[i].id] = d.truth[i];
    auto f = filter_annotators(d.matrix, cfg.min_annotations);
    d.dropped_annotators = f.dropped_annotators;
    d.dropped_instances = f.dropped_instances;
    d.dropped_entries = f.dropped_entries;
    d.matrix = std::move(f.matrix);
    if (!truth_by_id.empty()) {
      d.truth.clear();
      for (const auto& inst : d.matrix.instances)
        d.truth.push_back(truth_by_id.at(inst.id));
    }
  }
  return d;
}

// ---- model plumbing ------------------------------------------------------------

const TrainConfig& model_cfg(const AnyModel& m) {
  return std::visit([](const auto& x) -> const TrainConfig& { return x.cfg; },
                    m);
}

const std::vector<std::string>* model_annotators(const AnyModel& m) {
  if (const auto* p = std::get_if<EnsembleModel>(&m)) return &p->annotators;
  if (const auto* p = std::get_if<MultiLabelModel>(&m)) return &p->annotators;
  if (const auto* p = std::get_if<MultiTaskModel>(&m)) return &p->annotators;
  return nullptr;
}

std::string ckpt_name(Arch a, int iter, int fold) {
  return arch_name(a) + "-i" + std::to_string(iter) + "-f" +
         std::to_string(fold) + ".json";
}

AnyModel load_and_check(const fs::path& p, Arch a, std::uint64_t seed,
                        const AnnotationMatrix& m) {
  if (!fs::exists(p))
    throw ValidationError("missing checkpoint '" + p.string() +
                          "'; run the train command first");
  AnyModel model = load_checkpoint(p.string());
  if (arch_of(model) != a)
    throw ValidationError("'" + p.string() + "' holds a " +
                          arch_name(arch_of(model)) + " model, expected " +
                          arch_name(a));
  if (const auto* ann = model_annotators(model))
    if (*ann != m.annotators)
      throw ValidationError("'" + p.string() +
                            "' was trained on a different corpus (annotator "
                            "set differs)");
  if (model_cfg(model).seed != seed)
    throw ValidationError("'" + p.string() +
                          "' does not match this config (training seed "
                          "differs)");
  return model;
}

json trace_json(const std::vector<TrainTracePoint>& trace) {
  json arr = json::array();
  for (const auto& t : trace)
    arr.push_back({{"epoch", t.epoch},
                   {"train_loss", t.train_loss},
                   {"val_f1", t.val_f1},
                   {"best", t.is_best}});
  return arr;
}

json model_traces(const AnyModel& m) {
  if (const auto* p = std::get_if<EnsembleModel>(&m)) {
    json arr = json::array();
    for (const auto& t : p->traces) arr.push_back(trace_json(t));
    return json{{"member_traces", std::move(arr)}};
  }
  return std::visit(
      [](const auto& x) -> json {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>,
                                     EnsembleModel>)
          return json();  // handled above
        else
          return json{{"trace", trace_json(x.trace)}};
      },
      m);
}

// ---- report fragments ----------------------------------------------------------

json prf_json(const PRF& p) {
  return {{"tp", p.tp},         {"fp", p.fp},
          {"fn", p.fn},         {"tn", p.tn},
          {"precision", p.precision}, {"recall", p.recall},
          {"f1", p.f1},         {"accuracy", p.accuracy},
          {"degenerate", p.degenerate}};
}

json individual_json(const IndividualEval& e) {
  return {{"scores", prf_json(e.scores)},
          {"evaluated_cells", e.evaluated_cells},
          {"skipped_flagged_cells", e.skipped_flagged_cells}};
}

json bucket_json(const BucketStats& b) {
  return {{"count", b.count},
          {"mean", num_or_null(b.mean)},
          {"min", num_or_null(b.min)},
          {"max", num_or_null(b.max)},
          {"median", num_or_null(b.median)}};
}

json buckets_json(const ErrorBuckets& b) {
  return {{"correct", bucket_json(b.correct)},
          {"incorrect", bucket_json(b.incorrect)},
          {"tp", bucket_json(b.tp)},
          {"fp", bucket_json(b.fp)},
          {"fn", bucket_json(b.fn)},
          {"tn", bucket_json(b.tn)}};
}

json mismatch_json(const MismatchReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json ex = json::array();
    for (const auto& e : c.examples)
      ex.push_back({{"instance_id", e.instance_id},
                    {"prediction_fraction", e.prediction_fraction},
                    {"annotation_fraction", e.annotation_fraction}});
    cells.push_back({{"gold", c.gold},
                     {"baseline", c.baseline},
                     {"multitask", c.multitask},
                     {"count", c.count},
                     {"pct_of_disagreements", c.pct_of_disagreements},
                     {"mean_prediction_fraction", c.mean_prediction_fraction},
                     {"mean_annotation_fraction", c.mean_annotation_fraction},
                     {"examples", std::move(ex)}});
  }
  return {{"n_instances", r.n_instances},
          {"n_disagreements", r.n_disagreements},
          {"baseline_right", r.baseline_right},
          {"multitask_right", r.multitask_right},
          {"cells", std::move(cells)}};
}

MismatchReport merge_mismatch(const std::vector<MismatchReport>& parts,
                              std::size_t cap) {
  MismatchReport out;
  if (parts.empty()) return out;
  out.cells = parts[0].cells;
  for (auto& c : out.cells) {
    c.count = 0;
    c.examples.clear();
  }
  std::vector<double> pred_sum(out.cells.size(), 0.0),
      ann_sum(out.cells.size(), 0.0);
  for (const auto& part : parts) {
    out.n_instances += part.n_instances;
    out.n_disagreements += part.n_disagreements;
    out.baseline_right += part.baseline_right;
    out.multitask_right += part.multitask_right;
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
      const auto& pc = part.cells[i];
      out.cells[i].count += pc.count;
      pred_sum[i] += pc.mean_prediction_fraction * pc.count;
      ann_sum[i] += pc.mean_annotation_fraction * pc.count;
      for (const auto& e : pc.examples)
        if (out.cells[i].examples.size() < cap)
          out.cells[i].examples.push_back(e);
    }
  }
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    auto& c = out.cells[i];
    c.pct_of_disagreements =
        out.n_disagreements
            ? 100.0 * c.count / static_cast<double>(out.n_disagreements)
            : 0.0;
    c.mean_prediction_fraction = c.count ? pred_sum[i] / c.count : 0.0;
    c.mean_annotation_fraction = c.count ? ann_sum[i] / c.count : 0.0;
  }
  return out;
}

// ---- the shared train/eval pipeline ----------------------------------------------

enum class Mode { Train, Eval, Compare };

struct TimingRow {
  int iteration = 0, fold = 0;
  std::string stage;  // architecture name or "regressor"
  double seconds = 0.0;
};

void write_run_info(const RunConfig& cfg, const char* command) {
  json info{{"command", command},
            {"timestamp", iso_timestamp()},
            {"out_dir", cfg.out_dir},
            {"exec", default_exec() == Exec::OpenMP ? "openmp" : "serial"},
            {"threads", exec_threads()}};
  write_text(fs::path(cfg.out_dir) / "run_info.json", info.dump(2) + "\n");
}

void write_timing(const RunConfig& cfg, const char* command,
                  const std::vector<TimingRow>& rows, double wall) {
  json jrows = json::array();
  std::map<std::string, std::vector<double>> by_stage;
  for (const auto& r : rows) {
    jrows.push_back({{"iteration", r.iteration},
                     {"fold", r.fold},
                     {"stage", r.stage},
                     {"seconds", r.seconds}});
    by_stage[r.stage].push_back(r.seconds);
  }
  json per_stage;
  std::ostringstream txt;
  txt << "timing (" << command << ")\n";
  txt << pad("stage", 14) << pad("runs", 8) << pad("total s", 12)
      << pad("mean s", 12) << "median s\n";
  for (const auto& [stage, secs] : by_stage) {
    double total = 0.0;
    for (double s : secs) total += s;
    const double mean = total / static_cast<double>(secs.size());
    const double med = median_of(secs);
    per_stage[stage] = {{"runs", secs.size()},
                        {"total_seconds", total},
                        {"mean_seconds", mean},
                        {"median_seconds", med}};
    txt << pad(stage, 14) << pad(std::to_string(secs.size()), 8)
        << pad(fixed4(total), 12) << pad(fixed4(mean), 12) << fixed4(med)
        << "\n";
  }
  txt << "total wall seconds: " << fixed4(wall) << "\n";
  json j{{"command", command},
         {"rows", std::move(jrows)},
         {"per_stage", std::move(per_stage)},
         {"wall_seconds", wall}};
  write_text(fs::path(cfg.out_dir) / "timing.json", j.dump(2) + "\n");
  write_text(fs::path(cfg.out_dir) / "timing.txt", txt.str());
}

json stats_json(const DataBundle& d) {
  const MatrixStats s = matrix_stats(d.matrix);
  return {{"n_instances", s.n_instances},
          {"n_annotators", s.n_annotators},
          {"n_entries", s.n_entries},
          {"annotations_per_instance_mean", s.annotations_per_instance_mean},
          {"annotations_per_instance_sd", s.annotations_per_instance_sd},
          {"annotations_per_annotator_mean", s.annotations_per_annotator_mean},
          {"annotations_per_annotator_sd", s.annotations_per_annotator_sd},
          {"positive_rate", s.positive_rate},
          {"majority_positive_rate", s.majority_positive_rate},
          {"generator_dropped_annotators", d.generator_dropped},
          {"filter_dropped_annotators", d.dropped_annotators},
          {"filter_dropped_instances", d.dropped_instances},
          {"filter_dropped_entries", d.dropped_entries}};
}

struct PipelineResult {
  std::vector<RunRecord> runs;
  std::vector<RegressorRecord> reg_runs;
  std::vector<CorrelationRecord> correlations;
  std::vector<ArchSummary> summaries;
  std::vector<std::vector<std::size_t>> fold_sizes;
  // pooled across every (iteration, fold) test set, row-aligned
  std::vector<ScoreColumn> all_columns;
  std::vector<int> gold_major_pool;
  std::vector<double> gold_dis_pool, truth_pool;
  std::map<std::string, std::vector<int>> arch_preds_pool;
  std::vector<MismatchReport> mismatch_parts;
  std::vector<std::string> instance_rows, uncert_rows;
  std::vector<std::string> column_names;
  std::vector<TimingRow> timing;
  json traces = json::array();
};

void pool_column(std::vector<ScoreColumn>& pooled, const ScoreColumn& col) {
  auto it = std::find_if(pooled.begin(), pooled.end(),
                         [&](const ScoreColumn& p) { return p.name == col.name; });
  if (it == pooled.end()) {
    pooled.push_back({col.name, {}});
    it = pooled.end() - 1;
  }
  it->values.insert(it->values.end(), col.values.begin(), col.values.end());
}

PipelineResult run_pipeline(const RunConfig& cfg, const DataBundle& data,
                            Mode mode) {
  const AnnotationMatrix& m = data.matrix;
  const Exec ex = default_exec();
  const fs::path dir(cfg.out_dir);
  const bool with_est = mode != Mode::Train;
  const bool has_baseline =
      std::find(cfg.archs.begin(), cfg.archs.end(), Arch::Baseline) !=
      cfg.archs.end();
  const bool has_multitask =
      std::find(cfg.archs.begin(), cfg.archs.end(), Arch::MultiTask) !=
      cfg.archs.end();

  if (mode != Mode::Eval) fs::create_directories(dir / "checkpoints");

  PipelineResult R;
  const int iterations = cfg.split.cv ? cfg.split.iterations : 1;
  const int folds = cfg.split.cv ? cfg.split.k : 1;

  for (int iter = 0; iter < iterations; ++iter) {
    const std::uint64_t iter_seed =
        derive_seed(cfg.seed, "iter", static_cast<std::uint64_t>(iter));

    DatasetSplit split;
    FixedSplit fsp;
    if (cfg.split.cv) {
      split = stratified_kfold(m, cfg.split.k, iter_seed);
      std::vector<std::size_t> sizes;
      for (const auto& f : split.folds) sizes.push_back(f.size());
      R.fold_sizes.push_back(std::move(sizes));
    } else {
      fsp = fixed_split(m, cfg.split.test_fraction, cfg.split.val_fraction,
                        iter_seed);
      R.fold_sizes.push_back({fsp.test.size()});
    }

    std::vector<ScoreColumn> iter_columns;
    std::vector<double> iter_gold, iter_truth;

    for (int fold = 0; fold < folds; ++fold) {
      SplitView sv;
      const std::vector<std::size_t>* test = nullptr;
      if (cfg.split.cv) {
        sv = split_view(split, fold, cfg.train.early_stopping);
        test = &split.test_indices(fold);
      } else {
        sv = split_view(fsp);
        if (!cfg.train.early_stopping) {
          // mirror cv semantics: the validation slice is held out only when
          // early stopping will consume it
          sv.train.insert(sv.train.end(), sv.val.begin(), sv.val.end());
          std::sort(sv.train.begin(), sv.train.end());
          sv.val.clear();
        }
        test = &fsp.test;
      }

      std::vector<AnyModel> models;
      models.reserve(cfg.archs.size());
      for (Arch arch : cfg.archs) {
        const std::uint64_t seed = derive_seed(
            iter_seed, arch_name(arch), static_cast<std::uint64_t>(fold));
        if (mode == Mode::Eval) {
          models.push_back(load_and_check(
              dir / "checkpoints" / ckpt_name(arch, iter, fold), arch, seed,
              m));
        } else {
          TrainConfig tc = cfg.train;
          tc.seed = seed;
          tc.exec = ex;
          const auto t0 = clock_type::now();
          models.push_back(train_model(arch, m, sv, tc));
          R.timing.push_back({iter, fold, arch_name(arch), seconds_since(t0)});
          save_checkpoint(models.back(),
                          (dir / "checkpoints" / ckpt_name(arch, iter, fold))
                              .string());
          json t = model_traces(models.back());
          t["arch"] = arch_name(arch);
          t["iteration"] = iter;
          t["fold"] = fold;
          t["seed"] = seed;
          R.traces.push_back(std::move(t));
        }
        const AnyModel& model = models.back();

        RunRecord rec;
        rec.iteration = iter;
        rec.fold = fold;
        rec.arch = arch_name(arch);
        rec.seed = seed;
        rec.majority = majority_eval(model, m, *test, ex);
        rec.individual = arch == Arch::Baseline
                             ? majority_vs_individual_eval(model, m, *test, ex)
                             : individual_label_eval(model, m, *test, ex);
        R.runs.push_back(std::move(rec));
      }

      std::optional<DisagreementModel> reg;
      if (with_est && cfg.estimators.regressor) {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(iter_seed, "regressor",
                              static_cast<std::uint64_t>(fold));
        tc.exec = ex;
        const auto t0 = clock_type::now();
        reg = train_disagreement(m, sv, tc);
        R.timing.push_back({iter, fold, "regressor", seconds_since(t0)});

        RegressorRecord rr;
        rr.iteration = iter;
        rr.fold = fold;
        rr.seed = tc.seed;
        const auto preds = predict_disagreement_batch(*reg, m, *test, ex);
        double se = 0.0;
        for (std::size_t t = 0; t < test->size(); ++t) {
          const double diff = preds[t] - disagreement(m, (*test)[t]);
          se += diff * diff;
        }
        rr.test_mse = test->empty() ? 0.0 : se / static_cast<double>(test->size());
        R.reg_runs.push_back(rr);
      }

      if (!with_est) continue;

      EstimatorSet set;
      set.mc_samples = cfg.estimators.mc_dropout ? cfg.estimators.mc_samples : 0;
      set.mc_seed =
          derive_seed(iter_seed, "mc", static_cast<std::uint64_t>(fold));
      for (const AnyModel& model : models) {
        if (const auto* p = std::get_if<BaselineModel>(&model))
          set.baseline = p;
        if (const auto* p = std::get_if<EnsembleModel>(&model))
          set.ensemble = p;
        if (const auto* p = std::get_if<MultiLabelModel>(&model))
          set.multilabel = p;
        if (const auto* p = std::get_if<MultiTaskModel>(&model))
          set.multitask = p;
      }
      if (reg) set.regressor = &*reg;

      std::vector<ScoreColumn> cols = uncertainty_columns(set, m, *test, ex);
      std::erase_if(cols, [&](const ScoreColumn& c) {
        if (!cfg.estimators.variance && c.name.rfind("variance:", 0) == 0)
          return true;
        if (!cfg.estimators.softmax && c.name == "softmax:baseline")
          return true;
        return false;
      });
      if (R.column_names.empty())
        for (const auto& c : cols) R.column_names.push_back(c.name);

      std::vector<std::vector<MajorityPrediction>> preds(cfg.archs.size());
      for (std::size_t a = 0; a < cfg.archs.size(); ++a)
        preds[a] = predict_majority_batch(models[a], m, *test, ex);

      for (std::size_t t = 0; t < test->size(); ++t) {
        const std::size_t i = (*test)[t];
        R.gold_major_pool.push_back(majority_label(m, i));
        R.gold_dis_pool.push_back(disagreement(m, i));
        if (!data.truth.empty()) R.truth_pool.push_back(data.truth[i]);
        for (std::size_t a = 0; a < cfg.archs.size(); ++a)
          R.arch_preds_pool[arch_name(cfg.archs[a])].push_back(
              preds[a][t].label);

        std::ostringstream row;
        row << iter << ',' << fold << ','
            << csv_field(m.instances[i].id) << ',' << majority_label(m, i)
            << ',' << csv_num(disagreement(m, i));
        if (!data.truth.empty()) row << ',' << csv_num(data.truth[i]);
        for (std::size_t a = 0; a < cfg.archs.size(); ++a)
          row << ',' << preds[a][t].label << ','
              << csv_num(preds[a][t].score);
        R.instance_rows.push_back(row.str());

        std::ostringstream urow;
        urow << iter << ',' << fold << ','
             << csv_field(m.instances[i].id) << ','
             << csv_num(disagreement(m, i));
        if (!data.truth.empty()) urow << ',' << csv_num(data.truth[i]);
        for (const auto& c : cols) urow << ',' << csv_num(c.values[t]);
        R.uncert_rows.push_back(urow.str());
      }

      for (const auto& c : cols) {
        pool_column(iter_columns, c);
        pool_column(R.all_columns, c);
      }
      for (std::size_t i : *test) {
        iter_gold.push_back(disagreement(m, i));
        if (!data.truth.empty()) iter_truth.push_back(data.truth[i]);
      }

      if (has_baseline && has_multitask)
        R.mismatch_parts.push_back(
            mismatch_analysis(*set.baseline, *set.multitask, m, *test,
                              cfg.estimators.example_cap));
    }

    for (const auto& col : iter_columns) {
      CorrelationRecord rec;
      rec.iteration = iter;
      rec.estimator = col.name;
      try {
        rec.r_vs_disagreement = pearson(col.values, iter_gold);
      } catch (const std::exception&) {
      }
      if (!iter_truth.empty()) {
        try {
          rec.r_vs_truth = pearson(col.values, iter_truth);
        } catch (const std::exception&) {
        }
      }
      R.correlations.push_back(std::move(rec));
    }
  }

  R.summaries = summarize_runs(R.runs);
  return R;
}

// ---- report writers ------------------------------------------------------------

json runs_json(const PipelineResult& R) {
  json arr = json::array();
  for (const auto& r : R.runs)
    arr.push_back({{"iteration", r.iteration},
                   {"fold", r.fold},
                   {"arch", r.arch},
                   {"seed", r.seed},
                   {"majority", prf_json(r.majority)},
                   {"individual", individual_json(r.individual)}});
  return arr;
}

json summaries_json(const PipelineResult& R) {
  json arr = json::array();
  for (const auto& s : R.summaries)
    arr.push_back({{"arch", s.arch},
                   {"runs", s.runs},
                   {"majority_f1_mean", s.majority_f1_mean},
                   {"majority_f1_sd", s.majority_f1_sd},
                   {"individual_f1_mean", s.individual_f1_mean},
                   {"individual_f1_sd", s.individual_f1_sd}});
  return arr;
}

json correlations_json(const PipelineResult& R, bool with_truth) {
  json arr = json::array();
  for (const auto& c : R.correlations) {
    json rec{{"iteration", c.iteration},
             {"estimator", c.estimator},
             {"r_vs_disagreement", opt_or_null(c.r_vs_disagreement)}};
    if (with_truth) rec["r_vs_truth"] = opt_or_null(c.r_vs_truth);
    arr.push_back(std::move(rec));
  }
  return arr;
}

// mean of the defined per-iteration correlations, in first-appearance order
json correlation_means_json(const PipelineResult& R, bool with_truth) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<double, int>> dis, truth;
  for (const auto& c : R.correlations) {
    if (std::find(order.begin(), order.end(), c.estimator) == order.end())
      order.push_back(c.estimator);
    if (c.r_vs_disagreement) {
      dis[c.estimator].first += *c.r_vs_disagreement;
      dis[c.estimator].second += 1;
    }
    if (c.r_vs_truth) {
      truth[c.estimator].first += *c.r_vs_truth;
      truth[c.estimator].second += 1;
    }
  }
  json arr = json::array();
  for (const auto& name : order) {
    json rec{{"estimator", name}};
    const auto d = dis.find(name);
    rec["r_vs_disagreement"] = d != dis.end() && d->second.second
                                   ? json(d->second.first / d->second.second)
                                   : json();
    if (with_truth) {
      const auto t = truth.find(name);
      rec["r_vs_truth"] = t != truth.end() && t->second.second
                              ? json(t->second.first / t->second.second)
                              : json();
    }
    arr.push_back(std::move(rec));
  }
  return arr;
}

struct EstimatorExtras {
  std::optional<CorrelationMatrix> matrix;
  std::string matrix_note;
  std::vector<std::pair<std::string, ErrorBuckets>> buckets;
  std::optional<MismatchReport> mismatch;
};

EstimatorExtras estimator_extras(const RunConfig& cfg,
                                 const PipelineResult& R) {
  EstimatorExtras out;
  try {
    out.matrix = pairwise_estimator_correlation(R.all_columns);
  } catch (const std::exception& e) {
    out.matrix_note = e.what();
  }
  for (const auto& col : R.all_columns) {
    const auto sep = col.name.find(':');
    if (sep == std::string::npos) continue;  // regressor: no tied classifier
    const std::string arch = col.name.substr(sep + 1);
    const auto it = R.arch_preds_pool.find(arch);
    if (it == R.arch_preds_pool.end()) continue;
    out.buckets.emplace_back(
        col.name, error_buckets(it->second, R.gold_major_pool, col.values));
  }
  if (!R.mismatch_parts.empty())
    out.mismatch =
        merge_mismatch(R.mismatch_parts, cfg.estimators.example_cap);
  return out;
}

void write_report_json(const RunConfig& cfg, const DataBundle& data,
                       const PipelineResult& R, const EstimatorExtras& ex) {
  const bool with_truth = !data.truth.empty();
  json j;
  j["stats"] = stats_json(data);
  json archs = json::array();
  for (Arch a : cfg.archs) archs.push_back(arch_name(a));
  j["architectures"] = std::move(archs);
  j["fold_sizes"] = R.fold_sizes;
  j["runs"] = runs_json(R);
  j["summaries"] = summaries_json(R);
  json regs = json::array();
  for (const auto& r : R.reg_runs)
    regs.push_back({{"iteration", r.iteration},
                    {"fold", r.fold},
                    {"seed", r.seed},
                    {"test_mse", r.test_mse}});
  j["regressor_runs"] = std::move(regs);
  j["correlations"] = correlations_json(R, with_truth);
  j["correlation_means"] = correlation_means_json(R, with_truth);
  if (ex.matrix) {
    j["estimator_matrix"] = {{"names", ex.matrix->names}, {"r", ex.matrix->r}};
  } else {
    j["estimator_matrix"] = json();
    j["estimator_matrix_note"] = ex.matrix_note;
  }
  json buckets;
  for (const auto& [name, b] : ex.buckets) buckets[name] = buckets_json(b);
  j["error_buckets"] = std::move(buckets);
  j["mismatch"] = ex.mismatch ? mismatch_json(*ex.mismatch) : json();
  write_text(fs::path(cfg.out_dir) / "report.json", j.dump(2) + "\n");
}

void write_report_txt(const RunConfig& cfg, const DataBundle& data,
                      const PipelineResult& R, const EstimatorExtras& ex) {
  const bool with_truth = !data.truth.empty();
  std::ostringstream t;
  t << "== corpus ==\n" << format_stats(matrix_stats(data.matrix));
  if (data.generator_dropped)
    t << "generator dropped " << data.generator_dropped
      << " never-sampled annotator(s)\n";
  if (cfg.min_annotations > 0)
    t << "min_annotations filter dropped " << data.dropped_annotators
      << " annotator(s), " << data.dropped_instances << " instance(s), "
      << data.dropped_entries << " entr(ies)\n";

  t << "\n== architecture summary ==\n";
  t << pad("arch", 14) << pad("runs", 6) << pad("majority F1", 20)
    << "per-annotator F1\n";
  for (const auto& s : R.summaries)
    t << pad(s.arch, 14) << pad(std::to_string(s.runs), 6)
      << pad(fixed4(s.majority_f1_mean) + " +- " + fixed4(s.majority_f1_sd),
             20)
      << fixed4(s.individual_f1_mean) << " +- " << fixed4(s.individual_f1_sd)
      << "\n";

  t << "\n== per-run results ==\n";
  t << pad("iter", 6) << pad("fold", 6) << pad("arch", 14) << pad("majP", 8)
    << pad("majR", 8) << pad("majF1", 8) << pad("majAcc", 8) << pad("indF1", 8)
    << pad("cells", 7) << "skipped\n";
  for (const auto& r : R.runs)
    t << pad(std::to_string(r.iteration), 6) << pad(std::to_string(r.fold), 6)
      << pad(r.arch, 14) << pad(fixed4(r.majority.precision), 8)
      << pad(fixed4(r.majority.recall), 8) << pad(fixed4(r.majority.f1), 8)
      << pad(fixed4(r.majority.accuracy), 8)
      << pad(fixed4(r.individual.scores.f1), 8)
      << pad(std::to_string(r.individual.evaluated_cells), 7)
      << r.individual.skipped_flagged_cells << "\n";

  if (!R.reg_runs.empty()) {
    t << "\n== disagreement regressor ==\n";
    t << pad("iter", 6) << pad("fold", 6) << "test MSE\n";
    double sum = 0.0;
    for (const auto& r : R.reg_runs) {
      t << pad(std::to_string(r.iteration), 6)
        << pad(std::to_string(r.fold), 6) << fixed4(r.test_mse) << "\n";
      sum += r.test_mse;
    }
    t << "mean test MSE: "
      << fixed4(sum / static_cast<double>(R.reg_runs.size())) << "\n";
  }

  if (!R.correlations.empty()) {
    t << "\n== uncertainty correlations (Pearson r) ==\n";
    t << pad("iter", 6) << pad("estimator", 22) << pad("r vs disagreement", 19);
    if (with_truth) t << "r vs truth";
    t << "\n";
    auto opt4 = [](const std::optional<double>& v) {
      return v ? fixed4(*v) : std::string("undefined");
    };
    for (const auto& c : R.correlations) {
      t << pad(std::to_string(c.iteration), 6) << pad(c.estimator, 22)
        << pad(opt4(c.r_vs_disagreement), 19);
      if (with_truth) t << opt4(c.r_vs_truth);
      t << "\n";
    }
  }

  if (ex.matrix) {
    t << "\n== estimator agreement (pairwise Pearson) ==\n";
    t << pad("", 22);
    for (const auto& n : ex.matrix->names) t << pad(n, 22);
    t << "\n";
    for (std::size_t i = 0; i < ex.matrix->names.size(); ++i) {
      t << pad(ex.matrix->names[i], 22);
      for (double v : ex.matrix->r[i]) t << pad(fixed4(v), 22);
      t << "\n";
    }
  } else if (!ex.matrix_note.empty()) {
    t << "\n== estimator agreement ==\nnot available: " << ex.matrix_note
      << "\n";
  }

  if (!ex.buckets.empty()) {
    t << "\n== uncertainty by prediction outcome ==\n";
    for (const auto& [name, b] : ex.buckets) {
      t << name << "\n";
      auto line = [&](const char* label, const BucketStats& s) {
        t << "  " << pad(label, 11) << pad(std::to_string(s.count), 7)
          << pad(fixed4(s.mean), 10) << pad(fixed4(s.median), 10) << "\n";
      };
      t << "  " << pad("outcome", 11) << pad("count", 7) << pad("mean", 10)
        << pad("median", 10) << "\n";
      line("correct", b.correct);
      line("incorrect", b.incorrect);
      line("tp", b.tp);
      line("fp", b.fp);
      line("fn", b.fn);
      line("tn", b.tn);
    }
  }

  if (ex.mismatch) {
    const auto& mm = *ex.mismatch;
    t << "\n== baseline vs multi-task mismatches ==\n";
    t << "test instances: " << mm.n_instances
      << ", disagreements: " << mm.n_disagreements
      << " (baseline right " << mm.baseline_right << ", multi-task right "
      << mm.multitask_right << ")\n";
    for (const auto& c : mm.cells) {
      t << "gold=" << c.gold << " baseline=" << c.baseline
        << " multitask=" << c.multitask << ": " << c.count << " ("
        << fixed4(c.pct_of_disagreements)
        << "% of disagreements), mean predicted-positive fraction "
        << fixed4(c.mean_prediction_fraction)
        << ", mean annotator-positive fraction "
        << fixed4(c.mean_annotation_fraction) << "\n";
      for (const auto& e : c.examples)
        t << "    " << e.instance_id << " (pred "
          << fixed4(e.prediction_fraction) << ", ann "
          << fixed4(e.annotation_fraction) << ")\n";
    }
  }

  write_text(fs::path(cfg.out_dir) / "report.txt", t.str());
}

void write_csvs(const RunConfig& cfg, const DataBundle& data,
                const PipelineResult& R) {
  const bool with_truth = !data.truth.empty();
  std::ostringstream inst;
  inst << "iteration,fold,instance_id,gold_majority,gold_disagreement";
  if (with_truth) inst << ",truth_disagreement";
  for (Arch a : cfg.archs)
    inst << ',' << arch_name(a) << "_label," << arch_name(a) << "_score";
  inst << "\n";
  for (const auto& r : R.instance_rows) inst << r << "\n";
  write_text(fs::path(cfg.out_dir) / "instances.csv", inst.str());

  std::ostringstream unc;
  unc << "iteration,fold,instance_id,gold_disagreement";
  if (with_truth) unc << ",truth_disagreement";
  for (const auto& n : R.column_names) unc << ',' << n;
  unc << "\n";
  for (const auto& r : R.uncert_rows) unc << r << "\n";
  write_text(fs::path(cfg.out_dir) / "uncertainty.csv", unc.str());
}

void write_train_outputs(const RunConfig& cfg, const PipelineResult& R) {
  json metrics{{"runs", runs_json(R)},
               {"summaries", summaries_json(R)},
               {"fold_sizes", R.fold_sizes}};
  write_text(fs::path(cfg.out_dir) / "metrics.json", metrics.dump(2) + "\n");
  json traces{{"runs", R.traces}};
  write_text(fs::path(cfg.out_dir) / "traces.json", traces.dump(2) + "\n");
}

}  // namespace

// ---- commands ------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg) {
  return guarded("synth", cfg, [&] {
    if (!cfg.synthetic)
      throw ValidationError("the synth command needs a 'synthetic' section");
    const auto t0 = clock_type::now();
    DataBundle data = resolve_data(cfg);

    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    const char* ext = cfg.corpus_format == CorpusFormat::Csv ? "csv" : "jsonl";
    const fs::path corpus_path = dir / (std::string("corpus.") + ext);
    save_corpus(data.matrix, corpus_path.string(), cfg.corpus_format);

    // regenerate to keep the sidecar aligned even when min_annotations
    // filtering reshaped the matrix: the truth file describes the corpus as
    // written, so rebuild it from the kept instances
    {
      auto res = generate_synthetic(*cfg.synthetic);
      SyntheticTruth kept;
      std::map<std::string, std::size_t> row;
      for (std::size_t i = 0; i < res.truth.instance_ids.size(); ++i)
        row[res.truth.instance_ids[i]] = i;
      for (const auto& inst : data.matrix.instances) {
        const std::size_t i = row.at(inst.id);
        kept.instance_ids.push_back(res.truth.instance_ids[i]);
        kept.latent.push_back(res.truth.latent[i]);
        kept.is_trigger.push_back(res.truth.is_trigger[i]);
        kept.expected_disagreement.push_back(
            res.truth.expected_disagreement[i]);
      }
      save_truth(kept, (dir / "truth.jsonl").string());
    }

    std::ostringstream stats;
    stats << format_stats(matrix_stats(data.matrix));
    if (data.generator_dropped)
      stats << "generator dropped " << data.generator_dropped
            << " never-sampled annotator(s)\n";
    if (cfg.min_annotations > 0)
      stats << "min_annotations filter dropped " << data.dropped_annotators
            << " annotator(s), " << data.dropped_instances
            << " instance(s), " << data.dropped_entries << " entr(ies)\n";
    write_text(dir / "stats.txt", stats.str());
    write_text(dir / "config.json", config_echo(cfg));
    write_run_info(cfg, "synth");
    write_timing(cfg, "synth", {}, seconds_since(t0));

    std::fputs(stats.str().c_str(), stdout);
    std::printf("wrote %s and %s\n", corpus_path.string().c_str(),
                (dir / "truth.jsonl").string().c_str());
  });
}

int cmd_train(const RunConfig& cfg) {
  return guarded("train", cfg, [&] {
    const auto t0 = clock_type::now();
    DataBundle data = resolve_data(cfg);
    fs::create_directories(fs::path(cfg.out_dir));
    write_text(fs::path(cfg.out_dir) / "config.json", config_echo(cfg));
    PipelineResult R = run_pipeline(cfg, data, Mode::Train);
    write_train_outputs(cfg, R);
    write_run_info(cfg, "train");
    write_timing(cfg, "train", R.timing, seconds_since(t0));
    std::printf("trained %zu model(s); checkpoints under %s\n",
                R.runs.size(),
                (fs::path(cfg.out_dir) / "checkpoints").string().c_str());
  });
}

int cmd_eval(const RunConfig& cfg) {
  return guarded("eval", cfg, [&] {
    const auto t0 = clock_type::now();
    DataBundle data = resolve_data(cfg);
    fs::create_directories(fs::path(cfg.out_dir));
    write_text(fs::path(cfg.out_dir) / "config.json", config_echo(cfg));
    PipelineResult R = run_pipeline(cfg, data, Mode::Eval);
    const EstimatorExtras ex = estimator_extras(cfg, R);
    write_report_json(cfg, data, R, ex);
    write_report_txt(cfg, data, R, ex);
    write_csvs(cfg, data, R);
    write_run_info(cfg, "eval");
    write_timing(cfg, "eval", R.timing, seconds_since(t0));
    std::printf("evaluated %zu run(s); report under %s\n", R.runs.size(),
                cfg.out_dir.c_str());
  });
}

int cmd_compare(const RunConfig& cfg) {
  return guarded("compare", cfg, [&] {
    const auto t0 = clock_type::now();
    DataBundle data = resolve_data(cfg);
    fs::create_directories(fs::path(cfg.out_dir));
    write_text(fs::path(cfg.out_dir) / "config.json", config_echo(cfg));
    PipelineResult R = run_pipeline(cfg, data, Mode::Compare);
    const EstimatorExtras ex = estimator_extras(cfg, R);
    write_train_outputs(cfg, R);
    write_report_json(cfg, data, R, ex);
    write_report_txt(cfg, data, R, ex);
    write_csvs(cfg, data, R);
    write_run_info(cfg, "compare");
    write_timing(cfg, "compare", R.timing, seconds_since(t0));
    std::printf("compared %zu architecture(s) over %zu run(s); report under %s\n",
                cfg.archs.size(), R.runs.size(), cfg.out_dir.c_str());
  });
}

int run_command(const std::string& verb, const RunConfig& cfg) {
  if (verb == "synth") return cmd_synth(cfg);
  if (verb == "train") return cmd_train(cfg);
  if (verb == "eval") return cmd_eval(cfg);
  if (verb == "compare") return cmd_compare(cfg);
  std::fprintf(stderr, "manno: unknown command '%s'\n", verb.c_str());
  return 1;
}

}  // namespace manno
