#include "manno/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "json.hpp"

#include "manno/common.hpp"

namespace manno {

using nlohmann::json;

namespace {

std::string joined(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object())
    throw ValidationError(path.empty() ? "config must be a JSON object"
                                       : path + " must be an object");
}

void reject_unknown(const json& j, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known)
      throw ValidationError(prefix.empty()
                                ? "unknown key '" + item.key() + "'"
                                : prefix + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
T take(const json& j, const std::string& prefix, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(joined(prefix, key) + " has the wrong type");
  }
}

void require_file(const std::string& path, const std::string& field) {
  if (!std::filesystem::exists(path))
    throw ValidationError(field + ": '" + path + "' does not exist");
}

CorpusFormat parse_format(const std::string& s, const std::string& field) {
  if (s == "jsonl") return CorpusFormat::Jsonl;
  if (s == "csv") return CorpusFormat::Csv;
  throw ValidationError(field + ": expected 'jsonl' or 'csv', got '" + s + "'");
}

SyntheticConfig parse_synthetic(const json& j, std::uint64_t master_seed,
                                CorpusFormat* format_out) {
  expect_object(j, "synthetic");
  reject_unknown(j, "synthetic",
                 {"preset", "n_instances", "annotations_per_instance",
                  "vocab_ordinary", "tokens_per_instance", "token_jitter",
                  "trigger_fraction", "seed", "annotators", "format"});

  SyntheticConfig cfg;
  const std::string preset = take<std::string>(j, "synthetic", "preset", "");
  if (!preset.empty()) {
    if (preset != "benchmark")
      throw ValidationError("synthetic.preset: unknown preset '" + preset +
                            "'");
    cfg = benchmark_config(take<std::uint64_t>(j, "synthetic", "seed",
                                               master_seed));
  } else {
    cfg.seed = take<std::uint64_t>(j, "synthetic", "seed", master_seed);
  }

  cfg.n_instances =
      take<std::size_t>(j, "synthetic", "n_instances", cfg.n_instances);
  cfg.annotations_per_instance = take<int>(j, "synthetic",
                                           "annotations_per_instance",
                                           cfg.annotations_per_instance);
  cfg.vocab_ordinary =
      take<int>(j, "synthetic", "vocab_ordinary", cfg.vocab_ordinary);
  cfg.tokens_per_instance = take<int>(j, "synthetic", "tokens_per_instance",
                                      cfg.tokens_per_instance);
  cfg.token_jitter =
      take<double>(j, "synthetic", "token_jitter", cfg.token_jitter);
  cfg.trigger_fraction =
      take<double>(j, "synthetic", "trigger_fraction", cfg.trigger_fraction);

  if (j.contains("annotators")) {
    if (!preset.empty())
      throw ValidationError(
          "synthetic: a preset already defines the annotators");
    const json& arr = j.at("annotators");
    if (!arr.is_array())
      throw ValidationError("synthetic.annotators must be an array");
    cfg.annotators.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string at = "synthetic.annotators[" + std::to_string(i) + "]";
      expect_object(arr[i], at);
      reject_unknown(arr[i], at, {"threshold", "trigger_bias", "noise"});
      AnnotatorProfile p;
      p.threshold = take<double>(arr[i], at, "threshold", p.threshold);
      p.trigger_bias = take<double>(arr[i], at, "trigger_bias", p.trigger_bias);
      p.noise = take<double>(arr[i], at, "noise", p.noise);
      cfg.annotators.push_back(p);
    }
  } else if (preset.empty()) {
    throw ValidationError(
        "synthetic: either a preset or an annotators array is required");
  }

  if (j.contains("format"))
    *format_out = parse_format(
        take<std::string>(j, "synthetic", "format", ""), "synthetic.format");

  try {
    validate(cfg);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("synthetic: ") + e.what());
  }
  return cfg;
}

TrainConfig parse_train(const json& j, const TrainConfig& defaults) {
  expect_object(j, "train");
  reject_unknown(j, "train",
                 {"epochs", "batch_size", "lr", "dropout", "early_stopping",
                  "patience", "embed_dim", "hidden_dim", "repr_dim",
                  "vocab_min_count"});
  TrainConfig cfg = defaults;
  cfg.epochs = take<int>(j, "train", "epochs", cfg.epochs);
  cfg.batch_size = take<int>(j, "train", "batch_size", cfg.batch_size);
  cfg.lr = take<double>(j, "train", "lr", cfg.lr);
  cfg.dropout = take<double>(j, "train", "dropout", cfg.dropout);
  cfg.early_stopping =
      take<bool>(j, "train", "early_stopping", cfg.early_stopping);
  cfg.patience = take<int>(j, "train", "patience", cfg.patience);
  cfg.embed_dim = take<int>(j, "train", "embed_dim", cfg.embed_dim);
  cfg.hidden_dim = take<int>(j, "train", "hidden_dim", cfg.hidden_dim);
  cfg.repr_dim = take<int>(j, "train", "repr_dim", cfg.repr_dim);
  cfg.vocab_min_count =
      take<std::size_t>(j, "train", "vocab_min_count", cfg.vocab_min_count);
  try {
    validate(cfg);
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("train: ") + e.what());
  }
  return cfg;
}

SplitConfig parse_split(const json& j, const SplitConfig& defaults) {
  expect_object(j, "split");
  reject_unknown(j, "split",
                 {"mode", "k", "iterations", "test_fraction", "val_fraction"});
  SplitConfig cfg = defaults;
  const std::string mode =
      take<std::string>(j, "split", "mode", cfg.cv ? "cv" : "fixed");
  if (mode == "cv")
    cfg.cv = true;
  else if (mode == "fixed")
    cfg.cv = false;
  else
    throw ValidationError("split.mode: expected 'cv' or 'fixed', got '" +
                          mode + "'");
  cfg.k = take<int>(j, "split", "k", cfg.k);
  cfg.iterations = take<int>(j, "split", "iterations", cfg.iterations);
  cfg.test_fraction =
      take<double>(j, "split", "test_fraction", cfg.test_fraction);
  cfg.val_fraction = take<double>(j, "split", "val_fraction", cfg.val_fraction);

  if (cfg.cv && cfg.k < 2) throw ValidationError("split.k must be >= 2");
  if (cfg.iterations < 1)
    throw ValidationError("split.iterations must be >= 1");
  if (!cfg.cv) {
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
      throw ValidationError("split.test_fraction must be in (0, 1)");
    if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0) ||
        cfg.test_fraction + cfg.val_fraction >= 1.0)
      throw ValidationError(
          "split.val_fraction must leave room for a training set");
    if (cfg.iterations != 1)
      throw ValidationError("split.iterations applies to cv mode only");
  }
  return cfg;
}

EstimatorConfig parse_estimators(const json& j,
                                 const EstimatorConfig& defaults) {
  expect_object(j, "estimators");
  reject_unknown(j, "estimators",
                 {"variance", "softmax", "mc_dropout", "regressor",
                  "mc_samples", "example_cap"});
  EstimatorConfig cfg = defaults;
  cfg.variance = take<bool>(j, "estimators", "variance", cfg.variance);
  cfg.softmax = take<bool>(j, "estimators", "softmax", cfg.softmax);
  cfg.mc_dropout = take<bool>(j, "estimators", "mc_dropout", cfg.mc_dropout);
  cfg.regressor = take<bool>(j, "estimators", "regressor", cfg.regressor);
  cfg.mc_samples = take<int>(j, "estimators", "mc_samples", cfg.mc_samples);
  cfg.example_cap =
      take<std::size_t>(j, "estimators", "example_cap", cfg.example_cap);
  if (cfg.mc_dropout && cfg.mc_samples < 2)
    throw ValidationError(
        "estimators.mc_samples must be >= 2 when mc_dropout is on");
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  expect_object(j, "");
  reject_unknown(j, "",
                 {"corpus", "synthetic", "truth_path", "out_dir", "seed",
                  "min_annotations", "architectures", "train", "split",
                  "estimators"});

  RunConfig cfg;
  cfg.seed = take<std::uint64_t>(j, "", "seed", cfg.seed);
  cfg.out_dir = take<std::string>(j, "", "out_dir", cfg.out_dir);
  cfg.min_annotations =
      take<std::size_t>(j, "", "min_annotations", cfg.min_annotations);

  const bool has_corpus = j.contains("corpus");
  const bool has_synth = j.contains("synthetic");
  if (has_corpus == has_synth)
    throw ValidationError(
        "config must name exactly one data source: 'corpus' or 'synthetic'");

  if (has_corpus) {
    const json& c = j.at("corpus");
    expect_object(c, "corpus");
    reject_unknown(c, "corpus", {"path", "format"});
    cfg.corpus_path = take<std::string>(c, "corpus", "path", "");
    if (cfg.corpus_path.empty())
      throw ValidationError("corpus.path is required");
    require_file(cfg.corpus_path, "corpus.path");
    cfg.corpus_format = parse_format(
        take<std::string>(c, "corpus", "format", "jsonl"), "corpus.format");
    cfg.truth_path = take<std::string>(j, "", "truth_path", "");
    if (!cfg.truth_path.empty()) require_file(cfg.truth_path, "truth_path");
  } else {
    if (j.contains("truth_path"))
      throw ValidationError(
          "truth_path applies to an on-disk corpus; the generator supplies "
          "its own truth");
    cfg.synthetic = parse_synthetic(j.at("synthetic"), cfg.seed,
                                    &cfg.corpus_format);
  }

  if (j.contains("architectures")) {
    const json& arr = j.at("architectures");
    if (!arr.is_array())
      throw ValidationError("architectures must be an array");
    cfg.archs.clear();
    for (const json& a : arr) {
      if (!a.is_string())
        throw ValidationError("architectures entries must be strings");
      Arch arch;
      try {
        arch = arch_from_name(a.get<std::string>());
      } catch (const ArgumentError&) {
        throw ValidationError("architectures: unknown architecture '" +
                              a.get<std::string>() + "'");
      }
      for (Arch seen : cfg.archs)
        if (seen == arch)
          throw ValidationError("architectures: duplicate entry '" +
                                arch_name(arch) + "'");
      cfg.archs.push_back(arch);
    }
  }
  if (cfg.archs.empty())
    throw ValidationError("architectures must not be empty");

  if (j.contains("train")) cfg.train = parse_train(j.at("train"), cfg.train);
  if (j.contains("split")) cfg.split = parse_split(j.at("split"), cfg.split);
  if (j.contains("estimators"))
    cfg.estimators = parse_estimators(j.at("estimators"), cfg.estimators);

  cfg.train.seed = cfg.seed;  // all run seeds derive from the master seed
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

std::string config_echo(const RunConfig& cfg) {
  json j;
  const char* fmt = cfg.corpus_format == CorpusFormat::Csv ? "csv" : "jsonl";
  if (cfg.synthetic) {
    const SyntheticConfig& s = *cfg.synthetic;
    json ann = json::array();
    for (const AnnotatorProfile& p : s.annotators)
      ann.push_back({{"threshold", p.threshold},
                     {"trigger_bias", p.trigger_bias},
                     {"noise", p.noise}});
    j["synthetic"] = {{"n_instances", s.n_instances},
                      {"annotations_per_instance", s.annotations_per_instance},
                      {"vocab_ordinary", s.vocab_ordinary},
                      {"tokens_per_instance", s.tokens_per_instance},
                      {"token_jitter", s.token_jitter},
                      {"trigger_fraction", s.trigger_fraction},
                      {"seed", s.seed},
                      {"annotators", std::move(ann)},
                      {"format", fmt}};
  } else {
    j["corpus"] = {{"path", cfg.corpus_path}, {"format", fmt}};
    if (!cfg.truth_path.empty()) j["truth_path"] = cfg.truth_path;
  }
  // out_dir is deliberately not echoed: the echo describes the run itself,
  // and reruns into different directories must compare byte-identical
  j["seed"] = cfg.seed;
  j["min_annotations"] = cfg.min_annotations;
  json archs = json::array();
  for (Arch a : cfg.archs) archs.push_back(arch_name(a));
  j["architectures"] = std::move(archs);
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"dropout", cfg.train.dropout},
                {"early_stopping", cfg.train.early_stopping},
                {"patience", cfg.train.patience},
                {"embed_dim", cfg.train.embed_dim},
                {"hidden_dim", cfg.train.hidden_dim},
                {"repr_dim", cfg.train.repr_dim},
                {"vocab_min_count", cfg.train.vocab_min_count}};
  j["split"] = {{"mode", cfg.split.cv ? "cv" : "fixed"},
                {"k", cfg.split.k},
                {"iterations", cfg.split.iterations},
                {"test_fraction", cfg.split.test_fraction},
                {"val_fraction", cfg.split.val_fraction}};
  j["estimators"] = {{"variance", cfg.estimators.variance},
                     {"softmax", cfg.estimators.softmax},
                     {"mc_dropout", cfg.estimators.mc_dropout},
                     {"regressor", cfg.estimators.regressor},
                     {"mc_samples", cfg.estimators.mc_samples},
                     {"example_cap", cfg.estimators.example_cap}};
  return j.dump(2) + "\n";
}

}  // namespace manno
