#include <fstream>

#include "json.hpp"
#include "manno/common.hpp"
#include "manno/models.hpp"

// Versioned JSON checkpoints. nlohmann serializes doubles with the shortest
// representation that parses back to the same bits, so params survive round
// trips exactly.

namespace manno {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "annotator-model-checkpoint";
constexpr int kVersion = 1;

json enc_to_json(const EncoderConfig& e) {
  return {{"vocab_size", e.vocab_size},   {"embed_dim", e.embed_dim},
          {"hidden_dim", e.hidden_dim},   {"repr_dim", e.repr_dim},
          {"dropout", e.dropout},         {"passthrough", e.passthrough},
          {"input_dim", e.input_dim}};
}

EncoderConfig enc_from_json(const json& j) {
  EncoderConfig e;
  e.vocab_size = j.at("vocab_size").get<int>();
  e.embed_dim = j.at("embed_dim").get<int>();
  e.hidden_dim = j.at("hidden_dim").get<int>();
  e.repr_dim = j.at("repr_dim").get<int>();
  e.dropout = j.at("dropout").get<double>();
  e.passthrough = j.at("passthrough").get<bool>();
  e.input_dim = j.at("input_dim").get<int>();
  return e;
}

// exec is a runtime concern, not part of what the model is
json cfg_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"dropout", c.dropout},
          {"early_stopping", c.early_stopping},
          {"patience", c.patience},
          {"seed", c.seed},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"repr_dim", c.repr_dim},
          {"vocab_min_count", c.vocab_min_count}};
}

TrainConfig cfg_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.early_stopping = j.at("early_stopping").get<bool>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.repr_dim = j.at("repr_dim").get<int>();
  c.vocab_min_count = j.at("vocab_min_count").get<std::size_t>();
  return c;
}

json vocab_to_json(const Vocabulary& v) {
  // the two reserved slots are implicit
  json arr = json::array();
  for (std::size_t i = 2; i < v.tokens.size(); ++i) arr.push_back(v.tokens[i]);
  return arr;
}

Vocabulary vocab_from_json(const json& j) {
  Vocabulary v;
  v.tokens = {"<pad>", "<oov>"};
  for (const auto& t : j) {
    v.index[t.get<std::string>()] = static_cast<int>(v.tokens.size());
    v.tokens.push_back(t.get<std::string>());
  }
  return v;
}

json layout_to_json(const ParamLayout& layout) {
  json arr = json::array();
  for (const auto& b : layout.blocks)
    arr.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  return arr;
}

ParamLayout layout_from_json(const json& j) {
  ParamLayout layout;
  for (const auto& b : j)
    layout.add(b.at("name").get<std::string>(), b.at("rows").get<std::size_t>(),
               b.at("cols").get<std::size_t>());
  return layout;
}

json trace_to_json(const std::vector<TrainTracePoint>& trace) {
  json arr = json::array();
  for (const auto& tp : trace)
    arr.push_back({{"epoch", tp.epoch},
                   {"train_loss", tp.train_loss},
                   {"val_f1", tp.val_f1},
                   {"best", tp.is_best}});
  return arr;
}

std::vector<TrainTracePoint> trace_from_json(const json& j) {
  std::vector<TrainTracePoint> trace;
  for (const auto& t : j) {
    TrainTracePoint tp;
    tp.epoch = t.at("epoch").get<int>();
    tp.train_loss = t.at("train_loss").get<double>();
    tp.val_f1 = t.at("val_f1").get<double>();
    tp.is_best = t.at("best").get<bool>();
    trace.push_back(tp);
  }
  return trace;
}

std::string tie_name(TiePolicy t) {
  return t == TiePolicy::Positive ? "positive" : "negative";
}

TiePolicy tie_from_name(const std::string& s) {
  if (s == "positive") return TiePolicy::Positive;
  if (s == "negative") return TiePolicy::Negative;
  throw ParseError("unknown tie policy '" + s + "'");
}

void check_params(const std::vector<double>& params,
                  const ParamLayout& layout) {
  if (params.size() != layout.total)
    throw ParseError("checkpoint parameter count does not match its layout");
}

}  // namespace

void save_checkpoint(const AnyModel& m, const std::string& path) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["arch"] = arch_name(arch_of(m));

  std::visit(
      [&](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        j["tie_policy"] = tie_name(model.tie_policy);
        j["train_config"] = cfg_to_json(model.cfg);
        if constexpr (std::is_same_v<T, EnsembleModel>) {
          j["encoder"] = enc_to_json(model.enc);
          j["vocab"] = vocab_to_json(model.vocab);
          j["blocks"] = layout_to_json(model.member_layout);
          j["annotators"] = model.annotators;
          j["flagged"] = model.flagged;
          j["members"] = model.member_params;
          json traces = json::array();
          for (const auto& tr : model.traces) traces.push_back(trace_to_json(tr));
          j["traces"] = std::move(traces);
        } else {
          j["encoder"] = enc_to_json(model.core.enc);
          j["vocab"] = vocab_to_json(model.core.vocab);
          j["blocks"] = layout_to_json(model.core.layout);
          j["values"] = model.core.params;
          j["trace"] = trace_to_json(model.trace);
          if constexpr (!std::is_same_v<T, BaselineModel>) {
            j["annotators"] = model.annotators;
            j["flagged"] = model.flagged;
          }
        }
      },
      m);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

AnyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }

  try {
    if (j.at("format").get<std::string>() != kFormat)
      throw ParseError(path + ": not a model checkpoint");
    if (j.at("version").get<int>() != kVersion)
      throw ParseError(path + ": unsupported checkpoint version");

    const Arch arch = arch_from_name(j.at("arch").get<std::string>());
    const TiePolicy tie = tie_from_name(j.at("tie_policy").get<std::string>());
    const TrainConfig cfg = cfg_from_json(j.at("train_config"));
    const EncoderConfig enc = enc_from_json(j.at("encoder"));
    Vocabulary vocab = vocab_from_json(j.at("vocab"));
    ParamLayout layout = layout_from_json(j.at("blocks"));

    switch (arch) {
      case Arch::Baseline: {
        BaselineModel m;
        m.core = {enc, std::move(vocab), std::move(layout),
                  j.at("values").get<std::vector<double>>()};
        check_params(m.core.params, m.core.layout);
        m.tie_policy = tie;
        m.cfg = cfg;
        m.trace = trace_from_json(j.at("trace"));
        return m;
      }
      case Arch::MultiTask: {
        MultiTaskModel m;
        m.core = {enc, std::move(vocab), std::move(layout),
                  j.at("values").get<std::vector<double>>()};
        check_params(m.core.params, m.core.layout);
        m.annotators = j.at("annotators").get<std::vector<std::string>>();
        m.flagged = j.at("flagged").get<std::vector<std::uint8_t>>();
        m.tie_policy = tie;
        m.cfg = cfg;
        m.trace = trace_from_json(j.at("trace"));
        return m;
      }
      case Arch::MultiLabel: {
        MultiLabelModel m;
        m.core = {enc, std::move(vocab), std::move(layout),
                  j.at("values").get<std::vector<double>>()};
        check_params(m.core.params, m.core.layout);
        m.annotators = j.at("annotators").get<std::vector<std::string>>();
        m.flagged = j.at("flagged").get<std::vector<std::uint8_t>>();
        m.tie_policy = tie;
        m.cfg = cfg;
        m.trace = trace_from_json(j.at("trace"));
        return m;
      }
      case Arch::Ensemble: {
        EnsembleModel m;
        m.enc = enc;
        m.vocab = std::move(vocab);
        m.member_layout = std::move(layout);
        m.member_params =
            j.at("members").get<std::vector<std::vector<double>>>();
        for (const auto& p : m.member_params)
          check_params(p, m.member_layout);
        m.annotators = j.at("annotators").get<std::vector<std::string>>();
        m.flagged = j.at("flagged").get<std::vector<std::uint8_t>>();
        if (m.member_params.size() != m.annotators.size() ||
            m.flagged.size() != m.annotators.size())
          throw ParseError(path + ": member count mismatch");
        m.tie_policy = tie;
        m.cfg = cfg;
        for (const auto& tr : j.at("traces"))
          m.traces.push_back(trace_from_json(tr));
        return m;
      }
    }
    throw ParseError(path + ": bad arch");
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace manno
