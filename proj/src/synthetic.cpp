#include "manno/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "manno/common.hpp"

namespace manno {

using nlohmann::json;

void validate(const SyntheticConfig& cfg) {
  if (cfg.n_instances == 0) throw ValidationError("n_instances must be >= 1");
  if (cfg.annotators.empty()) throw ValidationError("annotators is empty");
  for (std::size_t j = 0; j < cfg.annotators.size(); ++j) {
    const auto& a = cfg.annotators[j];
    const std::string at = "annotators[" + std::to_string(j) + "]";
    if (a.noise < 0.0 || a.noise > 1.0)
      throw ValidationError(at + ".noise must be in [0, 1]");
    if (!std::isfinite(a.threshold) || !std::isfinite(a.trigger_bias))
      throw ValidationError(at + " has a non-finite threshold or bias");
  }
  if (cfg.annotations_per_instance < 1 ||
      static_cast<std::size_t>(cfg.annotations_per_instance) >
          cfg.annotators.size())
    throw ValidationError(
        "annotations_per_instance must be in [1, " +
        std::to_string(cfg.annotators.size()) + "]");
  if (cfg.vocab_ordinary < 2)
    throw ValidationError("vocab_ordinary must be >= 2");
  if (cfg.tokens_per_instance < 1)
    throw ValidationError("tokens_per_instance must be >= 1");
  if (cfg.token_jitter < 0.0)
    throw ValidationError("token_jitter must be >= 0");
  if (cfg.trigger_fraction < 0.0 || cfg.trigger_fraction > 1.0)
    throw ValidationError("trigger_fraction must be in [0, 1]");
}

SyntheticResult generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, "synth"));

  const std::size_t n_ann = cfg.annotators.size();
  const std::size_t m = static_cast<std::size_t>(cfg.annotations_per_instance);
  const int V = cfg.vocab_ordinary;

  int id_width = 1;
  for (std::size_t p = cfg.n_instances; p >= 10; p /= 10) ++id_width;

  std::vector<Instance> instances(cfg.n_instances);
  std::vector<std::vector<Entry>> rows(cfg.n_instances);
  SyntheticTruth truth;

  std::vector<std::size_t> pool(n_ann);
  std::iota(pool.begin(), pool.end(), 0);

  for (std::size_t i = 0; i < cfg.n_instances; ++i) {
    const double target = rand_unit(rng);
    std::string text;
    double weight_sum = 0.0;
    for (int t = 0; t < cfg.tokens_per_instance; ++t) {
      const double jittered =
          target + rand_normal(rng) * cfg.token_jitter;
      long idx = std::lround(jittered * (V - 1));
      idx = std::clamp(idx, 0L, static_cast<long>(V - 1));
      weight_sum += static_cast<double>(idx) / (V - 1);
      if (t) text += ' ';
      text += 'w';
      text += std::to_string(idx);
    }
    const double s = weight_sum / cfg.tokens_per_instance;
    const bool trig = rand_unit(rng) < cfg.trigger_fraction;
    if (trig) text += " xtrig";

    // sample m distinct annotators (partial Fisher-Yates), label in
    // ascending annotator order
    for (std::size_t t = 0; t < m; ++t) {
      const std::size_t j =
          t + static_cast<std::size_t>(rand_below(rng, n_ann - t));
      std::swap(pool[t], pool[j]);
    }
    std::sort(pool.begin(), pool.begin() + static_cast<long>(m));

    double s1 = 0.0, bern_var = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      const std::size_t j = pool[t];
      const auto& prof = cfg.annotators[j];
      const double effective = s + (trig ? prof.trigger_bias : 0.0);
      const int base = effective > prof.threshold ? 1 : 0;
      const int label = rand_unit(rng) < prof.noise ? 1 - base : base;
      rows[i].push_back({static_cast<int>(j), label});
      const double p = base ? 1.0 - prof.noise : prof.noise;
      s1 += p;
      bern_var += p * (1.0 - p);
    }
    const double md = static_cast<double>(m);
    const double expected = (md * s1 - s1 * s1 - bern_var) / (md * md);

    std::string id = std::to_string(i);
    id.insert(0, static_cast<std::size_t>(id_width) - id.size(), '0');
    id.insert(0, "s");
    instances[i] = {id, text, std::nullopt};
    truth.instance_ids.push_back(id);
    truth.latent.push_back(s);
    truth.is_trigger.push_back(trig ? 1 : 0);
    truth.expected_disagreement.push_back(expected);
  }

  // drop annotators that were never sampled (tiny corpora only)
  std::vector<std::size_t> counts(n_ann, 0);
  for (const auto& row : rows)
    for (const auto& e : row) counts[static_cast<std::size_t>(e.annotator)]++;

  SyntheticResult res;
  std::vector<std::string> names;
  std::vector<int> remap(n_ann, -1);
  for (std::size_t j = 0; j < n_ann; ++j) {
    if (counts[j] == 0) {
      res.dropped_annotators++;
      continue;
    }
    remap[j] = static_cast<int>(names.size());
    names.push_back("a" + std::to_string(j));
  }
  if (res.dropped_annotators > 0) {
    for (auto& row : rows)
      for (auto& e : row)
        e.annotator = remap[static_cast<std::size_t>(e.annotator)];
  }

  res.matrix = make_matrix(std::move(instances), std::move(names),
                           std::move(rows));
  res.truth = std::move(truth);
  return res;
}

void save_truth(const SyntheticTruth& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingDataError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < t.instance_ids.size(); ++i) {
    json rec;
    rec["instance_id"] = t.instance_ids[i];
    rec["latent_score"] = t.latent[i];
    rec["is_trigger"] = static_cast<int>(t.is_trigger[i]);
    rec["expected_disagreement"] = t.expected_disagreement[i];
    out << rec.dump() << '\n';
  }
  if (!out) throw MissingDataError("write to '" + path + "' failed");
}

SyntheticTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingDataError("cannot open '" + path + "'");
  SyntheticTruth t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " +
                       std::string(e.what()));
    }
    for (const char* key :
         {"instance_id", "latent_score", "is_trigger",
          "expected_disagreement"})
      if (!rec.contains(key))
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing field '" + std::string(key) + "'");
    t.instance_ids.push_back(rec["instance_id"].get<std::string>());
    t.latent.push_back(rec["latent_score"].get<double>());
    t.is_trigger.push_back(
        static_cast<std::uint8_t>(rec["is_trigger"].get<int>()));
    t.expected_disagreement.push_back(
        rec["expected_disagreement"].get<double>());
  }
  if (t.instance_ids.empty()) throw ParseError("no records in '" + path + "'");
  return t;
}

SyntheticConfig benchmark_config(std::uint64_t seed, std::size_t n_instances) {
  SyntheticConfig cfg;
  cfg.n_instances = n_instances;
  cfg.annotations_per_instance = 6;
  cfg.vocab_ordinary = 64;
  cfg.tokens_per_instance = 12;
  cfg.token_jitter = 0.12;
  cfg.trigger_fraction = 0.35;
  cfg.seed = seed;
  for (int g = 0; g < 2; ++g) {
    for (int j = 0; j < 9; ++j) {
      AnnotatorProfile p;
      p.threshold = 0.45 + 0.025 * j;
      p.trigger_bias = g == 0 ? 0.6 : -0.6;
      p.noise = 0.1;
      cfg.annotators.push_back(p);
    }
  }
  return cfg;
}

}  // namespace manno
