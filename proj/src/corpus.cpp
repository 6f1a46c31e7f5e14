#include "manno/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "manno/common.hpp"

namespace manno {

using nlohmann::json;

std::size_t AnnotationMatrix::n_entries() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

std::vector<std::size_t> AnnotationMatrix::annotator_counts() const {
  std::vector<std::size_t> counts(annotators.size(), 0);
  for (const auto& r : rows)
    for (const auto& e : r) counts[static_cast<std::size_t>(e.annotator)]++;
  return counts;
}

AnnotationMatrix make_matrix(std::vector<Instance> instances,
                             std::vector<std::string> annotators,
                             std::vector<std::vector<Entry>> rows,
                             TiePolicy tie_policy) {
  if (instances.empty()) throw ValidationError("corpus has no instances");
  if (annotators.empty()) throw ValidationError("corpus has no annotators");
  if (rows.size() != instances.size())
    throw ValidationError("row count does not match instance count");

  std::unordered_set<std::string> seen_ids;
  seen_ids.reserve(instances.size());
  int embedding_dim = 0;
  for (const auto& inst : instances) {
    if (!seen_ids.insert(inst.id).second)
      throw ValidationError("duplicate instance id '" + inst.id + "'");
    if (inst.embedding) {
      const int dim = static_cast<int>(inst.embedding->size());
      if (dim == 0)
        throw ValidationError("instance '" + inst.id + "' has empty embedding");
      if (embedding_dim == 0) embedding_dim = dim;
      if (dim != embedding_dim)
        throw ValidationError("instance '" + inst.id +
                              "' embedding length " + std::to_string(dim) +
                              " != corpus dimension " +
                              std::to_string(embedding_dim));
    }
  }

  std::vector<std::size_t> counts(annotators.size(), 0);
  const int n_ann = static_cast<int>(annotators.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    if (row.empty())
      throw ValidationError("instance '" + instances[i].id +
                            "' has no annotations");
    std::sort(row.begin(), row.end(),
              [](const Entry& a, const Entry& b) {
                return a.annotator < b.annotator;
              });
    int prev = -1;
    for (const auto& e : row) {
      if (e.annotator < 0 || e.annotator >= n_ann)
        throw ValidationError("annotator index out of range for instance '" +
                              instances[i].id + "'");
      if (e.annotator == prev)
        throw ValidationError("duplicate annotation (" + instances[i].id +
                              ", " + annotators[e.annotator] + ")");
      if (e.label != 0 && e.label != 1)
        throw ValidationError("label must be 0 or 1 (instance '" +
                              instances[i].id + "')");
      prev = e.annotator;
      counts[static_cast<std::size_t>(e.annotator)]++;
    }
  }
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] == 0)
      throw ValidationError("annotator '" + annotators[j] +
                            "' has no annotations");

  AnnotationMatrix m;
  m.instances = std::move(instances);
  m.annotators = std::move(annotators);
  m.rows = std::move(rows);
  m.tie_policy = tie_policy;
  m.embedding_dim = embedding_dim;
  return m;
}

int majority_of(std::size_t ones, std::size_t total, TiePolicy tie_policy) {
  if (2 * ones > total) return 1;
  if (2 * ones < total) return 0;
  return tie_policy == TiePolicy::Positive ? 1 : 0;
}

double binary_label_variance(std::size_t ones, std::size_t total) {
  const double n = static_cast<double>(total);
  return static_cast<double>(ones * (total - ones)) / (n * n);
}

namespace {

std::size_t row_ones(const std::vector<Entry>& row) {
  std::size_t ones = 0;
  for (const auto& e : row) ones += static_cast<std::size_t>(e.label);
  return ones;
}

void check_instance_index(const AnnotationMatrix& m, std::size_t i) {
  if (i >= m.rows.size())
    throw ArgumentError("instance index " + std::to_string(i) +
                        " out of range");
  if (m.rows[i].empty())
    throw MissingDataError("instance '" + m.instances[i].id +
                           "' has no annotations");
}

}  // namespace

int majority_label(const AnnotationMatrix& m, std::size_t i) {
  check_instance_index(m, i);
  return majority_of(row_ones(m.rows[i]), m.rows[i].size(), m.tie_policy);
}

double disagreement(const AnnotationMatrix& m, std::size_t i) {
  check_instance_index(m, i);
  return binary_label_variance(row_ones(m.rows[i]), m.rows[i].size());
}

const std::vector<std::size_t>& DatasetSplit::test_indices(int fold) const {
  if (fold < 0 || fold >= k) throw ArgumentError("fold out of range");
  return folds[static_cast<std::size_t>(fold)];
}

std::vector<std::size_t> DatasetSplit::train_indices(int fold,
                                                     bool hold_out_val) const {
  if (fold < 0 || fold >= k) throw ArgumentError("fold out of range");
  if (hold_out_val && k < 3)
    throw ArgumentError("validation hold-out needs k >= 3");
  const int vf = val_fold(fold);
  std::vector<std::size_t> out;
  out.reserve(fold_of.size());
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) continue;
    if (hold_out_val && fold_of[i] == vf) continue;
    out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> DatasetSplit::val_indices(int fold) const {
  return folds[static_cast<std::size_t>(val_fold(fold))];
}

DatasetSplit stratified_kfold(const AnnotationMatrix& m, int k,
                              std::uint64_t seed) {
  const std::size_t n = m.n_instances();
  if (k < 2 || static_cast<std::size_t>(k) > n)
    throw ArgumentError("k must be in [2, " + std::to_string(n) + "], got " +
                        std::to_string(k));

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i)
    (majority_label(m, i) == 1 ? pos : neg).push_back(i);

  std::mt19937_64 rng(derive_seed(seed, "kfold"));
  deterministic_shuffle(pos, rng);
  deterministic_shuffle(neg, rng);

  DatasetSplit split;
  split.k = k;
  split.fold_of.assign(n, 0);
  // Round-robin deal with a counter shared between the classes: positive
  // counts per fold stay within 1 of |pos|/k, and because the negatives pick
  // up where the positives stopped, total fold sizes stay within 1 of n/k.
  std::size_t c = 0;
  for (std::size_t i : pos) split.fold_of[i] = static_cast<int>(c++ % k);
  for (std::size_t i : neg) split.fold_of[i] = static_cast<int>(c++ % k);

  split.folds.assign(static_cast<std::size_t>(k), {});
  for (std::size_t i = 0; i < n; ++i)
    split.folds[static_cast<std::size_t>(split.fold_of[i])].push_back(i);

  split.coverage.assign(static_cast<std::size_t>(k),
                        std::vector<std::size_t>(m.n_annotators(), 0));
  for (std::size_t i = 0; i < n; ++i) {
    auto& cov = split.coverage[static_cast<std::size_t>(split.fold_of[i])];
    for (const auto& e : m.rows[i])
      cov[static_cast<std::size_t>(e.annotator)]++;
  }
  return split;
}

FixedSplit fixed_split(const AnnotationMatrix& m, double test_fraction,
                       double val_fraction, std::uint64_t seed) {
  if (test_fraction <= 0 || test_fraction >= 1)
    throw ArgumentError("test_fraction must be in (0, 1)");
  if (val_fraction < 0 || test_fraction + val_fraction >= 1)
    throw ArgumentError("test_fraction + val_fraction must be < 1");

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < m.n_instances(); ++i)
    (majority_label(m, i) == 1 ? pos : neg).push_back(i);

  std::mt19937_64 rng(derive_seed(seed, "fixed-split"));
  deterministic_shuffle(pos, rng);
  deterministic_shuffle(neg, rng);

  FixedSplit out;
  auto deal = [&](const std::vector<std::size_t>& cls) {
    const double nc = static_cast<double>(cls.size());
    const std::size_t n_test = static_cast<std::size_t>(
        std::lround(nc * test_fraction));
    const std::size_t n_val = static_cast<std::size_t>(
        std::lround(nc * val_fraction));
    for (std::size_t i = 0; i < cls.size(); ++i) {
      if (i < n_test)
        out.test.push_back(cls[i]);
      else if (i < n_test + n_val)
        out.val.push_back(cls[i]);
      else
        out.train.push_back(cls[i]);
    }
  };
  deal(pos);
  deal(neg);
  if (out.train.empty()) throw ArgumentError("fixed split leaves no train set");
  if (out.test.empty()) throw ArgumentError("fixed split leaves no test set");
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

FilterResult filter_annotators(const AnnotationMatrix& m,
                               std::size_t min_annotations) {
  const auto counts = m.annotator_counts();
  std::vector<int> remap(m.n_annotators(), -1);
  std::vector<std::string> kept;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] > min_annotations) {
      remap[j] = static_cast<int>(kept.size());
      kept.push_back(m.annotators[j]);
    }
  }
  if (kept.empty())
    throw EmptyResultError("no annotator has more than " +
                           std::to_string(min_annotations) + " annotations");

  FilterResult res;
  res.dropped_annotators = m.n_annotators() - kept.size();

  std::vector<Instance> instances;
  std::vector<std::vector<Entry>> rows;
  for (std::size_t i = 0; i < m.n_instances(); ++i) {
    std::vector<Entry> row;
    for (const auto& e : m.rows[i]) {
      const int nj = remap[static_cast<std::size_t>(e.annotator)];
      if (nj >= 0)
        row.push_back({nj, e.label});
      else
        res.dropped_entries++;
    }
    if (row.empty()) {
      res.dropped_instances++;
      continue;
    }
    instances.push_back(m.instances[i]);
    rows.push_back(std::move(row));
  }
  res.matrix = make_matrix(std::move(instances), std::move(kept),
                           std::move(rows), m.tie_policy);
  return res;
}

// ---------------------------------------------------------------------------
// Loading / saving

namespace {

struct RecordSink {
  std::vector<Instance> instances;
  std::vector<std::string> annotators;
  std::vector<std::vector<std::pair<Entry, std::size_t>>> rows;  // + line no
  std::unordered_map<std::string, std::size_t> instance_index;
  std::unordered_map<std::string, std::size_t> annotator_index;
  int embedding_dim = 0;

  void add(std::size_t line, const std::string& instance_id,
           const std::string& text, std::optional<std::vector<double>> emb,
           const std::string& annotator_id, int label) {
    if (label != 0 && label != 1)
      throw ParseError("line " + std::to_string(line) +
                       ": label must be 0 or 1");
    if (instance_id.empty())
      throw ParseError("line " + std::to_string(line) + ": empty instance_id");
    if (annotator_id.empty())
      throw ParseError("line " + std::to_string(line) +
                       ": empty annotator_id");
    if (text.empty() && !emb)
      throw ParseError("line " + std::to_string(line) +
                       ": record needs text or embedding");
    if (emb) {
      const int dim = static_cast<int>(emb->size());
      if (dim == 0)
        throw ParseError("line " + std::to_string(line) + ": empty embedding");
      if (embedding_dim == 0) embedding_dim = dim;
      if (dim != embedding_dim)
        throw ParseError("line " + std::to_string(line) +
                         ": embedding length " + std::to_string(dim) +
                         " != earlier length " +
                         std::to_string(embedding_dim));
    }

    std::size_t i;
    auto it = instance_index.find(instance_id);
    if (it == instance_index.end()) {
      i = instances.size();
      instance_index.emplace(instance_id, i);
      instances.push_back({instance_id, text, std::move(emb)});
      rows.emplace_back();
    } else {
      i = it->second;
      if (instances[i].text != text)
        throw ConflictError("line " + std::to_string(line) +
                            ": text differs from an earlier record for '" +
                            instance_id + "'");
      if (instances[i].embedding != emb)
        throw ConflictError("line " + std::to_string(line) +
                            ": embedding differs from an earlier record "
                            "for '" + instance_id + "'");
    }

    std::size_t j;
    auto jt = annotator_index.find(annotator_id);
    if (jt == annotator_index.end()) {
      j = annotators.size();
      annotator_index.emplace(annotator_id, j);
      annotators.push_back(annotator_id);
    } else {
      j = jt->second;
    }

    for (const auto& prev : rows[i]) {
      if (prev.first.annotator == static_cast<int>(j))
        throw ConflictError("line " + std::to_string(line) + ": duplicate (" +
                            instance_id + ", " + annotator_id +
                            "), first seen at line " +
                            std::to_string(prev.second));
    }
    rows[i].push_back({{static_cast<int>(j), label}, line});
  }

  AnnotationMatrix build() {
    if (instances.empty()) throw ParseError("no records found");
    std::vector<std::vector<Entry>> bare(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (const auto& rec : rows[i]) bare[i].push_back(rec.first);
    return make_matrix(std::move(instances), std::move(annotators),
                       std::move(bare));
  }
};

void load_jsonl(std::istream& in, RecordSink& sink) {
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
    if (!rec.is_object())
      throw ParseError("line " + std::to_string(line_no) +
                       ": record is not an object");
    auto need_string = [&](const char* key) -> std::string {
      if (!rec.contains(key) || !rec[key].is_string())
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing string field '" + key + "'");
      return rec[key].get<std::string>();
    };
    if (!rec.contains("label") || !rec["label"].is_number_integer())
      throw ParseError("line " + std::to_string(line_no) +
                       ": missing integer field 'label'");
    std::string text;
    if (rec.contains("text")) {
      if (!rec["text"].is_string())
        throw ParseError("line " + std::to_string(line_no) +
                         ": 'text' must be a string");
      text = rec["text"].get<std::string>();
    }
    std::optional<std::vector<double>> emb;
    if (rec.contains("embedding")) {
      if (!rec["embedding"].is_array())
        throw ParseError("line " + std::to_string(line_no) +
                         ": 'embedding' must be an array");
      std::vector<double> v;
      for (const auto& x : rec["embedding"]) {
        if (!x.is_number())
          throw ParseError("line " + std::to_string(line_no) +
                           ": embedding entries must be numbers");
        v.push_back(x.get<double>());
      }
      emb = std::move(v);
    }
    sink.add(line_no, need_string("instance_id"), text, std::move(emb),
             need_string("annotator_id"), rec["label"].get<int>());
  }
}

std::vector<std::string> split_csv_line(const std::string& line,
                                        std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  std::size_t i = 0;
  const std::size_t n = line.size();
  bool field_open = true;
  while (i < n) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && line[i + 1] == '"') {
          cur += '"';
          i += 2;
        } else {
          quoted = false;
          ++i;
        }
      } else {
        cur += c;
        ++i;
      }
    } else if (c == '"' && cur.empty() && field_open) {
      quoted = true;
      field_open = false;
      ++i;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
      field_open = true;
      ++i;
    } else {
      cur += c;
      ++i;
    }
  }
  if (quoted)
    throw ParseError("line " + std::to_string(line_no) +
                     ": unterminated quoted field");
  fields.push_back(cur);
  return fields;
}

std::vector<double> parse_embedding_field(const std::string& s,
                                          std::size_t line_no) {
  std::vector<double> v;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) {
    try {
      std::size_t used = 0;
      const double x = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      v.push_back(x);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": bad embedding value '" + tok + "'");
    }
  }
  return v;
}

void load_csv(std::istream& in, RecordSink& sink) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line, 1);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* key : {"instance_id", "annotator_id", "label"})
    if (!col.count(key))
      throw ParseError("line 1: missing column '" + std::string(key) + "'");
  if (!col.count("text") && !col.count("embedding"))
    throw ParseError("line 1: need a 'text' or 'embedding' column");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    auto get = [&](const char* key) -> const std::string& {
      return fields[col.at(key)];
    };
    const std::string& label_s = get("label");
    if (label_s != "0" && label_s != "1")
      throw ParseError("line " + std::to_string(line_no) +
                       ": label must be 0 or 1, got '" + label_s + "'");
    std::string text = col.count("text") ? get("text") : std::string();
    std::optional<std::vector<double>> emb;
    if (col.count("embedding") && !get("embedding").empty())
      emb = parse_embedding_field(get("embedding"), line_no);
    sink.add(line_no, get("instance_id"), text, std::move(emb),
             get("annotator_id"), label_s == "1" ? 1 : 0);
  }
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace

AnnotationMatrix load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw MissingDataError("cannot open '" + path + "'");
  RecordSink sink;
  if (format == CorpusFormat::Jsonl)
    load_jsonl(in, sink);
  else
    load_csv(in, sink);
  try {
    return sink.build();
  } catch (const ValidationError& e) {
    throw ParseError(std::string(e.what()) + " (in '" + path + "')");
  }
}

void save_corpus(const AnnotationMatrix& m, const std::string& path,
                 CorpusFormat format) {
  std::ofstream out(path);
  if (!out) throw MissingDataError("cannot open '" + path + "' for writing");
  if (format == CorpusFormat::Jsonl) {
    for (std::size_t i = 0; i < m.n_instances(); ++i) {
      for (const auto& e : m.rows[i]) {
        json rec;
        rec["instance_id"] = m.instances[i].id;
        rec["text"] = m.instances[i].text;
        if (m.instances[i].embedding)
          rec["embedding"] = *m.instances[i].embedding;
        rec["annotator_id"] = m.annotators[static_cast<std::size_t>(
            e.annotator)];
        rec["label"] = e.label;
        out << rec.dump() << '\n';
      }
    }
  } else {
    const bool with_emb = m.embedding_dim > 0;
    out << "instance_id,text,annotator_id,label";
    if (with_emb) out << ",embedding";
    out << '\n';
    for (std::size_t i = 0; i < m.n_instances(); ++i) {
      for (const auto& e : m.rows[i]) {
        out << csv_escape(m.instances[i].id) << ','
            << csv_escape(m.instances[i].text) << ','
            << csv_escape(m.annotators[static_cast<std::size_t>(e.annotator)])
            << ',' << e.label;
        if (with_emb) {
          out << ',';
          if (m.instances[i].embedding) {
            std::string s;
            for (std::size_t t = 0; t < m.instances[i].embedding->size(); ++t) {
              if (t) s += ' ';
              // shortest round-trip representation, same as the JSON writer
              s += json((*m.instances[i].embedding)[t]).dump();
            }
            out << csv_escape(s);
          }
        }
        out << '\n';
      }
    }
  }
  if (!out) throw MissingDataError("write to '" + path + "' failed");
}

namespace {

std::pair<double, double> mean_sd(const std::vector<std::size_t>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0;
  for (auto x : xs) mean += static_cast<double>(x);
  mean /= static_cast<double>(xs.size());
  double var = 0;
  for (auto x : xs) {
    const double d = static_cast<double>(x) - mean;
    var += d * d;
  }
  var /= static_cast<double>(xs.size());  // population variance
  return {mean, std::sqrt(var)};
}

}  // namespace

MatrixStats matrix_stats(const AnnotationMatrix& m) {
  MatrixStats s;
  s.n_instances = m.n_instances();
  s.n_annotators = m.n_annotators();
  std::vector<std::size_t> per_row;
  std::size_t ones = 0, maj_pos = 0;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    per_row.push_back(m.rows[i].size());
    ones += row_ones(m.rows[i]);
    maj_pos += static_cast<std::size_t>(majority_label(m, i));
  }
  const auto cols = m.annotator_counts();
  s.n_entries = m.n_entries();
  std::tie(s.annotations_per_instance_mean, s.annotations_per_instance_sd) =
      mean_sd(per_row);
  std::tie(s.annotations_per_annotator_mean, s.annotations_per_annotator_sd) =
      mean_sd(cols);
  s.positive_rate =
      s.n_entries ? static_cast<double>(ones) / static_cast<double>(s.n_entries)
                  : 0.0;
  s.majority_positive_rate =
      static_cast<double>(maj_pos) / static_cast<double>(s.n_instances);
  return s;
}

std::string format_stats(const MatrixStats& s) {
  std::ostringstream os;
  os << "instances:                 " << s.n_instances << '\n'
     << "annotators:                " << s.n_annotators << '\n'
     << "annotations:               " << s.n_entries << '\n'
     << "annotations per instance:  " << s.annotations_per_instance_mean
     << " +/- " << s.annotations_per_instance_sd << '\n'
     << "annotations per annotator: " << s.annotations_per_annotator_mean
     << " +/- " << s.annotations_per_annotator_sd << '\n'
     << "positive annotation rate:  " << s.positive_rate << '\n'
     << "positive majority rate:    " << s.majority_positive_rate << '\n';
  return os.str();
}

}  // namespace manno
