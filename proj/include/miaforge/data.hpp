#pragma once

// Synthetic multi-client scenario generation and dataset serialization.
//
// A scenario models C clients that each hold a private training set drawn
// from a shared K-class gaussian mixture. For every client there is a
// "relevant" pool (a mix of true training members and fresh look-alikes), an
// "external" pool (fresh records only, guaranteed non-members) and one shared
// challenge pool whose records may be training members of any client.
// Membership ground truth is tracked separately from the feature files so
// that pool CSVs never leak labels through their schema.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "rng.hpp"

namespace miaforge {

using Matrix = std::vector<std::vector<double>>;

struct Record {
  std::string id;
  std::vector<double> features;
  int task_label = 0;
};

struct Dataset {
  std::vector<Record> records;
  int classes = 0;

  std::size_t size() const { return records.size(); }
  int feature_dim() const {
    return records.empty() ? 0 : static_cast<int>(records[0].features.size());
  }
};

struct LabeledMembership {
  std::string record_id;
  std::optional<int> member_of;  // owning client index, nullopt for non-members
};

struct ScenarioConfig {
  int clients = 4;
  int classes = 4;
  int feature_dim = 64;
  std::vector<int> train_sizes = {40, 40, 40, 40};
  std::vector<int> relevant_sizes = {73, 95, 59, 23};
  std::vector<int> external_sizes = {64, 83, 52, 20};
  std::vector<double> relevant_member_fractions = {0.25, 0.20, 0.25, 13.0 / 23.0};
  int challenge_size = 73;
  std::vector<int> challenge_members = {19, 19, 18, 0};
  int colluding_client = -1;  // -1 selects the last client
  double class_separation = 3.0;
  std::uint64_t seed = 1;

  int resolved_colluding() const {
    return colluding_client < 0 ? clients - 1 : colluding_client;
  }
  void validate() const;
};

// Number of true members the relevant pool of client c must contain.
inline int relevant_member_count(const ScenarioConfig& cfg, int c) {
  return static_cast<int>(std::lround(cfg.relevant_member_fractions[c] *
                                      cfg.relevant_sizes[c]));
}

inline void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("scenario: " + msg); };
  if (clients < 2) fail("clients must be at least 2");
  if (classes < 2) fail("classes must be at least 2");
  if (feature_dim < classes)
    fail("feature_dim must be at least classes to place class centers");
  if (class_separation <= 0.0) fail("class_separation must be positive");
  if (challenge_size < 1) fail("challenge_size must be at least 1");
  const std::size_t c = static_cast<std::size_t>(clients);
  if (train_sizes.size() != c) fail("train_sizes must have one entry per client");
  if (relevant_sizes.size() != c) fail("relevant_sizes must have one entry per client");
  if (external_sizes.size() != c) fail("external_sizes must have one entry per client");
  if (challenge_members.size() != c) fail("challenge_members must have one entry per client");
  if (relevant_member_fractions.size() != c)
    fail("relevant_member_fractions must have one entry per client");
  if (colluding_client >= clients) fail("colluding_client out of range");
  int chal_total = 0;
  for (int i = 0; i < clients; ++i) {
    const std::string who = "client " + std::to_string(i + 1);
    if (train_sizes[i] < 1) fail(who + ": train_sizes must be at least 1");
    if (relevant_sizes[i] < 1) fail(who + ": relevant_sizes must be at least 1");
    if (external_sizes[i] < 1) fail(who + ": external_sizes must be at least 1");
    if (challenge_members[i] < 0) fail(who + ": challenge_members must be non-negative");
    const double f = relevant_member_fractions[i];
    if (f < 0.0 || f > 1.0) fail(who + ": relevant_member_fractions must be in [0, 1]");
    const int m = relevant_member_count(*this, i);
    if (m + challenge_members[i] > train_sizes[i])
      fail(who + ": " + std::to_string(m) + " relevant members plus " +
           std::to_string(challenge_members[i]) +
           " challenge members exceed the train size " + std::to_string(train_sizes[i]));
    chal_total += challenge_members[i];
  }
  if (chal_total > challenge_size)
    fail("challenge_members sum " + std::to_string(chal_total) +
         " exceeds challenge_size " + std::to_string(challenge_size));
}

struct ScenarioBundle {
  ScenarioConfig config;
  int colluding_client = 0;
  std::vector<Dataset> train_sets;
  std::vector<Dataset> relevant_pools;
  std::vector<Dataset> external_pools;
  Dataset challenge;
  std::vector<LabeledMembership> ground_truth;  // relevant pools then challenge

  std::optional<int> member_of(const std::string& record_id) const {
    const auto it = truth_index_.find(record_id);
    if (it == truth_index_.end())
      throw std::runtime_error("no membership ground truth for record '" + record_id + "'");
    const int v = it->second;
    return v < 0 ? std::optional<int>{} : std::optional<int>{v};
  }
  bool has_truth(const std::string& record_id) const {
    return truth_index_.count(record_id) != 0;
  }
  void rebuild_truth_index() {
    truth_index_.clear();
    for (const auto& m : ground_truth)
      truth_index_[m.record_id] = m.member_of ? *m.member_of : -1;
  }

 private:
  std::unordered_map<std::string, int> truth_index_;
};

namespace detail {

// K orthonormal directions scaled so that any two class centers are exactly
// class_separation apart.
inline Matrix class_means(int classes, int dim, double separation, Rng& rng) {
  Matrix basis(classes, std::vector<double>(dim));
  for (auto& v : basis)
    for (auto& x : v) x = rng.gaussian();
  for (int k = 0; k < classes; ++k) {
    for (int j = 0; j < k; ++j) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += basis[k][i] * basis[j][i];
      for (int i = 0; i < dim; ++i) basis[k][i] -= dot * basis[j][i];
    }
    double norm = 0.0;
    for (double x : basis[k]) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw std::runtime_error("degenerate class direction draw");
    for (auto& x : basis[k]) x /= norm;
  }
  const double scale = separation / std::sqrt(2.0);
  for (auto& v : basis)
    for (auto& x : v) x *= scale;
  return basis;
}

inline Record draw_record(const Matrix& means, int label, Rng& rng) {
  Record r;
  r.task_label = label;
  r.features.resize(means[label].size());
  for (std::size_t i = 0; i < r.features.size(); ++i)
    r.features[i] = means[label][i] + rng.gaussian();
  return r;
}

}  // namespace detail

// Balanced labeled population on the same gaussian-blob geometry the
// membership scenario uses; input for the federated-utility simulation.
inline Dataset generate_population(int classes, int feature_dim, int count,
                                   double class_separation, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("population: need at least 2 classes");
  if (feature_dim < classes)
    throw std::invalid_argument("population: feature_dim must be >= classes");
  if (count < 1) throw std::invalid_argument("population: need at least 1 record");
  if (!(class_separation > 0.0))
    throw std::invalid_argument("population: class_separation must be positive");

  Rng rng(seed);
  const Matrix means = detail::class_means(classes, feature_dim, class_separation, rng);
  std::vector<int> labels(count);
  for (int i = 0; i < count; ++i) labels[i] = i % classes;
  rng.shuffle(labels);

  Dataset ds;
  ds.classes = classes;
  ds.records.reserve(count);
  for (int i = 0; i < count; ++i) {
    Record r = detail::draw_record(means, labels[i], rng);
    r.id = "pop_" + std::to_string(i + 1);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

inline ScenarioBundle generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioBundle bundle;
  bundle.config = cfg;
  bundle.colluding_client = cfg.resolved_colluding();

  Rng rng(cfg.seed);
  const Matrix means = detail::class_means(cfg.classes, cfg.feature_dim,
                                           cfg.class_separation, rng);

  bundle.train_sets.resize(cfg.clients);
  for (int c = 0; c < cfg.clients; ++c) {
    const int n = cfg.train_sizes[c];
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % cfg.classes;
    rng.shuffle(labels);
    Dataset& ds = bundle.train_sets[c];
    ds.classes = cfg.classes;
    ds.records.reserve(n);
    for (int i = 0; i < n; ++i) {
      Record r = detail::draw_record(means, labels[i], rng);
      r.id = "c" + std::to_string(c + 1) + "_" + std::to_string(i);
      ds.records.push_back(std::move(r));
    }
  }

  // Disjoint slices of a per-client permutation select which training records
  // become relevant-pool members and which become challenge members.
  struct Loaned {
    Record record;
    int owner;
  };
  std::vector<Loaned> challenge_loans;
  bundle.relevant_pools.resize(cfg.clients);
  for (int c = 0; c < cfg.clients; ++c) {
    const auto perm = rng.permutation(bundle.train_sets[c].size());
    const int m = relevant_member_count(cfg, c);
    const int q = cfg.challenge_members[c];

    struct Pending {
      Record record;
      bool member;
    };
    std::vector<Pending> pool;
    pool.reserve(cfg.relevant_sizes[c]);
    for (int i = 0; i < m; ++i)
      pool.push_back({bundle.train_sets[c].records[perm[i]], true});
    for (int i = m; i < cfg.relevant_sizes[c]; ++i) {
      const int label = static_cast<int>(rng.uniform_index(cfg.classes));
      pool.push_back({detail::draw_record(means, label, rng), false});
    }
    rng.shuffle(pool);

    Dataset& rel = bundle.relevant_pools[c];
    rel.classes = cfg.classes;
    rel.records.reserve(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) {
      Record r = std::move(pool[j].record);
      r.id = "rel" + std::to_string(c + 1) + "_" + std::to_string(j);
      bundle.ground_truth.push_back(
          {r.id, pool[j].member ? std::optional<int>{c} : std::optional<int>{}});
      rel.records.push_back(std::move(r));
    }

    for (int i = m; i < m + q; ++i)
      challenge_loans.push_back({bundle.train_sets[c].records[perm[i]], c});
  }

  bundle.external_pools.resize(cfg.clients);
  for (int c = 0; c < cfg.clients; ++c) {
    Dataset& ext = bundle.external_pools[c];
    ext.classes = cfg.classes;
    ext.records.reserve(cfg.external_sizes[c]);
    for (int j = 0; j < cfg.external_sizes[c]; ++j) {
      const int label = static_cast<int>(rng.uniform_index(cfg.classes));
      Record r = detail::draw_record(means, label, rng);
      r.id = "ext" + std::to_string(c + 1) + "_" + std::to_string(j);
      ext.records.push_back(std::move(r));
    }
  }

  struct PendingChal {
    Record record;
    int owner;  // -1 for fresh non-members
  };
  std::vector<PendingChal> chal;
  chal.reserve(cfg.challenge_size);
  for (auto& loan : challenge_loans) chal.push_back({std::move(loan.record), loan.owner});
  const int fresh = cfg.challenge_size - static_cast<int>(challenge_loans.size());
  for (int j = 0; j < fresh; ++j) {
    const int label = static_cast<int>(rng.uniform_index(cfg.classes));
    chal.push_back({detail::draw_record(means, label, rng), -1});
  }
  rng.shuffle(chal);
  bundle.challenge.classes = cfg.classes;
  bundle.challenge.records.reserve(chal.size());
  for (std::size_t j = 0; j < chal.size(); ++j) {
    Record r = std::move(chal[j].record);
    r.id = "chal_" + std::to_string(j);
    bundle.ground_truth.push_back(
        {r.id, chal[j].owner < 0 ? std::optional<int>{} : std::optional<int>{chal[j].owner}});
    bundle.challenge.records.push_back(std::move(r));
  }

  bundle.rebuild_truth_index();
  return bundle;
}

// ---------------------------------------------------------------------------
// Dataset serialization
// ---------------------------------------------------------------------------

enum class FileFormat { Csv, Json };

inline FileFormat format_from_path(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return FileFormat::Json;
  return FileFormat::Csv;
}

inline std::string dataset_to_csv(const Dataset& ds,
                                  const std::vector<LabeledMembership>* memberships = nullptr) {
  std::unordered_map<std::string, std::optional<int>> memb;
  if (memberships)
    for (const auto& m : *memberships) memb[m.record_id] = m.member_of;
  std::ostringstream out;
  out << "record_id";
  for (int i = 0; i < ds.feature_dim(); ++i) out << ",f" << i;
  out << ",task_label";
  if (memberships) out << ",member_of";
  out << "\n";
  for (const auto& r : ds.records) {
    out << r.id;
    for (double f : r.features) out << ',' << fmt_double(f);
    out << ',' << r.task_label;
    if (memberships) {
      out << ',';
      const auto it = memb.find(r.id);
      if (it != memb.end() && it->second) out << *it->second;
    }
    out << "\n";
  }
  return out.str();
}

inline nlohmann::json dataset_to_json(const Dataset& ds,
                                      const std::vector<LabeledMembership>* memberships = nullptr) {
  std::unordered_map<std::string, std::optional<int>> memb;
  if (memberships)
    for (const auto& m : *memberships) memb[m.record_id] = m.member_of;
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : ds.records) {
    nlohmann::json jr;
    jr["record_id"] = r.id;
    jr["features"] = r.features;
    jr["task_label"] = r.task_label;
    if (memberships) {
      const auto it = memb.find(r.id);
      if (it != memb.end() && it->second)
        jr["member_of"] = *it->second;
      else
        jr["member_of"] = nullptr;
    }
    recs.push_back(std::move(jr));
  }
  nlohmann::json j;
  j["classes"] = ds.classes;
  j["records"] = std::move(recs);
  return j;
}

inline void save_dataset(const Dataset& ds, const std::string& path,
                         const std::vector<LabeledMembership>* memberships = nullptr) {
  if (format_from_path(path) == FileFormat::Json)
    write_file_atomic(path, dataset_to_json(ds, memberships).dump(2) + "\n");
  else
    write_file_atomic(path, dataset_to_csv(ds, memberships));
}

struct LoadedDataset {
  Dataset data;
  std::vector<LabeledMembership> memberships;
  bool has_membership_column = false;
};

inline LoadedDataset load_dataset_csv(const std::string& path, int expected_classes = 0) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error(path + ": empty file");
  const auto header = split_csv_line(lines[0]);
  if (header.empty() || header[0] != "record_id")
    throw std::runtime_error(path + ": schema error: first column must be 'record_id'");
  int dim = 0;
  while (1 + dim < static_cast<int>(header.size()) &&
         header[1 + dim] == "f" + std::to_string(dim))
    ++dim;
  std::size_t col = 1 + dim;
  if (col >= header.size() || header[col] != "task_label")
    throw std::runtime_error(path + ": schema error: missing column 'task_label'");
  ++col;
  bool has_member = false;
  if (col < header.size()) {
    if (header[col] != "member_of")
      throw std::runtime_error(path + ": schema error: unexpected column '" + header[col] + "'");
    has_member = true;
    ++col;
  }
  if (col != header.size())
    throw std::runtime_error(path + ": schema error: unexpected trailing columns");

  LoadedDataset out;
  out.has_membership_column = has_member;
  std::unordered_set<std::string> seen;
  int max_label = -1;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto cells = split_csv_line(lines[row]);
    if (cells.size() != header.size())
      throw std::runtime_error(path + ": row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    Record r;
    r.id = cells[0];
    if (!seen.insert(r.id).second)
      throw std::runtime_error(path + ": row " + std::to_string(row) +
                               ": duplicate record_id '" + r.id + "'");
    r.features.resize(dim);
    for (int i = 0; i < dim; ++i)
      r.features[i] = parse_double_cell(cells[1 + i], path, row, "f" + std::to_string(i));
    const long label = parse_int_cell(cells[1 + dim], path, row, "task_label");
    if (label < 0 || (expected_classes > 0 && label >= expected_classes))
      throw std::runtime_error(path + ": row " + std::to_string(row) +
                               ": task_label " + std::to_string(label) + " out of range");
    r.task_label = static_cast<int>(label);
    max_label = std::max(max_label, r.task_label);
    if (has_member) {
      const std::string& cell = cells[1 + dim + 1];
      if (cell.empty())
        out.memberships.push_back({r.id, std::nullopt});
      else {
        const long owner = parse_int_cell(cell, path, row, "member_of");
        if (owner < 0)
          throw std::runtime_error(path + ": row " + std::to_string(row) +
                                   ": member_of must be non-negative");
        out.memberships.push_back({r.id, static_cast<int>(owner)});
      }
    }
    out.data.records.push_back(std::move(r));
  }
  out.data.classes = expected_classes > 0 ? expected_classes : max_label + 1;
  return out;
}

inline LoadedDataset load_dataset_json(const std::string& path, int expected_classes = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("records"))
    throw std::runtime_error(path + ": schema error: missing 'records'");
  LoadedDataset out;
  out.data.classes = j.value("classes", 0);
  std::unordered_set<std::string> seen;
  int max_label = -1;
  std::size_t row = 0;
  for (const auto& jr : j["records"]) {
    ++row;
    if (!jr.contains("record_id") || !jr.contains("features") || !jr.contains("task_label"))
      throw std::runtime_error(path + ": record " + std::to_string(row) +
                               ": missing record_id, features or task_label");
    Record r;
    r.id = jr["record_id"].get<std::string>();
    if (!seen.insert(r.id).second)
      throw std::runtime_error(path + ": record " + std::to_string(row) +
                               ": duplicate record_id '" + r.id + "'");
    r.features = jr["features"].get<std::vector<double>>();
    r.task_label = jr["task_label"].get<int>();
    if (r.task_label < 0 ||
        (expected_classes > 0 && r.task_label >= expected_classes))
      throw std::runtime_error(path + ": record " + std::to_string(row) +
                               ": task_label out of range");
    max_label = std::max(max_label, r.task_label);
    if (jr.contains("member_of")) {
      out.has_membership_column = true;
      if (jr["member_of"].is_null())
        out.memberships.push_back({r.id, std::nullopt});
      else
        out.memberships.push_back({r.id, jr["member_of"].get<int>()});
    }
    out.data.records.push_back(std::move(r));
  }
  if (expected_classes > 0)
    out.data.classes = expected_classes;
  else if (out.data.classes <= 0)
    out.data.classes = max_label + 1;
  return out;
}

inline LoadedDataset load_dataset(const std::string& path, int expected_classes = 0) {
  return format_from_path(path) == FileFormat::Json
             ? load_dataset_json(path, expected_classes)
             : load_dataset_csv(path, expected_classes);
}

// ---------------------------------------------------------------------------
// Membership files and prediction matrices
// ---------------------------------------------------------------------------

inline std::string memberships_to_csv(const std::vector<LabeledMembership>& ms) {
  std::ostringstream out;
  out << "record_id,member_of\n";
  for (const auto& m : ms) {
    out << m.record_id << ',';
    if (m.member_of) out << *m.member_of;
    out << "\n";
  }
  return out.str();
}

inline void save_memberships(const std::vector<LabeledMembership>& ms, const std::string& path) {
  write_file_atomic(path, memberships_to_csv(ms));
}

inline std::vector<LabeledMembership> load_memberships(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || split_csv_line(lines[0]) != std::vector<std::string>{"record_id", "member_of"})
    throw std::runtime_error(path + ": schema error: expected header 'record_id,member_of'");
  std::vector<LabeledMembership> out;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto cells = split_csv_line(lines[row]);
    if (cells.size() != 2)
      throw std::runtime_error(path + ": row " + std::to_string(row) + ": expected 2 cells");
    if (cells[1].empty())
      out.push_back({cells[0], std::nullopt});
    else
      out.push_back({cells[0], static_cast<int>(parse_int_cell(cells[1], path, row, "member_of"))});
  }
  return out;
}

struct PredictionMatrix {
  std::vector<std::string> record_ids;
  Matrix probs;

  int classes() const { return probs.empty() ? 0 : static_cast<int>(probs[0].size()); }
  std::size_t size() const { return record_ids.size(); }
};

inline std::string predictions_to_csv(const PredictionMatrix& pm) {
  std::ostringstream out;
  out << "record_id";
  for (int k = 0; k < pm.classes(); ++k) out << ",p" << k;
  out << "\n";
  for (std::size_t i = 0; i < pm.size(); ++i) {
    out << pm.record_ids[i];
    for (double p : pm.probs[i]) out << ',' << fmt_double(p);
    out << "\n";
  }
  return out.str();
}

inline void save_predictions(const PredictionMatrix& pm, const std::string& path) {
  write_file_atomic(path, predictions_to_csv(pm));
}

// Rows must be probability vectors. Rows whose sum drifts from 1 by more than
// 1e-6 are renormalized; rows within that tolerance are kept bit-exact so a
// save/load round trip is the identity.
inline PredictionMatrix load_predictions(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error(path + ": empty file");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 2 || header[0] != "record_id")
    throw std::runtime_error(path + ": schema error: expected header 'record_id,p0,...'");
  const int classes = static_cast<int>(header.size()) - 1;
  for (int k = 0; k < classes; ++k)
    if (header[1 + k] != "p" + std::to_string(k))
      throw std::runtime_error(path + ": schema error: expected column 'p" +
                               std::to_string(k) + "', got '" + header[1 + k] + "'");
  PredictionMatrix pm;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto cells = split_csv_line(lines[row]);
    if (cells.size() != header.size())
      throw std::runtime_error(path + ": row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " cells");
    std::vector<double> p(classes);
    double sum = 0.0;
    for (int k = 0; k < classes; ++k) {
      p[k] = parse_double_cell(cells[1 + k], path, row, "p" + std::to_string(k));
      if (!std::isfinite(p[k]) || p[k] < 0.0)
        throw std::runtime_error(path + ": row " + std::to_string(row) +
                                 ": probabilities must be finite and non-negative");
      sum += p[k];
    }
    if (sum <= 0.0)
      throw std::runtime_error(path + ": row " + std::to_string(row) +
                               ": probability row sums to zero");
    if (std::abs(sum - 1.0) > 1e-6)
      for (auto& x : p) x /= sum;
    pm.record_ids.push_back(cells[0]);
    pm.probs.push_back(std::move(p));
  }
  return pm;
}

// ---------------------------------------------------------------------------
// Scenario config JSON
// ---------------------------------------------------------------------------

inline nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["clients"] = cfg.clients;
  j["classes"] = cfg.classes;
  j["feature_dim"] = cfg.feature_dim;
  j["train_sizes"] = cfg.train_sizes;
  j["relevant_sizes"] = cfg.relevant_sizes;
  j["external_sizes"] = cfg.external_sizes;
  j["relevant_member_fractions"] = cfg.relevant_member_fractions;
  j["challenge_size"] = cfg.challenge_size;
  j["challenge_members"] = cfg.challenge_members;
  j["colluding_client"] = cfg.colluding_client;
  j["class_separation"] = cfg.class_separation;
  j["seed"] = cfg.seed;
  return j;
}

// Applies keys from j onto cfg; unknown keys are an error so that typos in
// configuration files fail loudly instead of silently using defaults.
inline void apply_scenario_json(ScenarioConfig& cfg, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "clients") cfg.clients = value.get<int>();
    else if (key == "classes") cfg.classes = value.get<int>();
    else if (key == "feature_dim") cfg.feature_dim = value.get<int>();
    else if (key == "train_sizes") cfg.train_sizes = value.get<std::vector<int>>();
    else if (key == "relevant_sizes") cfg.relevant_sizes = value.get<std::vector<int>>();
    else if (key == "external_sizes") cfg.external_sizes = value.get<std::vector<int>>();
    else if (key == "relevant_member_fractions")
      cfg.relevant_member_fractions = value.get<std::vector<double>>();
    else if (key == "challenge_size") cfg.challenge_size = value.get<int>();
    else if (key == "challenge_members") cfg.challenge_members = value.get<std::vector<int>>();
    else if (key == "colluding_client") cfg.colluding_client = value.get<int>();
    else if (key == "class_separation") cfg.class_separation = value.get<double>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("unknown configuration key: scenario." + key);
  }
}

}  // namespace miaforge
