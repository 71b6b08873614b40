#pragma once

// FedAvg simulation: an IID population split 80/20 into client shards and a
// global holdout, synchronous full participation, example-count-weighted
// parameter averaging, and per-round holdout evaluation. DP tiers apply noise
// inside each client's local DP-SGD run, not at aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "csv.hpp"
#include "data.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "targets.hpp"

namespace miaforge {

struct FlConfig {
  int clients = 4;
  int rounds = 50;
  int local_epochs = 5;
  double train_fraction = 0.8;
  PrivacyConfig tier;  // infinite epsilon selects plain local training
  std::uint64_t seed = 0;

  void validate() const {
    if (clients < 1) throw std::invalid_argument("federated: need at least 1 client");
    if (rounds < 1) throw std::invalid_argument("federated: rounds must be >= 1");
    if (local_epochs < 1) throw std::invalid_argument("federated: local epochs must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw std::invalid_argument("federated: train_fraction must lie in (0, 1)");
    tier.validate();
  }
};

struct RoundLog {
  int round = 0;  // 1-based
  double accuracy = 0.0;
  double mean_loss = 0.0;  // mean over clients of the final local epoch objective
};

struct FlResult {
  std::vector<RoundLog> logs;
  TargetModel global;
  std::vector<std::size_t> client_sizes;
  std::size_t holdout_size = 0;
};

// Every client's local run in a given round gets its own derived seed, so
// client training order cannot change any result.
inline std::uint64_t fl_round_seed(std::uint64_t seed, int round, int client) {
  return derive_seed(seed, {1ull, static_cast<std::uint64_t>(round),
                            static_cast<std::uint64_t>(client)});
}

inline TargetModel weighted_average(const std::vector<TargetModel>& models,
                                    const std::vector<double>& weights) {
  if (models.empty() || models.size() != weights.size())
    throw std::invalid_argument("weighted average: need one weight per model");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("weighted average: weights must be positive");
    total += w;
  }
  for (const auto& m : models)
    if (m.arch != models[0].arch || m.classes != models[0].classes ||
        m.input_dim != models[0].input_dim || m.hidden != models[0].hidden ||
        m.params.size() != models[0].params.size())
      throw std::invalid_argument("weighted average: model shapes disagree");

  // Normalized weights keep a single participant's parameters bit-identical
  // (scale is exactly 1.0) instead of round-tripping through p*w/w.
  TargetModel avg = models[0];
  std::fill(avg.params.begin(), avg.params.end(), 0.0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const double scale = weights[i] / total;
    for (std::size_t j = 0; j < avg.params.size(); ++j)
      avg.params[j] += scale * models[i].params[j];
  }
  return avg;
}

struct FlSplit {
  std::vector<Dataset> client_data;
  Dataset holdout;
};

// Deterministic shuffle, then the first train_fraction of records is dealt
// round-robin to the clients (IID, sizes within one of each other) and the
// rest becomes the shared holdout.
inline FlSplit split_population(const Dataset& population, const FlConfig& cfg) {
  cfg.validate();
  const std::size_t n = population.records.size();
  if (n == 0) throw std::invalid_argument("federated: population is empty");
  const auto train_count = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(n));
  if (train_count < static_cast<std::size_t>(cfg.clients))
    throw std::invalid_argument("federated: fewer training records than clients");

  Rng rng(derive_seed(cfg.seed, {0}));
  const auto perm = rng.permutation(n);
  FlSplit s;
  s.client_data.assign(cfg.clients, Dataset{});
  for (auto& d : s.client_data) d.classes = population.classes;
  s.holdout.classes = population.classes;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = population.records[perm[i]];
    if (i < train_count)
      s.client_data[i % cfg.clients].records.push_back(r);
    else
      s.holdout.records.push_back(r);
  }
  return s;
}

// SGD steps one full federated run charges against the privacy budget of the
// largest client shard.
inline long long fl_planned_steps(int client_records, const FlConfig& cfg, TrainConfig local) {
  local.epochs = cfg.local_epochs;
  return static_cast<long long>(cfg.rounds) * planned_steps(client_records, local);
}

inline FlResult run_federated(const Dataset& population, const FlConfig& cfg,
                              const TrainConfig& base_train) {
  cfg.validate();
  auto split = split_population(population, cfg);
  if (split.holdout.records.empty())
    throw std::invalid_argument("federated: holdout split is empty");

  TrainConfig local = base_train;
  local.epochs = cfg.local_epochs;
  local.validate();

  FlResult res;
  for (const auto& d : split.client_data) res.client_sizes.push_back(d.records.size());
  res.holdout_size = split.holdout.records.size();

  const bool plain = std::isinf(cfg.tier.epsilon);
  TargetModel global =
      init_model(local.architecture, population.classes, population.feature_dim(),
                 local.hidden_width, derive_seed(cfg.seed, {2}));

  for (int round = 1; round <= cfg.rounds; ++round) {
    std::vector<TargetModel> locals(cfg.clients);
    std::vector<double> losses(static_cast<std::size_t>(cfg.clients), 0.0);
    std::vector<double> weights(static_cast<std::size_t>(cfg.clients), 0.0);
    parallel_for(static_cast<std::size_t>(cfg.clients), [&](std::size_t c) {
      TrainConfig per_client = local;
      per_client.seed = fl_round_seed(cfg.seed, round, static_cast<int>(c));
      try {
        auto r = plain ? train_plain(split.client_data[c], per_client, &global)
                       : train_dp_sgd(split.client_data[c], per_client, cfg.tier, &global);
        losses[c] = r.epoch_objective.back();
        locals[c] = std::move(r.model);
      } catch (const std::exception& e) {
        throw std::runtime_error("federated round " + std::to_string(round) + ", client " +
                                 std::to_string(c + 1) + ": " + e.what());
      }
      weights[c] = static_cast<double>(split.client_data[c].records.size());
    });
    global = weighted_average(locals, weights);

    RoundLog log;
    log.round = round;
    log.accuracy = dataset_accuracy(global, split.holdout);
    double loss_sum = 0.0;
    for (double l : losses) loss_sum += l;
    log.mean_loss = loss_sum / static_cast<double>(cfg.clients);
    res.logs.push_back(log);
  }
  res.global = std::move(global);
  return res;
}

inline std::string curves_to_csv(const std::vector<RoundLog>& logs, const std::string& tier,
                                 int classes) {
  if (logs.empty()) throw std::invalid_argument("fl curves: no round logs");
  if (classes < 2) throw std::invalid_argument("fl curves: need at least 2 classes");
  std::string out = "# tier=" + tier + " random_floor=" + fmt_double(1.0 / classes) + "\n";
  out += "round,accuracy,mean_loss\n";
  for (const auto& l : logs)
    out += std::to_string(l.round) + "," + fmt_double(l.accuracy) + "," +
           fmt_double(l.mean_loss) + "\n";
  return out;
}

struct FlCurves {
  std::string tier;
  double random_floor = 0.0;
  std::vector<RoundLog> logs;
};

inline FlCurves parse_curves(const std::string& text, const std::string& file = "fl curves") {
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  if (lines.size() < 3 || lines[0].rfind("# tier=", 0) != 0)
    throw std::runtime_error(file + ": missing '# tier=... random_floor=...' metadata row");
  FlCurves c;
  const auto& meta = lines[0];
  const auto floor_pos = meta.find(" random_floor=");
  if (floor_pos == std::string::npos)
    throw std::runtime_error(file + ": metadata row lacks random_floor");
  c.tier = meta.substr(7, floor_pos - 7);
  c.random_floor = parse_double_cell(meta.substr(floor_pos + 14), file, 0, "random_floor");
  if (lines[1] != "round,accuracy,mean_loss")
    throw std::runtime_error(file + ": expected header 'round,accuracy,mean_loss'");
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_csv_line(lines[i]);
    if (cells.size() != 3)
      throw std::runtime_error(file + ": row " + std::to_string(i) + ": expected 3 columns");
    RoundLog l;
    l.round = static_cast<int>(parse_int_cell(cells[0], file, i, "round"));
    l.accuracy = parse_double_cell(cells[1], file, i, "accuracy");
    l.mean_loss = parse_double_cell(cells[2], file, i, "mean_loss");
    c.logs.push_back(l);
  }
  if (c.logs.empty()) throw std::runtime_error(file + ": no data rows");
  return c;
}

inline void export_curves(const std::string& path, const std::vector<RoundLog>& logs,
                          const std::string& tier, int classes) {
  write_file_atomic(path, curves_to_csv(logs, tier, classes));
}

}  // namespace miaforge
