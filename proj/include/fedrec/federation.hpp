#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedrec/delta.hpp"
#include "fedrec/privacy.hpp"
#include "fedrec/recommender.hpp"

namespace fedrec {

struct RoundLog {
  int round = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
  std::size_t upload_bytes = 0;
};

struct TrainLog {
  std::vector<RoundLog> rounds;
};

void save_train_log(const TrainLog& log, const std::string& path);

struct FederationConfig {
  std::size_t rounds = 100;          // T_g
  double client_fraction = 0.5;
  Hyper hyper;
  BudgetPlan plan;
  std::uint64_t master_seed = 0;
  int workers = 1;
  // Rounds at which client deltas are archived; empty means the final
  // round only. On a harvest round every client participates so the
  // archive covers the whole population.
  std::vector<int> harvest_rounds;
  bool harvest_full_participation = true;
  // Replicates the literal per-epoch noising variant; default noises
  // only the uploaded final state.
  bool perturb_per_epoch = false;
};

// ceil(fraction * M) users drawn uniformly without replacement,
// returned sorted ascending.
std::vector<int> sample_clients(const std::vector<int>& all_users,
                                double fraction, Rng& rng);

// Element-wise arithmetic mean of congruent uploads.
ParamSet aggregate(const std::vector<ParamSet>& uploads);

struct TrainResult {
  ParamSet global;
  TrainLog log;
  DeltaArchive archive;
};

// Runs the round loop: sample -> broadcast -> local train (wrapped by
// the privacy mechanism when active) -> harvest deltas -> aggregate in
// ascending user id order. Deterministic for a fixed master seed at any
// worker count. `should_stop`, when set, is consulted after each round.
TrainResult run_training(
    const std::vector<UserShard>& shards, const ItemFeatureTable& items,
    const ParamSet& initial, const FederationConfig& config,
    const std::function<bool(int, const ParamSet&)>& should_stop = nullptr);

}  // namespace fedrec
