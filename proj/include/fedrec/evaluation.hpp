#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedrec/attack.hpp"
#include "fedrec/config.hpp"
#include "fedrec/federation.hpp"

namespace fedrec {

// Item embeddings under a fixed parameter set; scoring all candidates
// for a user reuses these rows.
Mat precompute_item_embeddings(const ParamSet& ps,
                               const ItemFeatureTable& items);

// 1 iff the held-out item ranks within the top K among {held-out} plus
// all items the user never interacted with. Equal scores count against
// the held-out item.
int hit_at_k(const ParamSet& ps, const UserShard& shard,
             const ItemFeatureTable& items, const Mat& item_embeddings,
             std::size_t k);

// Mean hit over all shards with a held-out item.
double evaluate_recommender(const ParamSet& ps,
                            const std::vector<UserShard>& shards,
                            const ItemFeatureTable& items, std::size_t k);

struct AttackResultRow {
  std::string attribute;
  std::string attacker;
  std::string mask;
  double zeta = 0.0;
  std::uint64_t seed = 0;
  double f1 = 0.0;
};

struct ExperimentReport {
  std::string config_echo;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  double hit = 0.0;
  std::size_t hit_k = 20;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::map<std::string, double> lambda_by_component;
  std::vector<AttackResultRow> attack_rows;

  // Mean F1 over seeds for one (attribute, attacker, mask) cell.
  double mean_f1(const std::string& attribute, const std::string& attacker,
                 const std::string& mask) const;
};

struct PreparedData {
  Dataset data;
  std::vector<UserShard> shards;
  ItemFeatureTable items;
};

// Loads (or synthesizes, then loads through the regular parser) the
// configured dataset and builds shards + frozen item features.
PreparedData prepare_data(const ExperimentConfig& config);

std::map<int, int> attribute_labels(const std::vector<UserShard>& shards,
                                    const std::string& attribute);
int attribute_classes(const std::string& attribute);

std::vector<AttackResultRow> run_attacks(const DeltaArchive& archive,
                                         const std::vector<UserShard>& shards,
                                         const AttackConfig& attack,
                                         std::uint64_t master_seed);

// Full pipeline: train, evaluate, harvest, attack, write artifacts
// (config echo, checkpoint, delta archive, train log, report JSON and
// attack CSV) under config.output_dir.
ExperimentReport run_experiment(const ExperimentConfig& config);

void save_report(const ExperimentReport& report, const std::string& dir);

}  // namespace fedrec
