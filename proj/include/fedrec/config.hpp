#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedrec/attack.hpp"
#include "fedrec/federation.hpp"
#include "fedrec/synth.hpp"

namespace fedrec {

struct DatasetConfig {
  std::string source = "synthetic";  // "ml100k" | "ml1m" | "synthetic"
  std::string data_path;
  std::string profile_path;
  std::string occupation_path;
  SynthOptions synth;  // used when source == "synthetic"
};

struct AttackConfig {
  std::vector<std::string> attributes = {"gender", "age"};
  std::vector<std::string> masks = {"full"};
  std::vector<std::string> attackers = {"aia", "random"};
  double zeta = 0.1;
  int num_seeds = 5;
  AiaOptions aia;
  int knn_k = 5;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  FederationConfig federation;
  AttackConfig attack;
  std::size_t hit_k = 20;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;

  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json_text(const std::string& text);

// Stable hash of the canonical JSON echo; embedded in every output file.
std::uint64_t config_hash(const ExperimentConfig& config);

ComponentMask mask_from_string(const std::string& name);

}  // namespace fedrec
