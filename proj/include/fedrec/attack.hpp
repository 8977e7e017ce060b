#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedrec/delta.hpp"
#include "fedrec/nn_core.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

// Component selection for slicing a full flat delta; empty = full.
using ComponentMask = std::vector<ComponentTag>;

std::string mask_name(const ComponentMask& mask);

Vec slice_delta(const Vec& full, const ComponentMask& mask, std::size_t d,
                std::size_t d2);

struct AttackDataset {
  std::vector<std::pair<Vec, int>> train;
  std::vector<std::pair<Vec, int>> test;
  std::vector<int> train_users;
  std::vector<int> test_users;
  int num_classes = 0;
};

// Per-user zeta split of the archived deltas. Labels are the target
// attribute's class per user. Features are standardized with train-split
// statistics only. Throws if some class is missing from the train split.
AttackDataset build_attack_dataset(const DeltaArchive& archive,
                                   const std::map<int, int>& labels,
                                   int num_classes, const ComponentMask& mask,
                                   double zeta, Rng& rng);

// Three dense layers (in -> 100 -> 30 -> C), ReLU hidden, softmax head.
struct AiaModel {
  DenseLayer l1, l2, l3;
  int num_classes = 0;
};

struct AiaOptions {
  std::size_t epochs = 150;
  double lr = 0.01;
  std::size_t batch = 16;
};

AiaModel train_aia(const AttackDataset& dataset, const AiaOptions& opt,
                   Rng& rng);

// Softmax class probabilities.
Vec infer(const AiaModel& model, const Vec& delta);

std::vector<int> predict_all(const AiaModel& model,
                             const std::vector<std::pair<Vec, int>>& rows);

// Majority label among the k nearest train rows (Euclidean); ties
// broken by smallest mean distance.
std::vector<int> knn_attack(const AttackDataset& dataset, int k);

// Labels drawn from the train-split empirical class distribution.
std::vector<int> random_attack(const AttackDataset& dataset, Rng& rng);

// Macro-averaged F1; a class with zero precision+recall contributes 0.
double f1_score(const std::vector<int>& predictions,
                const std::vector<int>& labels, int num_classes);

std::vector<int> test_labels(const AttackDataset& dataset);

}  // namespace fedrec
