#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fedrec/rng.hpp"

namespace fedrec {

enum class MovielensFormat { kMl100k, kMl1m };

struct Interaction {
  int user_id = 0;
  int item_id = 0;
  int rating = 0;     // 1..5
  long timestamp = 0;
};

struct UserProfile {
  int user_id = 0;
  int age = 0;
  int gender = 0;      // 0 = female, 1 = male
  int occupation = 0;  // 0..20
};

// Fixed feature layout, 44 entries total. Slice boundaries are part of
// the contract; extract_features fills them in this order.
struct FeatureLayout {
  static constexpr std::size_t kCount = 0;          // [0]      normalized interaction count
  static constexpr std::size_t kLevelCounts = 1;    // [1..6)   per-level counts (normalized)
  static constexpr std::size_t kLevelPercents = 6;  // [6..11)  per-level percentages
  static constexpr std::size_t kPosNegRatio = 11;   // [11..13) high / low rating ratios
  static constexpr std::size_t kEntropy = 13;       // [13]     rating entropy (nats)
  static constexpr std::size_t kStats = 14;         // [14..18) median,min,max,mean (/5)
  static constexpr std::size_t kGender = 18;        // [18..20) one-hot, female first
  static constexpr std::size_t kOccupation = 20;    // [20..41) one-hot over 21 occupations
  static constexpr std::size_t kAgeGroup = 41;      // [41..44) one-hot over 3 buckets
  static constexpr std::size_t kDim = 44;
};

struct PrivateLabels {
  int age_group = 0;  // {0,1,2}
  int gender = 0;     // {0,1}
};

struct UserShard {
  int user_id = 0;
  std::set<int> positives;                       // N(u), includes held-out when present
  std::vector<std::pair<int, int>> examples;     // (item_id, label)
  std::vector<double> features;                  // length 44
  PrivateLabels labels;
  std::optional<int> held_out_item;
  // Mean raw item feature over N(u) \ {held_out}; filled by the shard
  // builder once item features exist. Used by the neighbor aggregation.
  std::vector<double> neighbor_feature_mean;
};

struct LoadStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_interactions = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t rejected_ratings = 0;
};

struct Dataset {
  std::vector<Interaction> interactions;
  std::vector<UserProfile> profiles;
  std::vector<std::string> occupation_vocab;
  LoadStats stats;
};

// Parses MovieLens ratings + user profiles, reindexing users/items to
// contiguous 0-based ids. Duplicate (user,item) pairs are resolved
// last-write-wins; out-of-range ratings are dropped with a counter.
// For the 100K format occupations are strings; the vocabulary is read
// from `occupation_path` (one name per line, index = file order) when
// given, otherwise built in first-appearance order over the profile
// file. The 1M format carries numeric occupation codes already.
Dataset load_movielens(const std::string& data_path,
                       const std::string& profile_path, MovielensFormat format,
                       const std::string& occupation_path = "");

void save_occupation_vocab(const std::vector<std::string>& vocab,
                           const std::string& path);

// -sum p ln p over the five rating levels, in nats. Zero-probability
// levels contribute nothing. Throws if all counts are zero.
double rating_entropy(const std::array<long, 5>& level_counts);
double rating_entropy(const std::vector<long>& level_counts);

// 0: age < 35, 1: 35 <= age <= 45, 2: age > 45
int age_bucket(int age);

std::vector<double> extract_features(const std::vector<Interaction>& user_rows,
                                     const UserProfile& profile,
                                     std::size_t dataset_max_user_count);

// user -> held-out item, most recent by timestamp (ties: larger item id).
// Users with fewer than two interactions are absent.
std::map<int, int> leave_one_out_split(
    const std::vector<Interaction>& interactions);

// Uniform draw without replacement from items the user never touched.
std::vector<std::pair<int, int>> sample_negatives(
    const std::set<int>& positives, int num_items, std::size_t want, Rng& rng);

struct ShardOptions {
  int negative_ratio = 4;  // q
};

// Per-user shards: features, labels, leave-one-out split, implicit
// positives and sampled negatives. Item count taken from the dataset.
std::vector<UserShard> build_shards(const Dataset& data,
                                    const ShardOptions& opt,
                                    std::uint64_t master_seed);

}  // namespace fedrec
