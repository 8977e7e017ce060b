#pragma once

#include <cstdint>
#include <string>

namespace fedrec {

// Synthetic interaction corpus written in MovieLens format, used by the
// smoke tests and as a stand-in corpus when the real dataset is not on
// disk. Demographics drive genre preferences, item popularity is
// Zipf-skewed, and per-user activity matches the real dataset's shape,
// so both the recommendation task and the attribute leakage channel are
// present.
struct SynthOptions {
  int num_users = 943;
  int num_items = 1682;
  int min_ratings_per_user = 20;
  double mean_ratings_per_user = 106.0;
  int num_genres = 16;
  double popularity_exponent = 0.8;
  double demographic_weight = 0.65;  // share of preference from demographics
  std::uint64_t seed = 1;
};

// Writes `u.data`, `u.user` and `u.occupation` (ML-100K layout) under
// `dir`, creating it if needed.
void write_synthetic_ml100k(const SynthOptions& opt, const std::string& dir);

}  // namespace fedrec
