#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedrec/linalg.hpp"
#include "fedrec/recommender.hpp"

namespace fedrec {

// One client's pseudo-gradient for one round:
// delta = (theta_broadcast - theta_upload) / mu1, full flat layout.
// Component slices are carved out later via component_spans.
struct DeltaRecord {
  int user_id = 0;
  int round = 0;
  Vec delta;
};

struct DeltaArchive {
  std::size_t d = 0;
  std::size_t d2 = 0;
  std::vector<DeltaRecord> records;
};

// (broadcast - upload) / mu1 over the full flat layout. A zero
// learning rate leaves the parameters unchanged, so the gap is
// reported unscaled (all zeros) rather than dividing by zero.
DeltaRecord compute_delta(const ParamSet& broadcast, const ParamSet& upload,
                          double mu1, int user_id, int round);

// Shape header line (JSON) followed by fixed-size binary records:
// int64 user, int64 round, flat_size float64.
void save_archive(const DeltaArchive& archive, const std::string& path);
DeltaArchive load_archive(const std::string& path);

}  // namespace fedrec
