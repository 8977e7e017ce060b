#include "fedrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "fedrec/rng.hpp"

namespace fedrec {
namespace {

const char* kOccupations[21] = {
    "administrator", "artist",     "doctor",     "educator",  "engineer",
    "entertainment", "executive",  "healthcare", "homemaker", "lawyer",
    "librarian",     "marketing",  "none",       "other",     "programmer",
    "retired",       "salesman",   "scientist",  "student",   "technician",
    "writer"};

}  // namespace

void write_synthetic_ml100k(const SynthOptions& opt, const std::string& dir) {
  if (opt.num_users < 1 || opt.num_items < 2)
    throw std::invalid_argument("write_synthetic_ml100k: bad sizes");
  std::filesystem::create_directories(dir);

  Rng rng(derive_seed(opt.seed, "synth-ml100k"));

  // Item genres and Zipf popularity.
  std::vector<int> genre(opt.num_items);
  std::vector<double> popularity(opt.num_items);
  for (int v = 0; v < opt.num_items; ++v) {
    genre[v] = static_cast<int>(rng.index(opt.num_genres));
    popularity[v] = 1.0 / std::pow(static_cast<double>(v + 1),
                                   opt.popularity_exponent);
  }

  // Demographic genre-affinity profiles: one per (gender, age bucket).
  std::vector<std::vector<double>> affinity(6,
                                            std::vector<double>(opt.num_genres));
  for (auto& profile : affinity) {
    double sum = 0.0;
    for (double& a : profile) {
      a = std::exp(1.5 * rng.gauss());
      sum += a;
    }
    for (double& a : profile) a /= sum;
  }

  std::ofstream user_file(dir + "/u.user");
  std::ofstream data_file(dir + "/u.data");
  std::ofstream occ_file(dir + "/u.occupation");
  if (!user_file || !data_file || !occ_file)
    throw std::runtime_error("cannot write synthetic dataset to " + dir);
  for (const char* name : kOccupations) occ_file << name << "\n";

  std::vector<double> weight(opt.num_items);
  std::vector<int> chosen;
  for (int u = 1; u <= opt.num_users; ++u) {
    const int gender = rng.uniform() < 0.71 ? 1 : 0;  // 1 = M
    int age;
    const double r = rng.uniform();
    if (r < 0.60) age = 18 + static_cast<int>(rng.index(17));       // <35
    else if (r < 0.85) age = 35 + static_cast<int>(rng.index(11));  // 35..45
    else age = 46 + static_cast<int>(rng.index(28));                // >45
    const int bucket = age < 35 ? 0 : (age <= 45 ? 1 : 2);
    const int occupation = static_cast<int>(rng.index(21));
    user_file << u << "|" << age << "|" << (gender == 1 ? "M" : "F") << "|"
              << kOccupations[occupation] << "|00000\n";

    const auto& demo = affinity[gender * 3 + bucket];
    std::vector<double> pref(opt.num_genres);
    double sum = 0.0;
    for (int g = 0; g < opt.num_genres; ++g) {
      double own = std::exp(1.0 * rng.gauss());
      pref[g] = opt.demographic_weight * demo[g] +
                (1.0 - opt.demographic_weight) * own;
      sum += pref[g];
    }
    for (double& p : pref) p /= sum;

    // Activity level: lognormal around the target mean, floored.
    double raw = std::exp(std::log(opt.mean_ratings_per_user) - 0.32 +
                          0.8 * rng.gauss());
    int count = std::max(opt.min_ratings_per_user,
                         std::min(static_cast<int>(raw), opt.num_items - 1));

    // Weighted sample without replacement.
    for (int v = 0; v < opt.num_items; ++v)
      weight[v] = popularity[v] * pref[genre[v]];
    chosen.clear();
    for (int picked = 0; picked < count; ++picked) {
      double total = 0.0;
      for (double w : weight) total += w;
      double x = rng.uniform() * total;
      int v = 0;
      for (; v < opt.num_items - 1; ++v) {
        if (x < weight[v]) break;
        x -= weight[v];
      }
      while (weight[v] == 0.0 && v > 0) --v;
      chosen.push_back(v);
      weight[v] = 0.0;
    }

    long ts = 874000000 + static_cast<long>(rng.index(20000000));
    for (int v : chosen) {
      const double match = pref[genre[v]] * opt.num_genres;  // ~1 on average
      double score = 3.2 + 0.9 * std::log(match + 0.3) + 0.7 * rng.gauss();
      int rating = std::clamp(static_cast<int>(std::lround(score)), 1, 5);
      data_file << u << "\t" << (v + 1) << "\t" << rating << "\t" << ts
                << "\n";
      ts += 1 + static_cast<long>(rng.index(5000));
    }
  }
}

}  // namespace fedrec
