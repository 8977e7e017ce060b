#pragma once

#include <array>
#include <string>

#include "fedrec/recommender.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

// Component -> resistance level. Level 0 is most vulnerable (gets the
// largest noise), level 3 most resistant.
struct ResistanceMap {
  std::array<int, 4> level = {0, 3, 1, 2};  // indexed by ComponentTag

  int of(ComponentTag tag) const { return level[static_cast<int>(tag)]; }

  // Default: user=0, mlp1=1, mlp2=2, item=3, matching the observed
  // vulnerability ordering.
  static ResistanceMap by_vulnerability() { return {{0, 3, 1, 2}}; }
  // Literal preset: user=0, item=1, mlp1=2, mlp2=3.
  static ResistanceMap literal() { return {{0, 1, 2, 3}}; }
};

enum class PrivacyMode { kOff, kAdaptive, kFixed, kGaussian };

PrivacyMode privacy_mode_from_name(const std::string& name);
const char* privacy_mode_name(PrivacyMode mode);

struct BudgetPlan {
  PrivacyMode mode = PrivacyMode::kOff;
  double eps_min = 30.0;
  double eps_max = 60.0;
  double delta = 0.5;          // clip bound
  double fixed_lambda = 0.0;   // kFixed
  double gaussian_sigma = 0.0; // kGaussian
  ResistanceMap resistance;

  void validate() const;
};

// Element-wise clamp of every parameter to [-delta, delta].
void clip_params(ParamSet& params, double delta);

// lambda = 2*delta / (eps_min + (eps_max - eps_min)/3 * level(tag))
double noise_scale(ComponentTag tag, const BudgetPlan& plan);

// Inverse-CDF draw: u ~ U(-1/2, 1/2), n = -lambda sign(u) ln(1 - 2|u|).
double sample_laplace(double lambda, Rng& rng);

// Variance-matched Gaussian baseline: sigma = lambda * sqrt(2).
double gaussian_sigma_for(double lambda);

// clip + per-component noise, leaving the input untouched.
ParamSet perturb(const ParamSet& params, const BudgetPlan& plan, Rng& rng);

}  // namespace fedrec
