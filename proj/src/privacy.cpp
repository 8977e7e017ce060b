#include "fedrec/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedrec {

PrivacyMode privacy_mode_from_name(const std::string& name) {
  if (name == "off") return PrivacyMode::kOff;
  if (name == "adaptive") return PrivacyMode::kAdaptive;
  if (name == "fixed") return PrivacyMode::kFixed;
  if (name == "gaussian") return PrivacyMode::kGaussian;
  throw std::invalid_argument("unknown privacy mode '" + name + "'");
}

const char* privacy_mode_name(PrivacyMode mode) {
  switch (mode) {
    case PrivacyMode::kOff: return "off";
    case PrivacyMode::kAdaptive: return "adaptive";
    case PrivacyMode::kFixed: return "fixed";
    case PrivacyMode::kGaussian: return "gaussian";
  }
  return "?";
}

void BudgetPlan::validate() const {
  if (mode == PrivacyMode::kOff) return;
  if (delta <= 0.0) throw std::invalid_argument("plan: delta must be > 0");
  if (mode == PrivacyMode::kAdaptive) {
    if (eps_min <= 0.0 || eps_max < eps_min)
      throw std::invalid_argument("plan: need 0 < eps_min <= eps_max");
    for (ComponentTag tag : kAllComponents) {
      int l = resistance.of(tag);
      if (l < 0 || l > 3)
        throw std::invalid_argument("plan: resistance level out of range");
    }
  }
  if (mode == PrivacyMode::kFixed && fixed_lambda <= 0.0)
    throw std::invalid_argument("plan: fixed lambda must be > 0");
  if (mode == PrivacyMode::kGaussian && gaussian_sigma <= 0.0)
    throw std::invalid_argument("plan: gaussian sigma must be > 0");
}

void clip_params(ParamSet& params, double delta) {
  if (delta <= 0.0) throw std::invalid_argument("clip_params: delta <= 0");
  for (auto& v : params.views()) {
    for (std::size_t i = 0; i < v.size; ++i)
      v.data[i] = std::clamp(v.data[i], -delta, delta);
  }
}

double noise_scale(ComponentTag tag, const BudgetPlan& plan) {
  if (plan.mode != PrivacyMode::kAdaptive)
    throw std::invalid_argument("noise_scale: plan is not adaptive");
  const double b = (plan.eps_max - plan.eps_min) / 3.0;
  const double p = plan.eps_min + b * static_cast<double>(plan.resistance.of(tag));
  if (p <= 0.0) throw std::invalid_argument("noise_scale: budget p <= 0");
  return 2.0 * plan.delta / p;
}

double sample_laplace(double lambda, Rng& rng) {
  if (lambda < 0.0) throw std::invalid_argument("sample_laplace: lambda < 0");
  const double u = rng.uniform() - 0.5;
  if (u == 0.0 || lambda == 0.0) return 0.0;
  const double sign = u > 0.0 ? 1.0 : -1.0;
  return -lambda * sign * std::log(1.0 - 2.0 * std::abs(u));
}

double gaussian_sigma_for(double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("gaussian_sigma_for: lambda < 0");
  return lambda * std::sqrt(2.0);
}

ParamSet perturb(const ParamSet& params, const BudgetPlan& plan, Rng& rng) {
  plan.validate();
  ParamSet out = params;
  if (plan.mode == PrivacyMode::kOff) {
    if (plan.delta > 0.0) clip_params(out, plan.delta);
    return out;
  }
  clip_params(out, plan.delta);

  const auto spans = component_spans(out.d(), out.d2());
  Vec flat = flatten(out);
  switch (plan.mode) {
    case PrivacyMode::kAdaptive:
      for (ComponentTag tag : kAllComponents) {
        const double lambda = noise_scale(tag, plan);
        const auto [begin, end] = spans[static_cast<int>(tag)];
        for (std::size_t i = begin; i < end; ++i)
          flat[i] += sample_laplace(lambda, rng);
      }
      break;
    case PrivacyMode::kFixed:
      for (double& x : flat) x += sample_laplace(plan.fixed_lambda, rng);
      break;
    case PrivacyMode::kGaussian:
      for (double& x : flat) x += rng.gauss(0.0, plan.gaussian_sigma);
      break;
    case PrivacyMode::kOff:
      break;
  }
  return unflatten(flat, out.d(), out.d2());
}

}  // namespace fedrec
