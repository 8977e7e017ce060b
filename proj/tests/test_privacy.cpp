#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedrec/privacy.hpp"

using namespace fedrec;

namespace {

BudgetPlan default_plan(PrivacyMode mode = PrivacyMode::kAdaptive) {
  BudgetPlan plan;
  plan.mode = mode;
  plan.eps_min = 30.0;
  plan.eps_max = 60.0;
  plan.delta = 0.5;
  return plan;
}

}  // namespace

TEST_CASE("clip_params") {
  ParamSet ps(3, 3);
  for (auto& view : ps.views())
    for (std::size_t i = 0; i < view.size; ++i)
      view.data[i] = (i % 2 ? 1.0 : -1.0) * (0.1 * i + 0.3);
  ParamSet clipped = ps;
  clip_params(clipped, 0.5);
  Vec raw = flatten(ps), cut = flatten(clipped);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(cut[i] == doctest::Approx(std::clamp(raw[i], -0.5, 0.5)));
    CHECK(std::abs(cut[i]) <= 0.5);
  }
  // idempotent
  ParamSet twice = clipped;
  clip_params(twice, 0.5);
  CHECK(flatten(twice) == flatten(clipped));
}

TEST_CASE("noise_scale table") {
  BudgetPlan plan = default_plan();
  // resistance default: user=0, mlp1=1, mlp2=2, item=3
  CHECK(noise_scale(ComponentTag::kUser, plan) ==
        doctest::Approx(1.0 / 30).epsilon(1e-12));
  CHECK(noise_scale(ComponentTag::kMlp1, plan) ==
        doctest::Approx(0.025).epsilon(1e-12));
  CHECK(noise_scale(ComponentTag::kMlp2, plan) ==
        doctest::Approx(0.020).epsilon(1e-12));
  CHECK(noise_scale(ComponentTag::kItem, plan) ==
        doctest::Approx(1.0 / 60).epsilon(1e-12));

  SUBCASE("bounded by the budget endpoints and monotone in resistance") {
    for (ComponentTag tag : kAllComponents) {
      double l = noise_scale(tag, plan);
      CHECK(l <= 2 * plan.delta / plan.eps_min + 1e-15);
      CHECK(l >= 2 * plan.delta / plan.eps_max - 1e-15);
    }
    CHECK(noise_scale(ComponentTag::kUser, plan) >
          noise_scale(ComponentTag::kMlp1, plan));
    CHECK(noise_scale(ComponentTag::kMlp1, plan) >
          noise_scale(ComponentTag::kMlp2, plan));
    CHECK(noise_scale(ComponentTag::kMlp2, plan) >
          noise_scale(ComponentTag::kItem, plan));
  }
  SUBCASE("literal resistance preset") {
    BudgetPlan lit = plan;
    lit.resistance = ResistanceMap::literal();
    CHECK(noise_scale(ComponentTag::kItem, lit) == doctest::Approx(0.025));
    CHECK(noise_scale(ComponentTag::kMlp2, lit) == doctest::Approx(1.0 / 60));
  }
  SUBCASE("equal endpoints collapse every scale") {
    BudgetPlan flat = plan;
    flat.eps_min = flat.eps_max = 40.0;
    for (ComponentTag tag : kAllComponents)
      CHECK(noise_scale(tag, flat) == doctest::Approx(0.025));
  }
}

TEST_CASE("sample_laplace") {
  SUBCASE("moments") {
    Rng rng(7);
    const double lambda = 0.02;
    const std::size_t n = 200000;
    double sum = 0.0, sq = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double x = sample_laplace(lambda, rng);
      sum += x;
      sq += x * x;
      abs_sum += std::abs(x);
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 4e-4);
    CHECK(var == doctest::Approx(2 * lambda * lambda).epsilon(0.03));
    // E|X| = lambda
    CHECK(abs_sum / n == doctest::Approx(lambda).epsilon(0.02));
  }
  SUBCASE("scale zero is exactly zero") {
    Rng rng(1);
    for (int i = 0; i < 10; ++i) CHECK(sample_laplace(0.0, rng) == 0.0);
  }
  SUBCASE("deterministic per seed") {
    Rng a(5), b(5);
    for (int i = 0; i < 50; ++i)
      CHECK(sample_laplace(0.1, a) == sample_laplace(0.1, b));
  }
  SUBCASE("density ratio respects the per-component budget") {
    // For theta, theta' in [-delta, delta] the Laplace mechanism with
    // lambda = 2 delta / eps satisfies p(x|theta)/p(x|theta') <= e^eps.
    const double delta = 0.5, eps = 30.0;
    const double lambda = 2 * delta / eps;
    double worst = 0.0;
    for (double theta = -delta; theta <= delta; theta += 0.1) {
      for (double theta2 = -delta; theta2 <= delta; theta2 += 0.1) {
        for (double x = -2.0; x <= 2.0; x += 0.05) {
          double log_ratio =
              (std::abs(x - theta2) - std::abs(x - theta)) / lambda;
          worst = std::max(worst, log_ratio);
        }
      }
    }
    CHECK(worst <= eps + 1e-9);
  }
}

TEST_CASE("gaussian_sigma_for") {
  CHECK(gaussian_sigma_for(0.02) == doctest::Approx(0.02 * std::sqrt(2.0)));
  CHECK(gaussian_sigma_for(0.0) == 0.0);
}

TEST_CASE("perturb") {
  const std::size_t d = 16, d2 = 16;

  SUBCASE("mode off clips but adds no noise") {
    ParamSet ps(d, d2);
    Rng init(2);
    for (auto& view : ps.views())
      for (std::size_t i = 0; i < view.size; ++i) view.data[i] = init.gauss();
    BudgetPlan plan = default_plan(PrivacyMode::kOff);
    Rng rng(3);
    ParamSet out = perturb(ps, plan, rng);
    ParamSet expect = ps;
    clip_params(expect, plan.delta);
    CHECK(flatten(out) == flatten(expect));
    // input untouched
    CHECK(flatten(ps) != flatten(expect));
  }

  SUBCASE("adaptive noise std per component tracks its lambda") {
    ParamSet zero(d, d2);  // zero params -> output is pure noise
    BudgetPlan plan = default_plan();
    Rng rng(11);
    ParamSet out = perturb(zero, plan, rng);
    Vec flat = flatten(out);
    auto spans = component_spans(d, d2);
    for (ComponentTag tag : kAllComponents) {
      auto [b, e] = spans[static_cast<int>(tag)];
      double sq = 0.0;
      for (std::size_t i = b; i < e; ++i) sq += flat[i] * flat[i];
      double std_hat = std::sqrt(sq / (e - b));
      double expect = noise_scale(tag, plan) * std::sqrt(2.0);
      CHECK(std_hat == doctest::Approx(expect).epsilon(0.2));
    }
  }

  SUBCASE("equal budget endpoints make adaptive and fixed agree") {
    ParamSet ps(d, d2);
    Rng init(5);
    for (auto& view : ps.views())
      for (std::size_t i = 0; i < view.size; ++i)
        view.data[i] = 0.3 * init.gauss();
    BudgetPlan adaptive = default_plan();
    adaptive.eps_min = adaptive.eps_max = 40.0;
    BudgetPlan fixed = default_plan(PrivacyMode::kFixed);
    fixed.fixed_lambda = 0.025;
    Rng r1(9), r2(9);
    CHECK(flatten(perturb(ps, adaptive, r1)) ==
          flatten(perturb(ps, fixed, r2)));
  }

  SUBCASE("gaussian baseline yields finite perturbed params") {
    ParamSet zero(d, d2);
    BudgetPlan plan = default_plan(PrivacyMode::kGaussian);
    plan.gaussian_sigma = gaussian_sigma_for(0.025);
    Rng rng(13);
    Vec flat = flatten(perturb(zero, plan, rng));
    double sq = 0.0;
    for (double v : flat) {
      CHECK(std::isfinite(v));
      sq += v * v;
    }
    double std_hat = std::sqrt(sq / flat.size());
    CHECK(std_hat == doctest::Approx(plan.gaussian_sigma).epsilon(0.1));
  }

  SUBCASE("deterministic per rng seed") {
    ParamSet ps(d, d2);
    BudgetPlan plan = default_plan();
    Rng r1(21), r2(21);
    CHECK(flatten(perturb(ps, plan, r1)) == flatten(perturb(ps, plan, r2)));
  }
}

TEST_CASE("BudgetPlan validation and mode names") {
  BudgetPlan plan = default_plan();
  CHECK_NOTHROW(plan.validate());
  plan.eps_min = 60.0;
  plan.eps_max = 30.0;
  CHECK_THROWS(plan.validate());
  plan = default_plan();
  plan.delta = -0.1;
  CHECK_THROWS(plan.validate());
  plan = default_plan(PrivacyMode::kFixed);
  plan.fixed_lambda = 0.0;
  CHECK_THROWS(plan.validate());

  CHECK(privacy_mode_from_name("adaptive") == PrivacyMode::kAdaptive);
  CHECK(privacy_mode_from_name(privacy_mode_name(PrivacyMode::kGaussian)) ==
        PrivacyMode::kGaussian);
  CHECK_THROWS(privacy_mode_from_name("bogus"));
}
