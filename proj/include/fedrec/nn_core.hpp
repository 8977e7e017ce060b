#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fedrec/linalg.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

struct DenseLayer {
  Mat weights;  // out x in
  Vec bias;     // out

  DenseLayer() = default;
  DenseLayer(std::size_t out, std::size_t in)
      : weights(out, in), bias(out, 0.0) {}
  std::size_t out_dim() const { return weights.rows; }
  std::size_t in_dim() const { return weights.cols; }
};

// y = W x + b
void dense_forward(const DenseLayer& layer, const Vec& x, Vec& y);

inline double relu(double v) { return v > 0.0 ? v : 0.0; }
void relu(const Vec& x, Vec& y);

// Overflow-safe logistic.
inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return p;
}

// -[r log p + (1-r) log(1-p)] with p clamped away from {0,1}.
inline double bce_loss(double r_hat, int r) {
  double p = clamp_prob(r_hat);
  return r == 1 ? -std::log(p) : -std::log(1.0 - p);
}

// theta -= mu * g, applied to a flat view of parameter/gradient blocks.
struct ParamView {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

void sgd_step(const std::vector<ParamView>& params,
              const std::vector<ParamView>& grads, double mu);

// Central finite-difference check of analytic gradients. `loss` must
// evaluate the objective at the current parameter values; `grads` must
// already hold the analytic gradient of that objective. Returns max
// relative error per block (absolute floor 1e-6).
struct GradCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
};
struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double max_rel_error = 0.0;
  std::string worst_block;
};

GradCheckReport finite_diff_check(const std::vector<ParamView>& params,
                                  const std::vector<ParamView>& grads,
                                  const std::function<double()>& loss,
                                  double h = 1e-4);

}  // namespace fedrec
