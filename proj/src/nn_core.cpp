#include "fedrec/nn_core.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedrec {

void dense_forward(const DenseLayer& layer, const Vec& x, Vec& y) {
  matvec(layer.weights, x, y);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.bias[i];
}

void relu(const Vec& x, Vec& y) {
  y.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = relu(x[i]);
}

void sgd_step(const std::vector<ParamView>& params,
              const std::vector<ParamView>& grads, double mu) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd_step: block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size != grads[b].size)
      throw std::invalid_argument("sgd_step: block shape mismatch");
    double* p = params[b].data;
    const double* g = grads[b].data;
    for (std::size_t i = 0; i < params[b].size; ++i) p[i] -= mu * g[i];
  }
}

GradCheckReport finite_diff_check(const std::vector<ParamView>& params,
                                  const std::vector<ParamView>& grads,
                                  const std::function<double()>& loss,
                                  double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h <= 0");
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    GradCheckBlock block;
    block.name = params[b].name;
    for (std::size_t i = 0; i < params[b].size; ++i) {
      double& theta = params[b].data[i];
      const double orig = theta;
      theta = orig + h;
      double lp = loss();
      theta = orig - h;
      double lm = loss();
      theta = orig;
      double numeric = (lp - lm) / (2.0 * h);
      double analytic = grads[b].data[i];
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      block.max_rel_error =
          std::max(block.max_rel_error, std::abs(numeric - analytic) / denom);
    }
    if (block.max_rel_error > report.max_rel_error) {
      report.max_rel_error = block.max_rel_error;
      report.worst_block = block.name;
    }
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace fedrec
