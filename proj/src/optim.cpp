#include "vqglab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vqglab {

void rmsprop_update(std::vector<double>& param, const std::vector<double>& grad,
                    std::vector<double>& cache, double lr, double rho, double epsilon) {
  if (param.size() != grad.size()) {
    throw std::invalid_argument("rmsprop_step: parameter has " + std::to_string(param.size()) +
                                " entries, gradient has " + std::to_string(grad.size()));
  }
  if (cache.size() != param.size()) cache.assign(param.size(), 0.0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    cache[i] = rho * cache[i] + (1.0 - rho) * grad[i] * grad[i];
    param[i] -= lr * grad[i] / (std::sqrt(cache[i]) + epsilon);
  }
}

void RmsProp::step(int slot, std::vector<double>& param, const std::vector<double>& grad) {
  if (slot < 0) throw std::invalid_argument("RmsProp::step: negative slot");
  if (static_cast<std::size_t>(slot) >= caches_.size()) {
    caches_.resize(static_cast<std::size_t>(slot) + 1);
  }
  rmsprop_update(param, grad, caches_[static_cast<std::size_t>(slot)], lr_, rho_, eps_);
}

double lr_decay_factor(double a, double b) {
  if (a * b == 0.0) throw std::invalid_argument("lr_decay: a*b must be nonzero");
  return std::exp(std::log(0.1) / (a * b));
}

void clip_global_norm(std::vector<std::vector<double>*> grads, double limit) {
  if (limit <= 0.0) return;
  double sq = 0.0;
  for (const auto* g : grads)
    for (double v : *g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= limit) return;
  const double s = limit / norm;
  for (auto* g : grads)
    for (double& v : *g) v *= s;
}

}  // namespace vqglab
