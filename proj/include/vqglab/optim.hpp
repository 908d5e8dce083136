#pragma once

#include <vector>

namespace vqglab {

// cache <- rho*cache + (1-rho)*g^2;  param <- param - lr*g/(sqrt(cache)+eps)
void rmsprop_update(std::vector<double>& param, const std::vector<double>& grad,
                    std::vector<double>& cache, double lr, double rho, double epsilon);

// One running-squared-gradient cache per registered slot.
class RmsProp {
 public:
  RmsProp(double lr, double rho, double epsilon) : lr_(lr), rho_(rho), eps_(epsilon) {}

  void step(int slot, std::vector<double>& param, const std::vector<double>& grad);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  void scale_lr(double factor) { lr_ *= factor; }

 private:
  double lr_, rho_, eps_;
  std::vector<std::vector<double>> caches_;
};

// exp(ln(0.1)/(a*b)): applying it a*b times divides the rate by 10
double lr_decay_factor(double a, double b);

// Scales gradients in place so their global L2 norm is at most `limit`
// (no-op when limit <= 0 or the norm is already within it).
void clip_global_norm(std::vector<std::vector<double>*> grads, double limit);

}  // namespace vqglab
