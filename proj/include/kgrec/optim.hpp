#pragma once

#include "kgrec/tensor.hpp"

#include <vector>

namespace kgrec::nn {

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  Real clip_norm = 0.0;
};

/// Adam with bias correction over a fixed set of parameters.
///
/// step() consumes the gradients accumulated in each Parameter::grad and
/// zeroes them. A step whose gradients contain NaN/Inf is skipped: the
/// parameters and moments are left untouched and skipped() is incremented.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  bool step();
  void zero_grad();

  void set_lr(Real lr) { cfg_.lr = lr; }
  Real lr() const { return cfg_.lr; }
  long steps() const { return t_; }
  long skipped() const { return skipped_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamConfig cfg_;
  long t_ = 0;
  long skipped_ = 0;
};

}  // namespace kgrec::nn
