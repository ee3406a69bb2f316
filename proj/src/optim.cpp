#include "kgrec/optim.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace kgrec::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) p->zero_grad();
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->grad.setZero();
}

bool Adam::step() {
  double sq = 0.0;
  for (Parameter* p : params_) {
    if (!p->grad.allFinite()) {
      ++skipped_;
      spdlog::warn("adam: non-finite gradient in '{}', skipping step ({} skipped so far)",
                   p->name, skipped_);
      zero_grad();
      return false;
    }
    sq += p->grad.squaredNorm();
  }
  Real factor = 1.0;
  if (cfg_.clip_norm > 0.0) {
    const Real norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) factor = cfg_.clip_norm / norm;
  }
  ++t_;
  const Real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const Matrix g = p.grad * factor;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.value.array() -= cfg_.lr * (m_[i].array() / bc1) /
                       ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    p.grad.setZero();
  }
  return true;
}

}  // namespace kgrec::nn
