#pragma once

// Central finite-difference gradient checking for tape operations.

#include "kgrec/error.hpp"
#include "kgrec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace kgrec::testing {

using nn::Matrix;
using nn::Tape;
using nn::Var;

/// Builds the function under test on a fresh tape from leaf variables.
using TapeFn = std::function<Var(Tape&, std::span<const Var>)>;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

struct GradCheckResult {
  /// Largest per-input ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-8).
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// Scalar objective evaluated directly on input values.
using ValueFn = std::function<double(const std::vector<Matrix>&)>;

/// Compares the tape gradient of `f` with central differences of `value`.
/// Non-scalar outputs of `f` are contracted with a fixed random weight
/// matrix; `value` must apply the same contraction (see gradcheck()).
inline GradCheckResult gradcheck_against(const TapeFn& f, const ValueFn& value,
                                         const std::vector<Matrix>& inputs, double h = 1e-6) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.variable(x));
  Var loss = f(tape, leaves);
  if (loss.rows() != 1 || loss.cols() != 1) throw ContractError("gradcheck_against needs a scalar");
  tape.backward(loss);

  GradCheckResult res;
  std::vector<Matrix> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matrix analytic = leaves[i].grad();
    if (analytic.size() == 0) analytic = Matrix::Zero(inputs[i].rows(), inputs[i].cols());
    Matrix numeric(inputs[i].rows(), inputs[i].cols());
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      const double x0 = inputs[i].data()[k];
      probe[i].data()[k] = x0 + h;
      const double up = value(probe);
      probe[i].data()[k] = x0 - h;
      const double down = value(probe);
      probe[i].data()[k] = x0;
      numeric.data()[k] = (up - down) / (2.0 * h);
    }
    const double diff = (analytic - numeric).norm();
    const double denom = std::max(analytic.norm() + numeric.norm(), 1e-8);
    res.max_rel_error = std::max(res.max_rel_error, diff / denom);
    res.max_abs_error = std::max(res.max_abs_error, (analytic - numeric).cwiseAbs().maxCoeff());
  }
  return res;
}

/// Tape gradient of `f` against central differences of its own forward
/// values. Non-scalar outputs are contracted with a fixed random weight
/// matrix so every output entry contributes.
inline GradCheckResult gradcheck(const TapeFn& f, const std::vector<Matrix>& inputs, double h = 1e-6,
                                 std::uint64_t projection_seed = 99) {
  auto contracted = [f, projection_seed](Tape& tape, std::span<const Var> xs) -> Var {
    Var out = f(tape, xs);
    if (out.rows() == 1 && out.cols() == 1) return out;
    std::mt19937_64 prng(projection_seed);
    return nn::sum(nn::mul(out, tape.constant(random_matrix(out.rows(), out.cols(), prng))));
  };
  auto value = [&contracted](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.constant(x));
    return contracted(tape, leaves).scalar();
  };
  return gradcheck_against(contracted, value, inputs, h);
}

/// Relative error < 1e-4, the pinned gradient tolerance.
inline constexpr double kGradTolerance = 1e-4;

}  // namespace kgrec::testing
