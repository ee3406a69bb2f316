#pragma once

// Dense 2-D tensors with a reverse-mode gradient tape.
//
// Every value is a row-major matrix of doubles; vectors are 1xN or Nx1.
// A Tape records operations in creation order, which is already a
// topological order, so backward() is a single reverse sweep.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kgrec::nn {

using Real = double;
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<Real, Eigen::RowMajor>;
using Rng = std::mt19937_64;

std::string shape_str(const Matrix& m);

/// Keeps freed tape buffers inside the heap instead of returning them to the
/// OS after every step (glibc only; no-op elsewhere). Call once per process.
void tune_allocator();
bool all_finite(const Matrix& m);

/// A named trainable matrix living outside any tape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v);
  void zero_grad();
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialised parameter.
Parameter make_uniform(std::string name, Eigen::Index rows, Eigen::Index cols,
                       Eigen::Index fan_in, Rng& rng);

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Gradient after Tape::backward. Empty if no gradient reached this node.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Real scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called with the node's own output value and its incoming gradient.
  using Backward = std::function<void(Tape&, const Matrix& out, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix v);
  /// Leaf that requires grad; its gradient stays on the tape.
  Var variable(Matrix v);
  /// Leaf bound to a Parameter; backward() accumulates into p.grad.
  Var parameter(Parameter& p);

  /// Runs the reverse sweep from a 1x1 loss. Returns the number of
  /// operation nodes whose backward function was executed.
  std::size_t backward(Var loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  /// With checking on, every recorded value is scanned for NaN/Inf and a
  /// NumericalFailure naming the op is thrown on the first hit.
  void set_check_finite(bool on) { check_finite_ = on; }

  // Op-author interface.
  Var record(const char* op, Matrix value, std::initializer_list<Var> parents, Backward fn);
  Var record(const char* op, Matrix value, std::span<const Var> parents, Backward fn);
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Zero-initialised gradient buffer of node `id`, shaped like its value.
  Matrix& grad_buffer(std::size_t id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
  bool check_finite_ = false;
};

// ---- core ops -------------------------------------------------------------
// Shape mismatches throw ContractError with both shapes in the message.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// x (R x C) plus a 1 x C row added to every row.
Var add_bias(Var x, Var bias);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, Real s);
Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gamma, Var beta, Real eps = 1e-5);
/// Rows of `table` selected by `indices`; gradients scatter-add back.
Var embedding_lookup(Var table, std::span<const int> indices);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// 1x1 sum of all entries.
Var sum(Var a);
/// 1x1 mean of all entries.
Var mean(Var a);
/// R x 1 per-row sums.
Var row_sum(Var a);
/// R x 1 per-row squared Euclidean distances between a and b.
Var squared_distance(Var a, Var b);
/// Mean over rows of -log softmax(logits)[row, target].
Var cross_entropy(Var logits, std::span<const int> targets);
/// Mean binary cross-entropy of probabilities (R x 1) against 0/1 labels.
/// Probabilities are clamped to [clamp, 1 - clamp] before the log.
Var binary_cross_entropy(Var probs, std::span<const Real> labels, Real clamp = 1e-7);
/// Forward identity, no gradient to the input.
Var stop_gradient(Var a);
/// Sparse-dense product A * x with a constant sparse A.
Var spmm(const SparseMatrix& a, Var x);
/// Multi-head causal self-attention on a fused T x 3D [Q | K | V] block.
/// Returns the T x D concatenation of per-head outputs.
Var causal_self_attention(Var qkv, int n_heads);
/// Inverted dropout; identity when p == 0.
Var dropout(Var a, Real p, Rng& rng);

/// Post-softmax attention weights of one head, for inspection.
Matrix attention_weights(const Matrix& qkv, int n_heads, int head);

}  // namespace kgrec::nn
