#include "kgrec/tensor.hpp"

#include "kgrec/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace kgrec::nn {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

Parameter make_uniform(std::string name, Eigen::Index rows, Eigen::Index cols,
                       Eigen::Index fan_in, Rng& rng) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<Real> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Parameter(std::move(name), std::move(m));
}

const Matrix& Var::value() const { return tape_->value_of(id_); }
const Matrix& Var::grad() const { return tape_->grad_of(id_); }

Real Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("scalar() on non-scalar " + shape_str(v));
  return v(0, 0);
}

// ---- tape -------------------------------------------------------------------

Var Tape::constant(Matrix v) { return record("constant", std::move(v), {}, nullptr); }

Var Tape::variable(Matrix v) {
  Var out = record("variable", std::move(v), {}, nullptr);
  nodes_[out.id()].requires_grad = true;
  return out;
}

Var Tape::parameter(Parameter& p) {
  Var out = record("parameter", p.value, {}, nullptr);
  nodes_[out.id()].requires_grad = true;
  nodes_[out.id()].param = &p;
  return out;
}

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> parents, Backward fn) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(const char* op, Matrix value, std::span<const Var> parents, Backward fn) {
  if (check_finite_ && !value.allFinite()) {
    throw NumericalFailure(std::string("non-finite value produced by ") + op + ' ' +
                           shape_str(value));
  }
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ContractError(std::string(op) + ": operand from another tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

std::size_t Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss from another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_str(loss.value()));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  grad_buffer(loss.id()).setOnes();
  std::size_t visited = 0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) n.param->grad += n.grad;
    if (n.backward) {
      // Parents always have smaller ids, so n.grad is final here.
      n.backward(*this, n.value, n.grad);
      ++visited;
    }
  }
  return visited;
}

// ---- ops --------------------------------------------------------------------

namespace {

template <typename Expr>
void accumulate(Tape& t, Var v, const Expr& g) {
  if (t.requires_grad(v.id())) t.grad_buffer(v.id()) += g;
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                      shape_str(b));
}

void require_same(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a.value(), b.value());
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an empty Var");
  return *a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return tape_of(a).record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    if (t.requires_grad(a.id())) t.grad_buffer(a.id()).noalias() += g * b.value().transpose();
    if (t.requires_grad(b.id())) t.grad_buffer(b.id()).noalias() += a.value().transpose() * g;
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return tape_of(a).record("transpose", std::move(out), {a},
                           [a](Tape& t, const Matrix&, const Matrix& g) { accumulate(t, a, g.transpose()); });
}

Var add(Var a, Var b) {
  require_same("add", a, b);
  Matrix out = a.value() + b.value();
  return tape_of(a).record("add", std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var add_bias(Var x, Var bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_fail("add_bias", x.value(), bias.value());
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return tape_of(x).record("add_bias", std::move(out), {x, bias},
                           [x, bias](Tape& t, const Matrix&, const Matrix& g) {
                             accumulate(t, x, g);
                             accumulate(t, bias, g.colwise().sum());
                           });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Matrix out = a.value() - b.value();
  return tape_of(a).record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    accumulate(t, a, g);
    accumulate(t, b, -g);
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return tape_of(a).record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix&, const Matrix& g) {
    accumulate(t, a, g.cwiseProduct(b.value()));
    accumulate(t, b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, Real s) {
  Matrix out = a.value() * s;
  return tape_of(a).record("scale", std::move(out), {a},
                           [a, s](Tape& t, const Matrix&, const Matrix& g) { accumulate(t, a, g * s); });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return tape_of(a).record("relu", std::move(out), {a}, [a](Tape& t, const Matrix&, const Matrix& g) {
    accumulate(t, a, (a.value().array() > 0.0).cast<Real>().matrix().cwiseProduct(g));
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](Real x) { return 1.0 / (1.0 + std::exp(-x)); });
  return tape_of(a).record("sigmoid", std::move(out), {a},
                           [a](Tape& t, const Matrix& y, const Matrix& g) {
                             accumulate(t, a, g.cwiseProduct(y - y.cwiseProduct(y)));
                           });
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Real m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return tape_of(a).record("softmax_rows", std::move(out), {a},
                           [a](Tape& t, const Matrix& y, const Matrix& g) {
                             const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
                             accumulate(t, a, y.cwiseProduct(g.colwise() - dots));
                           });
}

Var layer_norm(Var x, Var gamma, Var beta, Real eps) {
  const Eigen::Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n) shape_fail("layer_norm", x.value(), gamma.value());
  if (beta.rows() != 1 || beta.cols() != n) shape_fail("layer_norm", x.value(), beta.value());
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const Real mu = xv.row(r).mean();
    const Real var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu).matrix() * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return tape_of(x).record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n](
          Tape& t, const Matrix&, const Matrix& g) {
        accumulate(t, gamma, g.cwiseProduct(xhat).colwise().sum());
        accumulate(t, beta, g.colwise().sum());
        if (!t.requires_grad(x.id())) return;
        Matrix dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
        Matrix& dx = t.grad_buffer(x.id());
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
          const Real m1 = dxhat.row(r).mean();
          const Real m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<Real>(n);
          dx.row(r) += ((dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r))
                           .matrix();
        }
      });
}

Var embedding_lookup(Var table, std::span<const int> indices) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows()) {
      throw ContractError("embedding_lookup: index " + std::to_string(indices[i]) +
                          " out of range for table " + shape_str(tv));
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return tape_of(table).record("embedding_lookup", std::move(out), {table},
                               [table, idx = std::move(idx)](Tape& t, const Matrix&,
                                                             const Matrix& g) {
                                 Matrix& dt = t.grad_buffer(table.id());
                                 for (std::size_t i = 0; i < idx.size(); ++i) {
                                   dt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                                 }
                               });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape_of(parts[0]).record("concat_rows", std::move(out), parts,
                                  [ps](Tape& t, const Matrix&, const Matrix& g) {
                                    Eigen::Index off = 0;
                                    for (const Var& p : ps) {
                                      accumulate(t, p, g.middleRows(off, p.rows()));
                                      off += p.rows();
                                    }
                                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape_of(parts[0]).record("concat_cols", std::move(out), parts,
                                  [ps](Tape& t, const Matrix&, const Matrix& g) {
                                    Eigen::Index off = 0;
                                    for (const Var& p : ps) {
                                      accumulate(t, p, g.middleCols(off, p.cols()));
                                      off += p.cols();
                                    }
                                  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ContractError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                        ") outside " + shape_str(a.value()));
  }
  Matrix out = a.value().middleRows(start, count);
  return tape_of(a).record("slice_rows", std::move(out), {a},
                           [a, start, count](Tape& t, const Matrix&, const Matrix& g) {
                             t.grad_buffer(a.id()).middleRows(start, count) += g;
                           });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ContractError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                        ") outside " + shape_str(a.value()));
  }
  Matrix out = a.value().middleCols(start, count);
  return tape_of(a).record("slice_cols", std::move(out), {a},
                           [a, start, count](Tape& t, const Matrix&, const Matrix& g) {
                             t.grad_buffer(a.id()).middleCols(start, count) += g;
                           });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record("sum", std::move(out), {a},
                           [a](Tape& t, const Matrix&, const Matrix& g) {
                             t.grad_buffer(a.id()).array() += g(0, 0);
                           });
}

Var mean(Var a) {
  const Real n = static_cast<Real>(std::max<Eigen::Index>(a.value().size(), 1));
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return tape_of(a).record("mean", std::move(out), {a},
                           [a, n](Tape& t, const Matrix&, const Matrix& g) {
                             t.grad_buffer(a.id()).array() += g(0, 0) / n;
                           });
}

Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  return tape_of(a).record("row_sum", std::move(out), {a},
                           [a](Tape& t, const Matrix&, const Matrix& g) {
                             t.grad_buffer(a.id()).colwise() += g.col(0);
                           });
}

Var squared_distance(Var a, Var b) {
  require_same("squared_distance", a, b);
  Matrix diff = a.value() - b.value();
  Matrix out = diff.rowwise().squaredNorm();
  return tape_of(a).record("squared_distance", std::move(out), {a, b},
                           [a, b, diff = std::move(diff)](Tape& t, const Matrix&,
                                                          const Matrix& g) {
                             const Matrix d = 2.0 * (diff.array().colwise() * g.col(0).array());
                             accumulate(t, a, d);
                             accumulate(t, b, -d);
                           });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.rows()) {
    throw ContractError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                        shape_str(x));
  }
  Matrix probs(x.rows(), x.cols());
  Real total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int tgt = targets[static_cast<std::size_t>(r)];
    if (tgt < 0 || tgt >= x.cols()) {
      throw ContractError("cross_entropy: target " + std::to_string(tgt) + " outside " +
                          shape_str(x));
    }
    const Real m = x.row(r).maxCoeff();
    probs.row(r) = (x.row(r).array() - m).exp().matrix();
    const Real z = probs.row(r).sum();
    probs.row(r) /= z;
    total += -(x(r, tgt) - m - std::log(z));
  }
  const Real n = static_cast<Real>(std::max<Eigen::Index>(x.rows(), 1));
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<int> tg(targets.begin(), targets.end());
  return tape_of(logits).record(
      "cross_entropy", std::move(out), {logits},
      [logits, probs = std::move(probs), tg = std::move(tg), n](Tape& t, const Matrix&,
                                                               const Matrix& g) {
        Matrix d = probs;
        for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
        accumulate(t, logits, d * (g(0, 0) / n));
      });
}

Var binary_cross_entropy(Var probs, std::span<const Real> labels, Real clamp) {
  const Matrix& p = probs.value();
  if (p.cols() != 1 || static_cast<Eigen::Index>(labels.size()) != p.rows()) {
    throw ContractError("binary_cross_entropy: " + std::to_string(labels.size()) +
                        " labels for " + shape_str(p));
  }
  Real total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const Real q = std::clamp(p(r, 0), clamp, 1.0 - clamp);
    const Real y = labels[static_cast<std::size_t>(r)];
    total += -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
  }
  const Real n = static_cast<Real>(std::max<Eigen::Index>(p.rows(), 1));
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<Real> ys(labels.begin(), labels.end());
  return tape_of(probs).record(
      "binary_cross_entropy", std::move(out), {probs},
      [probs, ys = std::move(ys), clamp, n](Tape& t, const Matrix&, const Matrix& g) {
        const Matrix& pv = probs.value();
        Matrix d = Matrix::Zero(pv.rows(), 1);
        for (Eigen::Index r = 0; r < pv.rows(); ++r) {
          const Real q = pv(r, 0);
          if (q < clamp || q > 1.0 - clamp) continue;
          const Real y = ys[static_cast<std::size_t>(r)];
          d(r, 0) = (-y / q + (1.0 - y) / (1.0 - q)) * g(0, 0) / n;
        }
        accumulate(t, probs, d);
      });
}

Var stop_gradient(Var a) { return tape_of(a).constant(a.value()); }

Var spmm(const SparseMatrix& a, Var x) {
  if (a.cols() != x.rows()) {
    throw ContractError("spmm: shape mismatch [" + std::to_string(a.rows()) + 'x' +
                        std::to_string(a.cols()) + "] vs " + shape_str(x.value()));
  }
  Matrix out = a * x.value();
  return tape_of(x).record("spmm", std::move(out), {x},
                           [&a, x](Tape& t, const Matrix&, const Matrix& g) {
                             t.grad_buffer(x.id()).noalias() += a.transpose() * g;
                           });
}

namespace {

struct HeadLayout {
  Eigen::Index d_model;
  Eigen::Index d_head;
};

HeadLayout head_layout(const Matrix& qkv, int n_heads) {
  if (n_heads <= 0 || qkv.cols() % 3 != 0 || (qkv.cols() / 3) % n_heads != 0) {
    throw ContractError("causal_self_attention: " + shape_str(qkv) + " not divisible into " +
                        std::to_string(n_heads) + " heads");
  }
  const Eigen::Index d = qkv.cols() / 3;
  return {d, d / n_heads};
}

Matrix head_probs(const Matrix& qkv, const HeadLayout& lay, int h) {
  const Eigen::Index T = qkv.rows();
  const Real inv = 1.0 / std::sqrt(static_cast<Real>(lay.d_head));
  const auto q = qkv.middleCols(h * lay.d_head, lay.d_head);
  const auto k = qkv.middleCols(lay.d_model + h * lay.d_head, lay.d_head);
  Matrix s = (q * k.transpose()) * inv;
  for (Eigen::Index i = 0; i < T; ++i) {
    const Real m = s.row(i).head(i + 1).maxCoeff();
    Real z = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      s(i, j) = std::exp(s(i, j) - m);
      z += s(i, j);
    }
    s.row(i).head(i + 1) /= z;
    s.row(i).tail(T - i - 1).setZero();
  }
  return s;
}

}  // namespace

Matrix attention_weights(const Matrix& qkv, int n_heads, int head) {
  const HeadLayout lay = head_layout(qkv, n_heads);
  if (head < 0 || head >= n_heads) throw ContractError("attention_weights: bad head index");
  return head_probs(qkv, lay, head);
}

Var causal_self_attention(Var qkv, int n_heads) {
  const Matrix& x = qkv.value();
  const HeadLayout lay = head_layout(x, n_heads);
  std::vector<Matrix> probs;
  probs.reserve(static_cast<std::size_t>(n_heads));
  Matrix out(x.rows(), lay.d_model);
  for (int h = 0; h < n_heads; ++h) {
    probs.push_back(head_probs(x, lay, h));
    out.middleCols(h * lay.d_head, lay.d_head).noalias() =
        probs.back() * x.middleCols(2 * lay.d_model + h * lay.d_head, lay.d_head);
  }
  return tape_of(qkv).record(
      "causal_self_attention", std::move(out), {qkv},
      [qkv, lay, probs = std::move(probs)](Tape& t, const Matrix&, const Matrix& g) {
        const Matrix& xv = qkv.value();
        Matrix& dx = t.grad_buffer(qkv.id());
        const Real inv = 1.0 / std::sqrt(static_cast<Real>(lay.d_head));
        for (std::size_t hi = 0; hi < probs.size(); ++hi) {
          const Eigen::Index h = static_cast<Eigen::Index>(hi);
          const Matrix& p = probs[hi];
          const auto go = g.middleCols(h * lay.d_head, lay.d_head);
          const auto q = xv.middleCols(h * lay.d_head, lay.d_head);
          const auto k = xv.middleCols(lay.d_model + h * lay.d_head, lay.d_head);
          const auto v = xv.middleCols(2 * lay.d_model + h * lay.d_head, lay.d_head);
          dx.middleCols(2 * lay.d_model + h * lay.d_head, lay.d_head).noalias() +=
              p.transpose() * go;
          const Matrix dp = go * v.transpose();
          const Eigen::VectorXd dots = dp.cwiseProduct(p).rowwise().sum();
          const Matrix ds = p.cwiseProduct(dp.colwise() - dots) * inv;
          dx.middleCols(h * lay.d_head, lay.d_head).noalias() += ds * k;
          dx.middleCols(lay.d_model + h * lay.d_head, lay.d_head).noalias() +=
              ds.transpose() * q;
        }
      });
}

Var dropout(Var a, Real p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ContractError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return tape_of(a).record("dropout", std::move(out), {a},
                           [a, mask = std::move(mask)](Tape& t, const Matrix&, const Matrix& g) {
                             accumulate(t, a, g.cwiseProduct(mask));
                           });
}

}  // namespace kgrec::nn
