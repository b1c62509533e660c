#pragma once

// Minimal reverse-mode autodiff over dense Eigen matrices. A Var is a handle
// to a graph node; ops build new nodes whose closures accumulate gradients
// into their parents. Parameters are long-lived leaf nodes whose gradients
// persist across backward() calls until zero_grad().
//
// The op set is exactly what the models and distillation losses need; each
// backward is hand-derived and covered by finite-difference tests.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ppgkd::ad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// Disables graph construction within a scope (inference / benchmarking).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class S>
struct Node {
  Mat<S> value;
  Mat<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backprop;

  void add_grad(const Mat<S>& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
  void add_grad_block(Eigen::Index r0, const Mat<S>& g) {
    if (grad.size() == 0) grad = Mat<S>::Zero(value.rows(), value.cols());
    grad.block(r0, 0, g.rows(), g.cols()) += g;
  }
};

template <class S>
class Var {
 public:
  using NodeT = Node<S>;

  Var() = default;
  explicit Var(Mat<S> v, bool requires_grad = false)
      : node_(std::make_shared<NodeT>()) {
    node_->value = std::move(v);
    node_->requires_grad = requires_grad;
  }

  static Var param(Mat<S> v) { return Var(std::move(v), true); }
  static Var constant(Mat<S> v) { return Var(std::move(v), false); }

  bool defined() const { return node_ != nullptr; }
  const Mat<S>& value() const { return node_->value; }
  Mat<S>& value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  S scalar() const {
    if (node_->value.size() != 1)
      throw std::invalid_argument("scalar() on non-1x1 Var");
    return node_->value(0, 0);
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Mat<S> grad() const {
    if (!node_ || node_->grad.size() == 0)
      return Mat<S>::Zero(rows(), cols());
    return node_->grad;
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  std::shared_ptr<NodeT> node() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

namespace detail {

template <class S, class F>
Var<S> make_op(Mat<S> value, std::vector<Var<S>> parents, F&& back) {
  Var<S> out(std::move(value), false);
  if (!grad_mode()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node()->requires_grad = true;
  auto& pv = out.node()->parents;
  pv.reserve(parents.size());
  for (const auto& p : parents) pv.push_back(p.node());
  out.node()->backprop = std::forward<F>(back);
  return out;
}

}  // namespace detail

// ---- elementary ops -------------------------------------------------------

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(a.value() * b.value(), {a, b}, [an, bn](Node<S>& n) {
    if (an->requires_grad) an->add_grad(n.grad * bn->value.transpose());
    if (bn->requires_grad) bn->add_grad(an->value.transpose() * n.grad);
  });
}

template <class S>
Var<S> transpose(const Var<S>& a) {
  auto an = a.node();
  return detail::make_op<S>(a.value().transpose(), {a}, [an](Node<S>& n) {
    an->add_grad(n.grad.transpose());
  });
}

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add: shape mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(a.value() + b.value(), {a, b}, [an, bn](Node<S>& n) {
    if (an->requires_grad) an->add_grad(n.grad);
    if (bn->requires_grad) bn->add_grad(n.grad);
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("sub: shape mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(a.value() - b.value(), {a, b}, [an, bn](Node<S>& n) {
    if (an->requires_grad) an->add_grad(n.grad);
    if (bn->requires_grad) bn->add_grad(-n.grad);
  });
}

template <class S>
Var<S> cmul(const Var<S>& a, const Var<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("cmul: shape mismatch");
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(a.value().cwiseProduct(b.value()), {a, b},
                            [an, bn](Node<S>& n) {
    if (an->requires_grad) an->add_grad(n.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) bn->add_grad(n.grad.cwiseProduct(an->value));
  });
}

template <class S>
Var<S> scale(const Var<S>& a, S c) {
  auto an = a.node();
  return detail::make_op<S>(Mat<S>(a.value() * c), {a}, [an, c](Node<S>& n) {
    an->add_grad(n.grad * c);
  });
}

template <class S>
Var<S> square(const Var<S>& a) {
  auto an = a.node();
  return detail::make_op<S>(Mat<S>(a.value().array().square()), {a},
                            [an](Node<S>& n) {
    an->add_grad(Mat<S>(S(2) * n.grad.cwiseProduct(an->value)));
  });
}

template <class S>
Var<S> abs(const Var<S>& a) {
  auto an = a.node();
  return detail::make_op<S>(Mat<S>(a.value().cwiseAbs()), {a}, [an](Node<S>& n) {
    Mat<S> sign = an->value.unaryExpr(
        [](S x) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
    an->add_grad(n.grad.cwiseProduct(sign));
  });
}

// Broadcast-add a 1xd row vector to every row of a.
template <class S>
Var<S> add_rowvec(const Var<S>& a, const Var<S>& v) {
  if (v.rows() != 1 || v.cols() != a.cols())
    throw std::invalid_argument("add_rowvec: shape mismatch");
  Mat<S> out = a.value();
  out.rowwise() += v.value().row(0);
  auto an = a.node(), vn = v.node();
  return detail::make_op<S>(std::move(out), {a, v}, [an, vn](Node<S>& n) {
    if (an->requires_grad) an->add_grad(n.grad);
    if (vn->requires_grad) vn->add_grad(n.grad.colwise().sum());
  });
}

// Exact GELU: x * Phi(x). Smooth everywhere, which keeps finite-difference
// gradient checks clean.
template <class S>
Var<S> gelu(const Var<S>& a) {
  auto an = a.node();
  const S inv_sqrt2 = S(0.7071067811865475244);
  const S inv_sqrt2pi = S(0.3989422804014326779);
  Mat<S> out = a.value().unaryExpr([=](S x) {
    return S(0.5) * x * (S(1) + S(std::erf(double(x) * double(inv_sqrt2))));
  });
  return detail::make_op<S>(std::move(out), {a},
                            [an, inv_sqrt2, inv_sqrt2pi](Node<S>& n) {
    Mat<S> d = an->value.unaryExpr([=](S x) {
      S phi = S(0.5) * (S(1) + S(std::erf(double(x) * double(inv_sqrt2))));
      S pdf = inv_sqrt2pi * S(std::exp(-0.5 * double(x) * double(x)));
      return phi + x * pdf;
    });
    an->add_grad(n.grad.cwiseProduct(d));
  });
}

// Row-wise layer normalization with learned gain/bias (1xd each).
template <class S>
Var<S> layer_norm_rows(const Var<S>& a, const Var<S>& gain, const Var<S>& bias,
                       S eps = S(1e-5)) {
  const Eigen::Index m = a.rows(), d = a.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw std::invalid_argument("layer_norm_rows: gain/bias shape mismatch");
  Mat<S> xhat(m, d);
  Mat<S> inv_std(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    S mu = a.value().row(i).mean();
    S var = (a.value().row(i).array() - mu).square().mean();
    S is = S(1) / S(std::sqrt(double(var + eps)));
    inv_std(i, 0) = is;
    xhat.row(i) = (a.value().row(i).array() - mu) * is;
  }
  Mat<S> out = xhat;
  for (Eigen::Index i = 0; i < m; ++i)
    out.row(i) = xhat.row(i).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  return detail::make_op<S>(std::move(out), {a, gain, bias},
                            [an, gn, bn, xhat, inv_std, d](Node<S>& n) {
    if (gn->requires_grad)
      gn->add_grad(n.grad.cwiseProduct(xhat).colwise().sum());
    if (bn->requires_grad) bn->add_grad(n.grad.colwise().sum());
    if (an->requires_grad) {
      Mat<S> da(xhat.rows(), d);
      for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
        Eigen::RowVector<S, Eigen::Dynamic> dxhat =
            n.grad.row(i).cwiseProduct(gn->value.row(0));
        S m1 = dxhat.mean();
        S m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
        da.row(i) =
            (inv_std(i, 0) * (dxhat.array() - m1 - xhat.row(i).array() * m2))
                .matrix();
      }
      an->add_grad(da);
    }
  });
}

// ---- block ops (a batch of sequences stacked row-wise) --------------------

// Adds an NxD positional table to each of the n_blocks consecutive NxD blocks.
template <class S>
Var<S> add_block_rows(const Var<S>& a, const Var<S>& table, int n_blocks) {
  const Eigen::Index n = table.rows(), d = table.cols();
  if (a.rows() != n * n_blocks || a.cols() != d)
    throw std::invalid_argument("add_block_rows: shape mismatch");
  Mat<S> out = a.value();
  for (int b = 0; b < n_blocks; ++b) out.block(b * n, 0, n, d) += table.value();
  auto an = a.node(), tn = table.node();
  return detail::make_op<S>(std::move(out), {a, table},
                            [an, tn, n, d, n_blocks](Node<S>& nd) {
    if (an->requires_grad) an->add_grad(nd.grad);
    if (tn->requires_grad) {
      Mat<S> g = Mat<S>::Zero(n, d);
      for (int b = 0; b < n_blocks; ++b) g += nd.grad.block(b * n, 0, n, d);
      tn->add_grad(g);
    }
  });
}

// Extracts rows [r0, r0+n) as its own Var.
template <class S>
Var<S> block_rows(const Var<S>& a, Eigen::Index r0, Eigen::Index n) {
  if (r0 < 0 || r0 + n > a.rows())
    throw std::invalid_argument("block_rows: out of range");
  auto an = a.node();
  return detail::make_op<S>(Mat<S>(a.value().block(r0, 0, n, a.cols())), {a},
                            [an, r0](Node<S>& nd) {
    an->add_grad_block(r0, nd.grad);
  });
}

// Mean over each consecutive block of rows: (B*N)xD -> BxD.
template <class S>
Var<S> mean_rows_per_block(const Var<S>& a, int n_blocks) {
  if (n_blocks < 1 || a.rows() % n_blocks != 0)
    throw std::invalid_argument("mean_rows_per_block: row count not divisible");
  const Eigen::Index n = a.rows() / n_blocks, d = a.cols();
  Mat<S> out(n_blocks, d);
  for (int b = 0; b < n_blocks; ++b)
    out.row(b) = a.value().block(b * n, 0, n, d).colwise().mean();
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, n, n_blocks](Node<S>& nd) {
    Mat<S> g(an->value.rows(), an->value.cols());
    for (int b = 0; b < n_blocks; ++b)
      g.block(b * n, 0, n, g.cols()) =
          (nd.grad.row(b) / S(n)).replicate(n, 1);
    an->add_grad(g);
  });
}

// Multi-head causal self-attention over n_blocks independent sequences that
// are stacked row-wise. Q, K, V are (B*N)xD; head h uses columns
// [h*dh, (h+1)*dh). Within a block, row i attends to rows 0..i of the same
// block only.
template <class S>
Var<S> causal_self_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v,
                             int n_blocks, int n_heads) {
  const Eigen::Index rows = q.rows(), d = q.cols();
  if (k.rows() != rows || v.rows() != rows || k.cols() != d || v.cols() != d)
    throw std::invalid_argument("attention: Q/K/V shape mismatch");
  if (n_blocks < 1 || rows % n_blocks != 0)
    throw std::invalid_argument("attention: bad block count");
  if (n_heads < 1 || d % n_heads != 0)
    throw std::invalid_argument("attention: head count must divide feature dim");
  const Eigen::Index n = rows / n_blocks, dh = d / n_heads;
  const S inv_scale = S(1) / S(std::sqrt(double(dh)));

  Mat<S> out(rows, d);
  auto probs = std::make_shared<std::vector<Mat<S>>>();
  probs->reserve(static_cast<std::size_t>(n_blocks) * n_heads);
  for (int b = 0; b < n_blocks; ++b) {
    for (int h = 0; h < n_heads; ++h) {
      auto qb = q.value().block(b * n, h * dh, n, dh);
      auto kb = k.value().block(b * n, h * dh, n, dh);
      auto vb = v.value().block(b * n, h * dh, n, dh);
      Mat<S> scores = qb * kb.transpose() * inv_scale;
      Mat<S> p = Mat<S>::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        S mx = scores(i, 0);
        for (Eigen::Index j = 1; j <= i; ++j) mx = std::max(mx, scores(i, j));
        S sum = S(0);
        for (Eigen::Index j = 0; j <= i; ++j) {
          p(i, j) = S(std::exp(double(scores(i, j) - mx)));
          sum += p(i, j);
        }
        for (Eigen::Index j = 0; j <= i; ++j) p(i, j) /= sum;
      }
      out.block(b * n, h * dh, n, dh) = p * vb;
      probs->push_back(std::move(p));
    }
  }

  auto qn = q.node(), kn = k.node(), vn = v.node();
  return detail::make_op<S>(std::move(out), {q, k, v},
                            [qn, kn, vn, probs, n, dh, n_blocks, n_heads,
                             inv_scale](Node<S>& nd) {
    Mat<S> dq = Mat<S>::Zero(qn->value.rows(), qn->value.cols());
    Mat<S> dk = dq, dv = dq;
    for (int b = 0; b < n_blocks; ++b) {
      for (int h = 0; h < n_heads; ++h) {
        const Mat<S>& p = (*probs)[static_cast<std::size_t>(b) * n_heads + h];
        auto qb = qn->value.block(b * n, h * dh, n, dh);
        auto kb = kn->value.block(b * n, h * dh, n, dh);
        auto vb = vn->value.block(b * n, h * dh, n, dh);
        Mat<S> dout = nd.grad.block(b * n, h * dh, n, dh);
        dv.block(b * n, h * dh, n, dh) += p.transpose() * dout;
        Mat<S> dp = dout * vb.transpose();
        // softmax backward per row (masked entries have p == 0)
        Mat<S> ds(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
          S dot = p.row(i).dot(dp.row(i));
          ds.row(i) = p.row(i).cwiseProduct(
              ((dp.row(i).array() - dot).matrix()).eval());
        }
        dq.block(b * n, h * dh, n, dh) += ds * kb * inv_scale;
        dk.block(b * n, h * dh, n, dh) += ds.transpose() * qb * inv_scale;
      }
    }
    if (qn->requires_grad) qn->add_grad(dq);
    if (kn->requires_grad) kn->add_grad(dk);
    if (vn->requires_grad) vn->add_grad(dv);
  });
}

// ---- reductions and loss building blocks ----------------------------------

template <class S>
Var<S> sum_all(const Var<S>& a) {
  auto an = a.node();
  Mat<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return detail::make_op<S>(std::move(out), {a}, [an](Node<S>& nd) {
    an->add_grad(Mat<S>::Constant(an->value.rows(), an->value.cols(),
                                  nd.grad(0, 0)));
  });
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
  auto an = a.node();
  const S inv = S(1) / S(a.value().size());
  Mat<S> out(1, 1);
  out(0, 0) = a.value().sum() * inv;
  return detail::make_op<S>(std::move(out), {a}, [an, inv](Node<S>& nd) {
    an->add_grad(Mat<S>::Constant(an->value.rows(), an->value.cols(),
                                  nd.grad(0, 0) * inv));
  });
}

// y = a / s, s a 1x1 Var.
template <class S>
Var<S> div_by_scalar(const Var<S>& a, const Var<S>& s) {
  if (s.rows() != 1 || s.cols() != 1)
    throw std::invalid_argument("div_by_scalar: divisor must be 1x1");
  const S sv = s.value()(0, 0);
  auto an = a.node(), sn = s.node();
  return detail::make_op<S>(Mat<S>(a.value() / sv), {a, s},
                            [an, sn, sv](Node<S>& nd) {
    if (an->requires_grad) an->add_grad(nd.grad / sv);
    if (sn->requires_grad) {
      Mat<S> g(1, 1);
      g(0, 0) = -(nd.grad.cwiseProduct(an->value)).sum() / (sv * sv);
      sn->add_grad(g);
    }
  });
}

// Row-wise l2 normalization. Rejects (near-)zero rows: the normalized
// direction is undefined there.
template <class S>
Var<S> rows_l2_normalize(const Var<S>& a) {
  const Eigen::Index m = a.rows();
  Mat<S> out(m, a.cols());
  Mat<S> inv_norm(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    S nrm = a.value().row(i).norm();
    if (!(double(nrm) > 1e-12))
      throw std::invalid_argument("rows_l2_normalize: zero-norm row");
    inv_norm(i, 0) = S(1) / nrm;
    out.row(i) = a.value().row(i) * inv_norm(i, 0);
  }
  auto an = a.node();
  Mat<S> y = out;
  return detail::make_op<S>(std::move(out), {a}, [an, y, inv_norm](Node<S>& nd) {
    Mat<S> da(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      S dot = nd.grad.row(i).dot(y.row(i));
      da.row(i) = (nd.grad.row(i) - dot * y.row(i)) * inv_norm(i, 0);
    }
    an->add_grad(da);
  });
}

// Pairwise Euclidean distances between rows: NxD -> NxN, zero diagonal.
// Gradient through an exactly-coincident off-diagonal pair is taken as zero.
template <class S>
Var<S> pairwise_row_distances(const Var<S>& a) {
  const Eigen::Index n = a.rows();
  Mat<S> out = Mat<S>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      S dist = (a.value().row(i) - a.value().row(j)).norm();
      out(i, j) = dist;
      out(j, i) = dist;
    }
  auto an = a.node();
  Mat<S> dcopy = out;
  return detail::make_op<S>(std::move(out), {a}, [an, dcopy](Node<S>& nd) {
    const Eigen::Index n2 = dcopy.rows();
    Mat<S> da = Mat<S>::Zero(an->value.rows(), an->value.cols());
    for (Eigen::Index i = 0; i < n2; ++i)
      for (Eigen::Index j = 0; j < n2; ++j) {
        if (i == j || !(double(dcopy(i, j)) > 1e-12)) continue;
        S g = nd.grad(i, j) / dcopy(i, j);
        auto diff = (an->value.row(i) - an->value.row(j)).eval();
        da.row(i) += g * diff;
        da.row(j) -= g * diff;
      }
    an->add_grad(da);
  });
}

// Row-wise log-sum-exp: NxM -> Nx1, computed with max stabilization.
template <class S>
Var<S> logsumexp_rows(const Var<S>& a) {
  const Eigen::Index n = a.rows();
  Mat<S> out(n, 1);
  Mat<S> soft(n, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    S mx = a.value().row(i).maxCoeff();
    Eigen::RowVector<S, Eigen::Dynamic> e =
        (a.value().row(i).array() - mx).exp().matrix();
    S sum = e.sum();
    out(i, 0) = mx + S(std::log(double(sum)));
    soft.row(i) = e / sum;
  }
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, soft](Node<S>& nd) {
    Mat<S> da(soft.rows(), soft.cols());
    for (Eigen::Index i = 0; i < soft.rows(); ++i)
      da.row(i) = nd.grad(i, 0) * soft.row(i);
    an->add_grad(da);
  });
}

template <class S>
Var<S> diag_vec(const Var<S>& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("diag_vec: not square");
  auto an = a.node();
  Mat<S> out = a.value().diagonal();
  return detail::make_op<S>(std::move(out), {a}, [an](Node<S>& nd) {
    Mat<S> g = Mat<S>::Zero(an->value.rows(), an->value.cols());
    g.diagonal() = nd.grad.col(0);
    an->add_grad(g);
  });
}

// Elementwise smooth-L1 penalty between two same-shape matrices:
// 0.5 r^2 / beta for |r| < beta, |r| - 0.5 beta otherwise, r = a - b.
template <class S>
Var<S> smooth_l1_elem(const Var<S>& a, const Var<S>& b, S beta) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("smooth_l1_elem: shape mismatch");
  if (!(beta > S(0))) throw std::invalid_argument("smooth_l1_elem: beta <= 0");
  Mat<S> r = a.value() - b.value();
  Mat<S> out = r.unaryExpr([beta](S x) {
    S ax = x < S(0) ? -x : x;
    return ax < beta ? S(0.5) * x * x / beta : ax - S(0.5) * beta;
  });
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(std::move(out), {a, b}, [an, bn, r, beta](Node<S>& nd) {
    Mat<S> d = r.unaryExpr([beta](S x) {
      if (x > beta) return S(1);
      if (x < -beta) return S(-1);
      return x / beta;
    });
    Mat<S> g = nd.grad.cwiseProduct(d);
    if (an->requires_grad) an->add_grad(g);
    if (bn->requires_grad) bn->add_grad(-g);
  });
}

// Mean cross-entropy of logits (BxC) against integer class targets.
template <class S>
Var<S> cross_entropy_logits(const Var<S>& logits, const std::vector<int>& targets) {
  const Eigen::Index bsz = logits.rows(), c = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != bsz)
    throw std::invalid_argument("cross_entropy_logits: target count mismatch");
  Mat<S> soft(bsz, c);
  S total = S(0);
  for (Eigen::Index i = 0; i < bsz; ++i) {
    int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= c)
      throw std::invalid_argument("cross_entropy_logits: target out of range");
    S mx = logits.value().row(i).maxCoeff();
    Eigen::RowVector<S, Eigen::Dynamic> e =
        (logits.value().row(i).array() - mx).exp().matrix();
    S sum = e.sum();
    soft.row(i) = e / sum;
    total += (mx + S(std::log(double(sum)))) - logits.value()(i, t);
  }
  Mat<S> out(1, 1);
  out(0, 0) = total / S(bsz);
  auto ln = logits.node();
  return detail::make_op<S>(std::move(out), {logits},
                            [ln, soft, targets](Node<S>& nd) {
    Mat<S> g = soft;
    const S inv = nd.grad(0, 0) / S(soft.rows());
    for (Eigen::Index i = 0; i < soft.rows(); ++i)
      g(i, targets[static_cast<std::size_t>(i)]) -= S(1);
    ln->add_grad(Mat<S>(g * inv));
  });
}

// ---- backward --------------------------------------------------------------

template <class S>
void backward(const Var<S>& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined Var");
  if (root.value().size() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS over grad-requiring nodes.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->add_grad(Mat<S>::Constant(1, 1, S(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

}  // namespace ppgkd::ad
