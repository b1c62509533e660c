#pragma once

// Deliberately slow reference implementations used to validate the losses
// and their gradients. Everything here is scalar loops over double-precision
// matrices and shares no code with the library's loss implementations.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>

namespace ppgkd::oracle {

using Eigen::MatrixXd;

inline MatrixXd adapt_loop(const MatrixXd& teacher, const MatrixXd& adapter) {
  if (teacher.cols() != adapter.rows())
    throw std::invalid_argument("oracle: adapter shape mismatch");
  MatrixXd out = MatrixXd::Zero(teacher.rows(), adapter.cols());
  for (Eigen::Index i = 0; i < teacher.rows(); ++i)
    for (Eigen::Index k = 0; k < adapter.cols(); ++k)
      for (Eigen::Index j = 0; j < teacher.cols(); ++j)
        out(i, k) += teacher(i, j) * adapter(j, k);
  return out;
}

inline MatrixXd normalize_rows_loop(const MatrixXd& m) {
  MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double ss = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) ss += m(i, j) * m(i, j);
    const double norm = std::sqrt(ss);
    if (!(norm > 1e-12))
      throw std::invalid_argument("oracle: zero-norm row");
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / norm;
  }
  return out;
}

inline double morphology_loss_reference(const MatrixXd& student_patches,
                                        const MatrixXd& teacher_patches,
                                        const MatrixXd& adapter_weights,
                                        double tau) {
  const Eigen::Index n = student_patches.rows();
  if (n < 2) throw std::invalid_argument("oracle: need at least 2 patches");
  if (teacher_patches.rows() != n)
    throw std::invalid_argument("oracle: patch count mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("oracle: tau must be > 0");

  const MatrixXd t_norm = normalize_rows_loop(adapt_loop(teacher_patches, adapter_weights));
  const MatrixXd s_norm = normalize_rows_loop(student_patches);

  MatrixXd z = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double dot = 0.0;
      for (Eigen::Index k = 0; k < s_norm.cols(); ++k)
        dot += s_norm(i, k) * t_norm(j, k);
      z(i, j) = dot / tau;
    }

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = z(i, 0);
    for (Eigen::Index j = 1; j < n; ++j) mx = std::max(mx, z(i, j));
    double denom = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) denom += std::exp(z(i, j) - mx);
    loss += -(z(i, i) - mx - std::log(denom));
  }
  return loss / static_cast<double>(n);
}

inline double rhythm_loss_reference(const MatrixXd& student_patches,
                                    const MatrixXd& teacher_patches,
                                    const MatrixXd& adapter_weights,
                                    double smooth_l1_beta) {
  const Eigen::Index n = student_patches.rows();
  if (n < 2) throw std::invalid_argument("oracle: need at least 2 patches");
  if (!(smooth_l1_beta > 0.0))
    throw std::invalid_argument("oracle: smooth_l1_beta must be > 0");
  const MatrixXd t_adapted = adapt_loop(teacher_patches, adapter_weights);

  auto distances = [](const MatrixXd& m) {
    const Eigen::Index rows = m.rows();
    MatrixXd d = MatrixXd::Zero(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < rows; ++j) {
        if (i == j) continue;
        double ss = 0.0;
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
          const double diff = m(i, k) - m(j, k);
          ss += diff * diff;
        }
        d(i, j) = std::sqrt(ss);
      }
    return d;
  };
  auto normalize = [n](MatrixXd d) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) mean += d(i, j);
    mean /= static_cast<double>(n * (n - 1));
    if (!(mean > 1e-12))
      throw std::invalid_argument("oracle: degenerate structure");
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) d(i, j) /= mean;
    return d;
  };

  const MatrixXd ds = normalize(distances(student_patches));
  const MatrixXd dt = normalize(distances(t_adapted));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = std::fabs(ds(i, j) - dt(i, j));
      loss += r < smooth_l1_beta ? 0.5 * r * r / smooth_l1_beta
                                 : r - 0.5 * smooth_l1_beta;
    }
  return loss / static_cast<double>(n * (n - 1));
}

// Central finite differences, one coordinate at a time, float-64.
inline MatrixXd finite_difference_grad(
    const std::function<double(const MatrixXd&)>& f, const MatrixXd& point,
    double step) {
  if (!(step > 0.0)) throw std::invalid_argument("oracle: step must be > 0");
  MatrixXd grad(point.rows(), point.cols());
  for (Eigen::Index i = 0; i < point.rows(); ++i)
    for (Eigen::Index j = 0; j < point.cols(); ++j) {
      MatrixXd hi = point, lo = point;
      hi(i, j) += step;
      lo(i, j) -= step;
      const double fhi = f(hi), flo = f(lo);
      if (!std::isfinite(fhi) || !std::isfinite(flo))
        throw std::runtime_error("oracle: non-finite evaluation");
      grad(i, j) = (fhi - flo) / (2.0 * step);
    }
  return grad;
}

}  // namespace ppgkd::oracle
