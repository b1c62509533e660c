#pragma once

// The joint distillation objective:
//
//   total = sup + alpha * kd_pred + beta * kd_feat + gamma * (mor + rhy)
//
// sup      - MAE (regression) or cross-entropy (classification) on labels
// kd_pred  - MSE to the teacher prediction (regression) or temperature-
//            softened KL divergence scaled by T^2 (classification)
// kd_feat  - MSE between the adapter-projected teacher pooled feature and
//            the student pooled feature
// mor      - per-sequence InfoNCE over row-normalized patch features, one
//            positive per row, intra-sequence negatives, temperature tau
// rhy      - smooth-L1 between mean-normalized pairwise patch distance
//            matrices of student and adapter-projected teacher
//
// Teacher quantities enter as constants; gradients reach the student and the
// adapter only.

#include "ppgkd/model.hpp"
#include "ppgkd/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ppgkd {

struct DistillConfig {
  double alpha = 0.5;        // prediction-KD weight
  double beta = 0.1;         // feature-KD weight
  double gamma = 1.0;        // patch-level (morphology + rhythm) weight
  double tau = 2.0;          // morphology InfoNCE temperature
  double pred_kd_temp = 2.0; // classification prediction-KD temperature
  double smooth_l1_beta = 1.0;
  int patch_len = 40;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0)
      throw std::invalid_argument("DistillConfig: weights must be >= 0");
    if (!(tau > 0)) throw std::invalid_argument("DistillConfig: tau must be > 0");
    if (!(pred_kd_temp > 0))
      throw std::invalid_argument("DistillConfig: pred_kd_temp must be > 0");
    if (!(smooth_l1_beta > 0))
      throw std::invalid_argument("DistillConfig: smooth_l1_beta must be > 0");
  }
};

struct LossBreakdown {
  double sup = 0.0;
  double kd_pred = 0.0;
  double kd_feat = 0.0;
  double mor = 0.0;
  double rhy = 0.0;
  double total = 0.0;
};

inline double smooth_l1(double x, double y, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be > 0");
  const double r = std::fabs(x - y);
  return r < beta ? 0.5 * r * r / beta : r - 0.5 * beta;
}

// ---- supervised -------------------------------------------------------------

template <class S>
ad::Var<S> supervised_loss(const ad::Var<S>& prediction, const ad::Mat<S>& targets,
                           TaskType task) {
  if (task == TaskType::regression) {
    if (prediction.cols() != 1 || targets.cols() != 1 ||
        prediction.rows() != targets.rows())
      throw std::invalid_argument("supervised_loss: regression shape mismatch");
    return ad::mean_all(ad::abs(ad::sub(prediction, ad::Var<S>::constant(targets))));
  }
  throw std::invalid_argument("supervised_loss: matrix targets need regression task");
}

template <class S>
ad::Var<S> supervised_loss(const ad::Var<S>& logits, const std::vector<int>& targets,
                           TaskType task) {
  if (task != TaskType::classification)
    throw std::invalid_argument("supervised_loss: class targets need classification task");
  if (logits.cols() < 2)
    throw std::invalid_argument("supervised_loss: logits must have >= 2 columns");
  return ad::cross_entropy_logits(logits, targets);
}

// ---- prediction-level KD ----------------------------------------------------

template <class S>
ad::Var<S> prediction_kd_loss(const ad::Mat<S>& teacher_pred,
                              const ad::Var<S>& student_pred, TaskType task,
                              double pred_kd_temp) {
  if (teacher_pred.rows() != student_pred.rows() ||
      teacher_pred.cols() != student_pred.cols())
    throw std::invalid_argument("prediction_kd_loss: shape mismatch");
  if (task == TaskType::regression)
    return ad::mean_all(
        ad::square(ad::sub(student_pred, ad::Var<S>::constant(teacher_pred))));

  if (!(pred_kd_temp > 0))
    throw std::invalid_argument("prediction_kd_loss: temperature must be > 0");
  const S temp = static_cast<S>(pred_kd_temp);
  const Eigen::Index bsz = teacher_pred.rows(), c = teacher_pred.cols();

  // teacher side is constant: p_t = softmax(z_t / T), plus its entropy term
  ad::Mat<S> p_t(bsz, c);
  S teacher_term = S(0);
  for (Eigen::Index i = 0; i < bsz; ++i) {
    Eigen::RowVector<S, Eigen::Dynamic> z = teacher_pred.row(i) / temp;
    S mx = z.maxCoeff();
    Eigen::RowVector<S, Eigen::Dynamic> e = (z.array() - mx).exp().matrix();
    S sum = e.sum();
    p_t.row(i) = e / sum;
    for (Eigen::Index j = 0; j < c; ++j) {
      S p = p_t(i, j);
      if (p > S(0)) teacher_term += p * S(std::log(double(p)));
    }
  }

  // student side: sum_c p_t * log softmax(z_s / T)
  ad::Var<S> zs = ad::scale(student_pred, S(1) / temp);
  ad::Var<S> lse = ad::logsumexp_rows(zs);                       // Bx1
  ad::Var<S> weighted = ad::cmul(ad::Var<S>::constant(p_t), zs); // BxC
  ad::Var<S> row_dot = ad::matmul(weighted, ad::Var<S>::constant(ad::Mat<S>::Ones(c, 1)));
  // KL = mean_i [ teacher entropy term_i + lse_i - <p_t, z_s/T>_i ], times T^2
  ad::Var<S> per_row = ad::sub(lse, row_dot);  // Bx1
  ad::Var<S> kl = ad::mean_all(per_row);
  ad::Mat<S> t_term(1, 1);
  t_term(0, 0) = teacher_term / S(bsz);
  kl = ad::add(kl, ad::Var<S>::constant(t_term));
  return ad::scale(kl, temp * temp);
}

// ---- feature-level KD -------------------------------------------------------

template <class S>
ad::Var<S> feature_kd_loss(const ad::Mat<S>& teacher_pooled,
                           const ad::Var<S>& student_pooled,
                           const Adapter<S>& adapter) {
  if (teacher_pooled.cols() != adapter.weights.rows())
    throw std::invalid_argument("feature_kd_loss: teacher dim does not match adapter");
  if (adapter.weights.cols() != student_pooled.cols() ||
      teacher_pooled.rows() != student_pooled.rows())
    throw std::invalid_argument("feature_kd_loss: shape mismatch");
  ad::Var<S> projected =
      ad::matmul(ad::Var<S>::constant(teacher_pooled), adapter.weights);
  return ad::mean_all(ad::square(ad::sub(projected, student_pooled)));
}

// ---- morphology distillation (per sequence) ---------------------------------

template <class S>
ad::Var<S> morphology_loss(const ad::Var<S>& student_patches,
                           const ad::Mat<S>& teacher_patches,
                           const Adapter<S>& adapter, double tau) {
  const Eigen::Index n = student_patches.rows();
  if (n < 2)
    throw std::invalid_argument("morphology_loss: need at least 2 patches");
  if (teacher_patches.rows() != n)
    throw std::invalid_argument("morphology_loss: patch count mismatch");
  if (!(tau > 0)) throw std::invalid_argument("morphology_loss: tau must be > 0");

  ad::Var<S> t_adapted =
      ad::matmul(ad::Var<S>::constant(teacher_patches), adapter.weights);
  ad::Var<S> t_norm = ad::rows_l2_normalize(t_adapted);
  ad::Var<S> s_norm = ad::rows_l2_normalize(student_patches);
  ad::Var<S> z =
      ad::scale(ad::matmul(s_norm, ad::transpose(t_norm)), S(1.0 / tau));
  // InfoNCE with one positive per row: mean_i [ lse(Z_i) - Z_ii ]
  return ad::mean_all(ad::sub(ad::logsumexp_rows(z), ad::diag_vec(z)));
}

// ---- rhythm distillation (per sequence) --------------------------------------

template <class S>
ad::Var<S> rhythm_loss(const ad::Var<S>& student_patches,
                       const ad::Mat<S>& teacher_patches,
                       const Adapter<S>& adapter, double smooth_l1_beta) {
  const Eigen::Index n = student_patches.rows();
  if (n < 2) throw std::invalid_argument("rhythm_loss: need at least 2 patches");
  if (teacher_patches.rows() != n)
    throw std::invalid_argument("rhythm_loss: patch count mismatch");

  ad::Var<S> t_adapted =
      ad::matmul(ad::Var<S>::constant(teacher_patches), adapter.weights);
  ad::Var<S> d_s = ad::pairwise_row_distances(student_patches);
  ad::Var<S> d_t = ad::pairwise_row_distances(t_adapted);

  const S pairs = S(n * (n - 1));
  auto normalize = [&](const ad::Var<S>& d) {
    // mean over off-diagonal entries (the diagonal is zero by construction)
    ad::Var<S> mean = ad::scale(ad::sum_all(d), S(1) / pairs);
    if (!(double(mean.scalar()) > 1e-12))
      throw std::invalid_argument(
          "rhythm_loss: degenerate structure (all patch rows identical)");
    return ad::div_by_scalar(d, mean);
  };
  ad::Var<S> ds_norm = normalize(d_s);
  ad::Var<S> dt_norm = normalize(d_t);
  ad::Var<S> penalty =
      ad::smooth_l1_elem(ds_norm, dt_norm, static_cast<S>(smooth_l1_beta));
  return ad::scale(ad::sum_all(penalty), S(1) / pairs);
}

// ---- batch averaging over stacked patch features -----------------------------

// student_patches / teacher_patches hold n_blocks sequences stacked row-wise;
// the per-sequence loss is averaged (negatives stay intra-sequence).
template <class S, class PerSeq>
ad::Var<S> mean_over_blocks(const ad::Var<S>& student_patches,
                            const ad::Mat<S>& teacher_patches, int n_blocks,
                            PerSeq&& per_seq) {
  if (n_blocks < 1 || student_patches.rows() % n_blocks != 0 ||
      teacher_patches.rows() != student_patches.rows())
    throw std::invalid_argument("mean_over_blocks: bad block layout");
  const Eigen::Index n = student_patches.rows() / n_blocks;
  ad::Var<S> acc;
  for (int b = 0; b < n_blocks; ++b) {
    ad::Var<S> sb = ad::block_rows(student_patches, b * n, n);
    ad::Mat<S> tb = teacher_patches.block(b * n, 0, n, teacher_patches.cols());
    ad::Var<S> lb = per_seq(sb, tb);
    acc = b == 0 ? lb : ad::add(acc, lb);
  }
  return ad::scale(acc, S(1) / S(n_blocks));
}

template <class S>
ad::Var<S> morphology_loss_batch(const ad::Var<S>& student_patches,
                                 const ad::Mat<S>& teacher_patches, int n_blocks,
                                 const Adapter<S>& adapter, double tau) {
  return mean_over_blocks<S>(
      student_patches, teacher_patches, n_blocks,
      [&](const ad::Var<S>& sb, const ad::Mat<S>& tb) {
        return morphology_loss(sb, tb, adapter, tau);
      });
}

template <class S>
ad::Var<S> rhythm_loss_batch(const ad::Var<S>& student_patches,
                             const ad::Mat<S>& teacher_patches, int n_blocks,
                             const Adapter<S>& adapter, double smooth_l1_beta) {
  return mean_over_blocks<S>(
      student_patches, teacher_patches, n_blocks,
      [&](const ad::Var<S>& sb, const ad::Mat<S>& tb) {
        return rhythm_loss(sb, tb, adapter, smooth_l1_beta);
      });
}

// ---- joint objective ----------------------------------------------------------

// Targets for either task: regression uses `values` (Bx1), classification
// uses `classes`.
template <class S>
struct BatchTargets {
  ad::Mat<S> values;
  std::vector<int> classes;
};

template <class S>
struct TotalLoss {
  LossBreakdown breakdown;
  ad::Var<S> total;  // graph node the optimizer backpropagates through
};

template <class S>
TotalLoss<S> total_loss(const BatchOutput<S>& teacher, const ForwardResult<S>& student,
                        const BatchTargets<S>& targets, const Adapter<S>& adapter,
                        const DistillConfig& cfg, TaskType task) {
  cfg.validate();
  const bool patch_terms = cfg.gamma > 0.0;
  if (patch_terms && !student.has_patches())
    throw std::invalid_argument(
        "total_loss: gamma > 0 requires a patch-based student (MLP students "
        "support Global KD only)");
  if (patch_terms && !teacher.has_patches())
    throw std::invalid_argument(
        "total_loss: gamma > 0 requires a patch-based teacher");

  auto clamp0 = [](double v) { return v > -1e-12 && v < 0.0 ? 0.0 : v; };

  ad::Var<S> sup = task == TaskType::regression
                       ? supervised_loss(student.prediction, targets.values, task)
                       : supervised_loss(student.prediction, targets.classes, task);
  ad::Var<S> total = sup;
  LossBreakdown bk;
  bk.sup = clamp0(static_cast<double>(sup.scalar()));

  if (cfg.alpha > 0.0) {
    ad::Var<S> kd = prediction_kd_loss(teacher.prediction, student.prediction,
                                       task, cfg.pred_kd_temp);
    bk.kd_pred = clamp0(static_cast<double>(kd.scalar()));
    total = ad::add(total, ad::scale(kd, static_cast<S>(cfg.alpha)));
  }
  if (cfg.beta > 0.0) {
    ad::Var<S> kd = feature_kd_loss(teacher.pooled, student.pooled, adapter);
    bk.kd_feat = clamp0(static_cast<double>(kd.scalar()));
    total = ad::add(total, ad::scale(kd, static_cast<S>(cfg.beta)));
  }
  if (patch_terms) {
    ad::Var<S> mor = morphology_loss_batch(student.patch_features,
                                           teacher.patch_features, student.batch,
                                           adapter, cfg.tau);
    ad::Var<S> rhy = rhythm_loss_batch(student.patch_features,
                                       teacher.patch_features, student.batch,
                                       adapter, cfg.smooth_l1_beta);
    bk.mor = clamp0(static_cast<double>(mor.scalar()));
    bk.rhy = clamp0(static_cast<double>(rhy.scalar()));
    total = ad::add(total, ad::scale(ad::add(mor, rhy), static_cast<S>(cfg.gamma)));
  }

  // Reported total is recomputed in double so the additive identity holds at
  // 1e-9 regardless of the training scalar type.
  bk.total = bk.sup + cfg.alpha * bk.kd_pred + cfg.beta * bk.kd_feat +
             cfg.gamma * (bk.mor + bk.rhy);
  return TotalLoss<S>{bk, total};
}

}  // namespace ppgkd
