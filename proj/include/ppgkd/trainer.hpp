#pragma once

// Training: teachers from scratch (supervised only) and students distilled
// against a frozen teacher under the joint objective. Batch-level warmup +
// cosine learning-rate schedule, Adam, early stopping on the validation task
// metric, best-epoch weight retention. Everything is a pure function of
// (dataset, configs, seed).

#include "ppgkd/evalbench.hpp"
#include "ppgkd/losses.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppgkd {

struct TrainConfig {
  double lr_init = 1e-5;
  double lr_max = 1e-3;
  double eta_min = 1e-6;
  double warmup_ratio = 0.25;  // fraction of total steps
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 20;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr_init <= lr_max) || !(eta_min <= lr_max))
      throw std::invalid_argument("TrainConfig: need lr_init <= lr_max and eta_min <= lr_max");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
      throw std::invalid_argument("TrainConfig: warmup_ratio must be in [0, 1)");
    if (batch_size < 1 || max_epochs < 1 || patience < 1)
      throw std::invalid_argument("TrainConfig: counts must be positive");
  }
};

struct EpochRow {
  LossBreakdown losses;  // means over the epoch's batches
  double val_metric = 0.0;
};

struct RunReport {
  std::vector<EpochRow> epochs;
  int best_epoch = 0;  // index into epochs
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

// ---- learning-rate schedule ---------------------------------------------------

// Linear warmup from lr_init to lr_max over the first round(warmup_ratio *
// total_steps) steps, then cosine annealing to eta_min, hitting eta_min
// exactly at the final step. Phase endpoints are returned as exact values.
inline double lr_at_step(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps < 2) throw std::invalid_argument("lr_at_step: total_steps >= 2");
  if (step < 0 || step >= total_steps)
    throw std::invalid_argument("lr_at_step: step out of range");
  const long warm = std::lround(cfg.warmup_ratio * static_cast<double>(total_steps));
  if (step < warm) {
    if (step == 0) return cfg.lr_init;
    return cfg.lr_init + (cfg.lr_max - cfg.lr_init) * static_cast<double>(step) /
                             static_cast<double>(warm);
  }
  if (step == warm) return cfg.lr_max;
  if (step == total_steps - 1) return cfg.eta_min;
  const long denom = total_steps - 1 - warm;
  if (denom <= 0) return cfg.eta_min;
  const double phase = 3.14159265358979323846 * static_cast<double>(step - warm) /
                       static_cast<double>(denom);
  return cfg.eta_min + 0.5 * (cfg.lr_max - cfg.eta_min) * (1.0 + std::cos(phase));
}

// ---- early stopping -------------------------------------------------------------

enum class MetricMode { min, max };

// True iff the running best (strict improvement) is at least `patience`
// epochs old, i.e. `patience` consecutive epochs brought no improvement.
inline bool early_stop_check(const std::vector<double>& history, int patience,
                             MetricMode mode) {
  if (history.empty()) throw std::invalid_argument("early_stop_check: empty history");
  if (patience < 1) throw std::invalid_argument("early_stop_check: patience >= 1");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const bool better = mode == MetricMode::min ? history[i] < history[best]
                                                : history[i] > history[best];
    if (better) best = i;
  }
  return history.size() - 1 - best >= static_cast<std::size_t>(patience);
}

// ---- optimizer ------------------------------------------------------------------

template <class S>
class Adam {
 public:
  Adam(std::vector<ad::Var<S>> params, const TrainConfig& cfg)
      : params_(std::move(params)),
        beta1_(cfg.adam_beta1),
        beta2_(cfg.adam_beta2),
        eps_(cfg.adam_eps) {
    for (auto& p : params_)
      slots_.push_back({ad::Mat<S>::Zero(p.rows(), p.cols()),
                        ad::Mat<S>::Zero(p.rows(), p.cols())});
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ad::Mat<S> g = params_[i].grad();
      auto& [m, v] = slots_[i];
      m = static_cast<S>(beta1_) * m + static_cast<S>(1.0 - beta1_) * g;
      v = (static_cast<S>(beta2_) * v.array() +
           static_cast<S>(1.0 - beta2_) * g.array().square())
              .matrix();
      ad::Mat<S> update =
          ((m.array() / static_cast<S>(bc1)) /
           ((v.array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(eps_)))
              .matrix();
      params_[i].value() -= static_cast<S>(lr) * update;
    }
  }

 private:
  struct Slot {
    ad::Mat<S> m, v;
  };
  std::vector<ad::Var<S>> params_;
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

// ---- frozen-teacher output cache -------------------------------------------------

// The teacher is frozen during distillation, so its outputs per record are
// computed once up front and reused every epoch.
template <class S>
struct TeacherCache {
  bool has_patches = false;
  int n_patches = 0;
  Eigen::Index d_t = 0;
  std::vector<ad::Mat<S>> patch_features;  // per record, N x d_t
  ad::Mat<S> pooled;                       // records x d_t
  ad::Mat<S> predictions;                  // records x out_dim

  static TeacherCache build(Model<S>& teacher, const Dataset& ds,
                            int batch_size = 128) {
    ad::NoGradGuard ng;
    TeacherCache cache;
    const auto n = static_cast<int>(ds.size());
    cache.patch_features.resize(static_cast<std::size_t>(n));
    ad::Mat<S> signals, vt;
    std::vector<int> klass;
    for (int start = 0; start < n; start += batch_size) {
      const int stop = std::min(n, start + batch_size);
      std::vector<int> idx(static_cast<std::size_t>(stop - start));
      std::iota(idx.begin(), idx.end(), start);
      batch_from_records<S>(ds, idx, signals, vt, klass);
      BatchOutput<S> out = teacher.forward(signals);
      if (start == 0) {
        cache.has_patches = out.has_patches();
        cache.n_patches = out.n_patches;
        cache.d_t = out.pooled.cols();
        cache.pooled.resize(n, out.pooled.cols());
        cache.predictions.resize(n, out.prediction.cols());
      }
      for (int r = 0; r < stop - start; ++r) {
        cache.pooled.row(start + r) = out.pooled.row(r);
        cache.predictions.row(start + r) = out.prediction.row(r);
        if (cache.has_patches)
          cache.patch_features[static_cast<std::size_t>(start + r)] =
              out.patch_features.block(r * out.n_patches, 0, out.n_patches,
                                       out.patch_features.cols());
      }
    }
    return cache;
  }

  BatchOutput<S> gather(const std::vector<int>& idx) const {
    BatchOutput<S> out;
    const auto b = static_cast<Eigen::Index>(idx.size());
    out.batch = static_cast<int>(b);
    out.n_patches = n_patches;
    out.pooled.resize(b, pooled.cols());
    out.prediction.resize(b, predictions.cols());
    if (has_patches) out.patch_features.resize(b * n_patches, d_t);
    for (Eigen::Index r = 0; r < b; ++r) {
      const int src = idx[static_cast<std::size_t>(r)];
      out.pooled.row(r) = pooled.row(src);
      out.prediction.row(r) = predictions.row(src);
      if (has_patches)
        out.patch_features.block(r * n_patches, 0, n_patches, d_t) =
            patch_features[static_cast<std::size_t>(src)];
    }
    return out;
  }
};

// ---- training engine ---------------------------------------------------------------

template <class S>
struct TrainResult {
  std::unique_ptr<Model<S>> model;  // best-epoch weights restored
  Adapter<S> adapter;               // defined only for distillation runs
  RunReport report;
};

namespace detail {

inline void split_indices(std::size_t n, std::vector<int>& train,
                          std::vector<int>& val) {
  // fixed split: last 20% of the dataset is validation, never shuffled into
  // training
  const std::size_t n_val = n / 5;
  const std::size_t n_train = n - n_val;
  train.resize(n_train);
  std::iota(train.begin(), train.end(), 0);
  if (n_val == 0) {
    val = train;
  } else {
    val.resize(n_val);
    std::iota(val.begin(), val.end(), static_cast<int>(n_train));
  }
}

template <class S>
TrainResult<S> run_training(const Dataset& ds, const ModelConfig& model_cfg,
                            Model<S>* teacher, const TeacherCache<S>* cache,
                            const DistillConfig& dcfg, const TrainConfig& tc,
                            bool distilling) {
  tc.validate();
  model_cfg.validate();
  if (ds.records.empty()) throw std::invalid_argument("train: empty dataset");
  const bool regression = ds.task == TaskType::regression;
  if ((model_cfg.head == HeadType::regression) != regression)
    throw std::invalid_argument("train: model head does not match dataset task");
  if (static_cast<int>(ds.signal_len()) != model_cfg.input_len)
    throw std::invalid_argument("train: dataset signal length does not match model");
  if (distilling) {
    dcfg.validate();
    if (teacher->config().input_len != model_cfg.input_len)
      throw std::invalid_argument("distill: teacher/dataset shape mismatch");
    if (dcfg.gamma > 0.0) {
      if (model_cfg.family == ModelFamily::mlp)
        throw std::invalid_argument(
            "distill: gamma > 0 with an MLP student; only Global KD applies");
      if (teacher->config().family == ModelFamily::mlp)
        throw std::invalid_argument("distill: gamma > 0 needs a patch-based teacher");
      if (teacher->config().patch_len != model_cfg.patch_len)
        throw std::invalid_argument("distill: teacher and student patch_len differ");
    }
  }

  const auto t_start = std::chrono::steady_clock::now();

  TrainResult<S> result;
  Rng init_rng(derive_seed(tc.seed, "model-init"));
  result.model = make_model<S>(model_cfg, init_rng);
  Model<S>& model = *result.model;

  std::vector<int> train_idx, val_idx;
  split_indices(ds.size(), train_idx, val_idx);

  if (regression) {
    // center the regression head at the train-split label mean; raw bpm
    // targets would otherwise sit dozens of Adam steps away from the init
    double label_mean = 0.0;
    for (int i : train_idx)
      label_mean += ds.records[static_cast<std::size_t>(i)].label;
    label_mean /= static_cast<double>(train_idx.size());
    for (auto& [name, p] : model.params())
      if (name == "head.b") p.value()(0, 0) = static_cast<S>(label_mean);
  }

  std::vector<ad::Var<S>> trainable;
  for (auto& [name, p] : model.params()) trainable.push_back(p);
  if (distilling) {
    Rng a_rng(derive_seed(tc.seed, "adapter-init"));
    result.adapter =
        Adapter<S>(static_cast<int>(teacher->config().d), model_cfg.d, a_rng);
    trainable.push_back(result.adapter.weights);
  }
  Adam<S> opt(trainable, tc);

  const long batches_per_epoch =
      static_cast<long>((train_idx.size() + tc.batch_size - 1) / tc.batch_size);
  const long total_steps =
      std::max<long>(2, static_cast<long>(tc.max_epochs) * batches_per_epoch);

  const MetricMode mode = regression ? MetricMode::min : MetricMode::max;
  std::vector<double> history;
  std::vector<ad::Mat<S>> best_weights;
  ad::Mat<S> best_adapter;
  int best_epoch = 0;

  ad::Mat<S> signals, vt;
  std::vector<int> klass;
  long global_step = 0;
  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::vector<int> order = train_idx;
    Rng sh(derive_seed(tc.seed, "shuffle", static_cast<std::uint64_t>(epoch) + 1));
    sh.shuffle(order);

    LossBreakdown epoch_mean;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const std::size_t start = static_cast<std::size_t>(b) * tc.batch_size;
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(stop));
      batch_from_records<S>(ds, idx, signals, vt, klass);

      ForwardResult<S> fwd = model.forward_ad(signals);
      LossBreakdown bk;
      ad::Var<S> total;
      if (distilling) {
        BatchOutput<S> tout = cache->gather(idx);
        BatchTargets<S> targets;
        targets.values = vt;
        targets.classes = klass;
        TotalLoss<S> tl = total_loss(tout, fwd, targets, result.adapter, dcfg, ds.task);
        bk = tl.breakdown;
        total = tl.total;
      } else {
        total = regression ? supervised_loss(fwd.prediction, vt, ds.task)
                           : supervised_loss(fwd.prediction, klass, ds.task);
        bk.sup = static_cast<double>(total.scalar());
        bk.total = bk.sup;
      }
      if (!std::isfinite(bk.total))
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(b));

      opt.zero_grad();
      ad::backward(total);
      opt.step(lr_at_step(std::min(global_step, total_steps - 1), total_steps, tc));
      ++global_step;

      epoch_mean.sup += bk.sup;
      epoch_mean.kd_pred += bk.kd_pred;
      epoch_mean.kd_feat += bk.kd_feat;
      epoch_mean.mor += bk.mor;
      epoch_mean.rhy += bk.rhy;
      epoch_mean.total += bk.total;
    }
    const double inv_b = 1.0 / static_cast<double>(batches_per_epoch);
    epoch_mean.sup *= inv_b;
    epoch_mean.kd_pred *= inv_b;
    epoch_mean.kd_feat *= inv_b;
    epoch_mean.mor *= inv_b;
    epoch_mean.rhy *= inv_b;
    epoch_mean.total *= inv_b;

    const Metrics vm = evaluate_on(model, ds, val_idx, tc.batch_size);
    const double metric = selection_metric(vm);
    history.push_back(metric);
    result.report.epochs.push_back(EpochRow{epoch_mean, metric});

    const bool improved =
        history.size() == 1 ||
        (mode == MetricMode::min ? metric < history[static_cast<std::size_t>(best_epoch)]
                                 : metric > history[static_cast<std::size_t>(best_epoch)]);
    if (improved) {
      best_epoch = epoch;
      best_weights.clear();
      for (auto& [name, p] : model.params()) best_weights.push_back(p.value());
      if (distilling) best_adapter = result.adapter.weights.value();
    }
    if (early_stop_check(history, tc.patience, mode)) break;
  }

  // restore best-epoch weights
  for (std::size_t i = 0; i < best_weights.size(); ++i)
    model.params()[i].second.value() = best_weights[i];
  if (distilling && best_adapter.size() > 0)
    result.adapter.weights.value() = best_adapter;

  result.report.best_epoch = best_epoch;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

}  // namespace detail

// Trains a model from scratch on the supervised objective only.
template <class S>
TrainResult<S> train_teacher(const Dataset& ds, const ModelConfig& model_cfg,
                             const TrainConfig& tc) {
  DistillConfig unused;
  return detail::run_training<S>(ds, model_cfg, nullptr, nullptr, unused, tc, false);
}

// Distills a student against a frozen teacher; trains student + adapter.
template <class S>
TrainResult<S> distill(Model<S>& teacher, const ModelConfig& student_cfg,
                       const DistillConfig& dcfg, const TrainConfig& tc,
                       const Dataset& ds) {
  TeacherCache<S> cache = TeacherCache<S>::build(teacher, ds);
  return detail::run_training<S>(ds, student_cfg, &teacher, &cache, dcfg, tc, true);
}

// Same, with a prebuilt cache (lets several runs share one teacher pass).
template <class S>
TrainResult<S> distill_cached(Model<S>& teacher, const TeacherCache<S>& cache,
                              const ModelConfig& student_cfg,
                              const DistillConfig& dcfg, const TrainConfig& tc,
                              const Dataset& ds) {
  return detail::run_training<S>(ds, student_cfg, &teacher, &cache, dcfg, tc, true);
}

// ---- ablation sweep -----------------------------------------------------------------

struct AblationRow {
  double value = 0.0;
  double best_val_metric = 0.0;
  RunReport report;
};

enum class SweepParam { alpha, beta, gamma };

inline const char* sweep_param_name(SweepParam p) {
  switch (p) {
    case SweepParam::alpha: return "alpha";
    case SweepParam::beta: return "beta";
    default: return "gamma";
  }
}

// One distillation run per distinct grid value (duplicates collapse to one
// run), all sharing the same seeds.
template <class S>
std::vector<AblationRow> ablation_sweep(Model<S>& teacher,
                                        const ModelConfig& student_cfg,
                                        const DistillConfig& base,
                                        const TrainConfig& tc, const Dataset& ds,
                                        SweepParam param,
                                        const std::vector<double>& values) {
  std::vector<double> grid;
  for (double v : values) {
    if (v < 0.0) throw std::invalid_argument("ablation_sweep: grid values must be >= 0");
    if (std::find(grid.begin(), grid.end(), v) == grid.end()) grid.push_back(v);
  }
  std::vector<AblationRow> rows;
  if (grid.empty()) return rows;
  TeacherCache<S> cache = TeacherCache<S>::build(teacher, ds);
  for (double v : grid) {
    DistillConfig cfg = base;
    switch (param) {
      case SweepParam::alpha: cfg.alpha = v; break;
      case SweepParam::beta: cfg.beta = v; break;
      case SweepParam::gamma: cfg.gamma = v; break;
    }
    TrainResult<S> res = distill_cached(teacher, cache, student_cfg, cfg, tc, ds);
    AblationRow row;
    row.value = v;
    row.best_val_metric =
        res.report.epochs[static_cast<std::size_t>(res.report.best_epoch)].val_metric;
    row.report = std::move(res.report);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- run-report serialization ---------------------------------------------------------

// Plain text, one record per epoch:
// epoch,sup,kd_pred,kd_feat,mor,rhy,total,val_metric
inline void write_run_report_csv(const RunReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError(IoError::Kind::open_failed, "write_run_report_csv: cannot open " + path);
  out << "epoch,sup,kd_pred,kd_feat,mor,rhy,total,val_metric\n";
  char buf[320];
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const auto& row = report.epochs[e];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", e,
                  row.losses.sup, row.losses.kd_pred, row.losses.kd_feat,
                  row.losses.mor, row.losses.rhy, row.losses.total, row.val_metric);
    out << buf;
  }
}

}  // namespace ppgkd
