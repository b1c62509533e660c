#pragma once

// Task metrics (MSE/MAE, accuracy/F1) and the inference throughput bench.

#include "ppgkd/datagen.hpp"
#include "ppgkd/model.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ppgkd {

struct Metrics {
  TaskType task = TaskType::regression;
  double mse = 0.0;
  double mae = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

inline Metrics regression_metrics(const std::vector<double>& preds,
                                  const std::vector<double>& targets) {
  if (preds.size() != targets.size() || preds.empty())
    throw std::invalid_argument("regression_metrics: size mismatch");
  Metrics m;
  m.task = TaskType::regression;
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - targets[i];
    se += d * d;
    ae += std::fabs(d);
  }
  m.mse = se / static_cast<double>(preds.size());
  m.mae = ae / static_cast<double>(preds.size());
  return m;
}

// Binary classification; F1 is the positive-class (class 1) F1 and defined
// as 0 when precision + recall is 0.
inline Metrics classification_metrics(const std::vector<int>& preds,
                                      const std::vector<int>& targets) {
  if (preds.size() != targets.size() || preds.empty())
    throw std::invalid_argument("classification_metrics: size mismatch");
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == 1, t = targets[i] == 1;
    if (p && t)
      ++tp;
    else if (p && !t)
      ++fp;
    else if (!p && t)
      ++fn;
    else
      ++tn;
  }
  Metrics m;
  m.task = TaskType::classification;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(preds.size());
  const double prec = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
  const double rec = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
  m.f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  return m;
}

// Validation metric used for model selection: MAE (lower better) for
// regression, F1 (higher better) for classification.
inline double selection_metric(const Metrics& m) {
  return m.task == TaskType::regression ? m.mae : m.f1;
}

template <class S>
void batch_from_records(const Dataset& ds, const std::vector<int>& idx,
                        ad::Mat<S>& signals, ad::Mat<S>& value_targets,
                        std::vector<int>& class_targets) {
  const auto len = static_cast<Eigen::Index>(ds.signal_len());
  signals.resize(static_cast<Eigen::Index>(idx.size()), len);
  if (ds.task == TaskType::regression)
    value_targets.resize(static_cast<Eigen::Index>(idx.size()), 1);
  class_targets.clear();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& rec = ds.records[static_cast<std::size_t>(idx[r])];
    for (Eigen::Index j = 0; j < len; ++j)
      signals(static_cast<Eigen::Index>(r), j) =
          static_cast<S>(rec.samples[static_cast<std::size_t>(j)]);
    if (ds.task == TaskType::regression)
      value_targets(static_cast<Eigen::Index>(r), 0) = static_cast<S>(rec.label);
    else
      class_targets.push_back(static_cast<int>(rec.label));
  }
}

template <class S>
Metrics evaluate_on(Model<S>& model, const Dataset& ds,
                    const std::vector<int>& idx, int batch_size = 256) {
  if (idx.empty()) throw std::invalid_argument("evaluate: no records");
  const bool regression = ds.task == TaskType::regression;
  if ((model.config().head == HeadType::regression) != regression)
    throw std::invalid_argument("evaluate: model head does not match dataset task");

  std::vector<double> rp, rt;
  std::vector<int> cp, ct;
  ad::Mat<S> signals, vt;
  std::vector<int> klass;
  for (std::size_t start = 0; start < idx.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop =
        std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<int> chunk(idx.begin() + static_cast<std::ptrdiff_t>(start),
                           idx.begin() + static_cast<std::ptrdiff_t>(stop));
    batch_from_records<S>(ds, chunk, signals, vt, klass);
    BatchOutput<S> out = model.forward(signals);
    if (!out.prediction.allFinite())
      throw std::runtime_error("evaluate: non-finite model output");
    for (Eigen::Index r = 0; r < out.prediction.rows(); ++r) {
      if (regression) {
        rp.push_back(static_cast<double>(out.prediction(r, 0)));
        rt.push_back(static_cast<double>(vt(r, 0)));
      } else {
        Eigen::Index best = 0;
        out.prediction.row(r).maxCoeff(&best);
        cp.push_back(static_cast<int>(best));
        ct.push_back(klass[static_cast<std::size_t>(r)]);
      }
    }
  }
  return regression ? regression_metrics(rp, rt) : classification_metrics(cp, ct);
}

template <class S>
Metrics evaluate(Model<S>& model, const Dataset& ds, int batch_size = 256) {
  std::vector<int> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return evaluate_on(model, ds, idx, batch_size);
}

// ---- throughput --------------------------------------------------------------

struct BenchResult {
  double batches_per_second = 0.0;
  int batch_size = 0;
  int warmup_batches = 0;
  int measured_batches = 0;
  std::int64_t param_count = 0;
};

// Times forward passes on a fixed random input with a monotonic clock;
// warmup passes are excluded from the measurement.
template <class S>
BenchResult bench_throughput(Model<S>& model, int batch_size, int warmup_batches,
                             int measured_batches, std::uint64_t input_seed = 42) {
  if (batch_size < 1 || warmup_batches < 0 || measured_batches < 1)
    throw std::invalid_argument("bench_throughput: bad batch counts");
  Rng rng(derive_seed(input_seed, "bench-input"));
  ad::Mat<S> input(batch_size, model.config().input_len);
  for (Eigen::Index i = 0; i < input.rows(); ++i)
    for (Eigen::Index j = 0; j < input.cols(); ++j)
      input(i, j) = static_cast<S>(rng.normal());

  for (int i = 0; i < warmup_batches; ++i) (void)model.forward(input);

  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < measured_batches; ++i) (void)model.forward(input);
  const auto stop = std::chrono::steady_clock::now();
  double elapsed = std::chrono::duration<double>(stop - start).count();
  if (elapsed <= 0.0) elapsed = 1e-9;

  BenchResult r;
  r.batches_per_second = static_cast<double>(measured_batches) / elapsed;
  r.batch_size = batch_size;
  r.warmup_batches = warmup_batches;
  r.measured_batches = measured_batches;
  r.param_count = count_params(model);
  return r;
}

}  // namespace ppgkd
