#pragma once

// Comparison tables and static plots from run reports, metrics, sweeps, and
// bench results. The table carries relative-improvement columns against the
// first (baseline) row.

#include "ppgkd/evalbench.hpp"
#include "ppgkd/plot.hpp"
#include "ppgkd/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ppgkd {

struct ReportRow {
  std::string name;
  Metrics metrics;
};

struct NamedRunReport {
  std::string name;
  RunReport report;
};

struct SweepSeries {
  std::string param;        // swept hyperparameter name
  std::string metric_name;  // e.g. "mae" or "f1"
  std::vector<std::pair<double, double>> points;  // (value, metric)
};

struct NamedBench {
  std::string name;
  BenchResult result;
};

struct ReportData {
  std::vector<ReportRow> rows;
  std::vector<NamedRunReport> runs;
  std::vector<SweepSeries> sweeps;
  std::vector<NamedBench> bench;
};

namespace detail {

inline std::string sanitize_name(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  return out.empty() ? std::string("unnamed") : out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// improvement vs baseline: (baseline - value)/baseline when lower is better,
// (value - baseline)/baseline when higher is better; printed as "+xx.xx%".
inline std::string fmt_improvement(double baseline, double value, bool lower_better) {
  if (baseline == 0.0) return "n/a";
  const double frac = lower_better ? (baseline - value) / baseline
                                   : (value - baseline) / baseline;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+.2f%%", 100.0 * frac);
  return buf;
}

}  // namespace detail

// Writes table.csv plus PNG plots under out_dir; returns the written paths.
inline std::vector<std::string> emit_report(const ReportData& data,
                                            const std::string& out_dir) {
  if (data.rows.empty() && data.runs.empty() && data.sweeps.empty() &&
      data.bench.empty())
    throw std::invalid_argument("emit_report: no input records");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::vector<std::string> written;

  if (!data.rows.empty()) {
    const std::string path = out_dir + "/table.csv";
    std::ofstream out(path, std::ios::trunc);
    if (!out)
      throw IoError(IoError::Kind::open_failed, "emit_report: cannot open " + path);
    const bool regression = data.rows.front().metrics.task == TaskType::regression;
    const bool with_improvement = data.rows.size() > 1;
    out << "name," << (regression ? "mse,mae" : "accuracy,f1");
    if (with_improvement)
      out << (regression ? ",mse_improvement,mae_improvement"
                         : ",accuracy_improvement,f1_improvement");
    out << "\n";
    const Metrics& base = data.rows.front().metrics;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      const Metrics& m = data.rows[i].metrics;
      const double a = regression ? m.mse : m.accuracy;
      const double b = regression ? m.mae : m.f1;
      out << data.rows[i].name << "," << detail::fmt_double(a) << ","
          << detail::fmt_double(b);
      if (with_improvement) {
        if (i == 0) {
          out << ",baseline,baseline";
        } else {
          const double ba = regression ? base.mse : base.accuracy;
          const double bb = regression ? base.mae : base.f1;
          out << "," << detail::fmt_improvement(ba, a, regression) << ","
              << detail::fmt_improvement(bb, b, regression);
        }
      }
      out << "\n";
    }
    out << "# improvement = (baseline-value)/baseline for lower-is-better "
           "metrics, (value-baseline)/baseline for higher-is-better; computed "
           "from unrounded values\n";
    written.push_back(path);
  }

  for (const auto& run : data.runs) {
    std::vector<plot::Series> series(6);
    const char* names[6] = {"sup", "kd_pred", "kd_feat", "mor", "rhy", "total"};
    for (int s = 0; s < 6; ++s) series[static_cast<std::size_t>(s)].name = names[s];
    for (std::size_t e = 0; e < run.report.epochs.size(); ++e) {
      const LossBreakdown& l = run.report.epochs[e].losses;
      const double vals[6] = {l.sup, l.kd_pred, l.kd_feat, l.mor, l.rhy, l.total};
      for (int s = 0; s < 6; ++s) {
        series[static_cast<std::size_t>(s)].xs.push_back(static_cast<double>(e));
        series[static_cast<std::size_t>(s)].ys.push_back(vals[s]);
      }
    }
    const std::string path =
        out_dir + "/loss_curves_" + detail::sanitize_name(run.name) + ".png";
    plot::render_chart("loss components: " + run.name, "epoch", "loss", series)
        .save_png(path);
    written.push_back(path);
  }

  for (const auto& sweep : data.sweeps) {
    plot::Series s;
    s.name = sweep.metric_name;
    for (const auto& [v, m] : sweep.points) {
      s.xs.push_back(v);
      s.ys.push_back(m);
    }
    const std::string path =
        out_dir + "/sweep_" + detail::sanitize_name(sweep.param) + ".png";
    plot::render_chart(sweep.metric_name + " vs " + sweep.param, sweep.param,
                       sweep.metric_name, {s})
        .save_png(path);
    written.push_back(path);
  }

  if (!data.bench.empty()) {
    std::vector<plot::Series> series;
    for (const auto& nb : data.bench) {
      plot::Series s;
      s.name = nb.name;
      s.points_only = true;
      s.xs.push_back(static_cast<double>(nb.result.param_count));
      s.ys.push_back(nb.result.batches_per_second);
      series.push_back(std::move(s));
    }
    const std::string path = out_dir + "/efficiency_scatter.png";
    plot::render_chart("throughput vs parameters", "parameters", "batches/s",
                       series)
        .save_png(path);
    written.push_back(path);
  }

  return written;
}

}  // namespace ppgkd
