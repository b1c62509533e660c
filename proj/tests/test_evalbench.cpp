#include <catch2/catch.hpp>

#include "ppgkd/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace ppgkd;

namespace {

std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("ppgkd_report_" + name + "_" + std::to_string(::getpid()));
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("regression metrics", "[evalbench]") {
  Metrics m = regression_metrics({1.0, 2.0}, {1.0, 4.0});
  CHECK(m.mse == Approx(2.0).margin(1e-12));
  CHECK(m.mae == Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(regression_metrics({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("classification metrics", "[evalbench]") {
  SECTION("perfect predictions") {
    Metrics m = classification_metrics({1, 0, 1, 0}, {1, 0, 1, 0});
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SECTION("TP=2 FP=1 FN=1 TN=6") {
    std::vector<int> preds, targets;
    for (int i = 0; i < 2; ++i) { preds.push_back(1); targets.push_back(1); }
    for (int i = 0; i < 1; ++i) { preds.push_back(1); targets.push_back(0); }
    for (int i = 0; i < 1; ++i) { preds.push_back(0); targets.push_back(1); }
    for (int i = 0; i < 6; ++i) { preds.push_back(0); targets.push_back(0); }
    Metrics m = classification_metrics(preds, targets);
    CHECK(m.accuracy == Approx(0.8).margin(1e-12));
    CHECK(m.f1 == Approx(2.0 / 3.0).margin(1e-12));
  }
  SECTION("all-negative predictions give F1 = 0") {
    Metrics m = classification_metrics({0, 0, 0}, {1, 1, 0});
    CHECK(m.f1 == 0.0);
  }
}

TEST_CASE("accuracy and F1 match a confusion-matrix loop oracle on all small "
          "matrices", "[evalbench][oracle]") {
  for (int tp = 0; tp <= 10; ++tp)
    for (int fp = 0; fp <= 10; ++fp)
      for (int fn = 0; fn <= 10; ++fn)
        for (int tn = 0; tn <= 10; ++tn) {
          const int n = tp + fp + fn + tn;
          if (n == 0) continue;
          std::vector<int> preds, targets;
          for (int i = 0; i < tp; ++i) { preds.push_back(1); targets.push_back(1); }
          for (int i = 0; i < fp; ++i) { preds.push_back(1); targets.push_back(0); }
          for (int i = 0; i < fn; ++i) { preds.push_back(0); targets.push_back(1); }
          for (int i = 0; i < tn; ++i) { preds.push_back(0); targets.push_back(0); }
          Metrics m = classification_metrics(preds, targets);

          // independent loop oracle over the raw prediction/target lists
          int correct = 0, o_tp = 0, pred_pos = 0, actual_pos = 0;
          for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] == targets[i]) ++correct;
            if (preds[i] == 1 && targets[i] == 1) ++o_tp;
            if (preds[i] == 1) ++pred_pos;
            if (targets[i] == 1) ++actual_pos;
          }
          const double acc = double(correct) / double(n);
          const double prec = pred_pos > 0 ? double(o_tp) / pred_pos : 0.0;
          const double rec = actual_pos > 0 ? double(o_tp) / actual_pos : 0.0;
          const double f1 =
              prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
          REQUIRE(m.accuracy == acc);
          REQUIRE(m.f1 == f1);
          REQUIRE(m.accuracy >= 0.0);
          REQUIRE(m.accuracy <= 1.0);
          REQUIRE(m.f1 >= 0.0);
          REQUIRE(m.f1 <= 1.0);
        }
}

TEST_CASE("evaluate over a dataset", "[evalbench]") {
  Dataset ds = generate_hr_dataset(16, 60.0, 120.0, 4.0, 25, 0.05, 0.1, 0.1, 5);
  ModelConfig cfg;
  cfg.family = ModelFamily::mlp;
  cfg.input_len = 100;
  cfg.d = 8;
  cfg.layers = 1;
  auto model = make_model<float>(cfg, 1);

  Metrics a = evaluate(*model, ds);
  CHECK(a.mse >= 0.0);
  CHECK(a.mae >= 0.0);

  SECTION("pure function of weights and data") {
    Metrics b = evaluate(*model, ds);
    CHECK(a.mse == b.mse);
    CHECK(a.mae == b.mae);
  }
  SECTION("task mismatch rejected") {
    Dataset af = generate_af_dataset(6, 0.5, 4.0, 25, 3);
    CHECK_THROWS_AS(evaluate(*model, af), std::invalid_argument);
  }
}

TEST_CASE("bench_throughput contract", "[evalbench]") {
  ModelConfig cfg;
  cfg.family = ModelFamily::mlp;
  cfg.input_len = 100;
  cfg.d = 8;
  cfg.layers = 1;
  auto model = make_model<float>(cfg, 1);

  BenchResult r = bench_throughput(*model, 16, 2, 5);
  CHECK(r.batches_per_second > 0.0);
  CHECK(r.measured_batches == 5);
  CHECK(r.param_count == count_params(*model));

  BenchResult r0 = bench_throughput(*model, 16, 0, 5);  // zero warmup is valid
  CHECK(r0.batches_per_second > 0.0);
  CHECK(r0.warmup_batches == 0);

  CHECK_THROWS_AS(bench_throughput(*model, 16, 2, 0), std::invalid_argument);
}

TEST_CASE("emit_report", "[evalbench][report]") {
  SECTION("improvement column formats the relative gain") {
    ReportData data;
    Metrics base;
    base.task = TaskType::regression;
    base.mse = 255.07;
    base.mae = 10.08;
    Metrics dist;
    dist.task = TaskType::regression;
    dist.mse = 215.36;
    dist.mae = 8.34;
    data.rows.push_back({"student", base});
    data.rows.push_back({"student_distilled", dist});

    const std::string dir = temp_dir("table");
    auto files = emit_report(data, dir);
    REQUIRE(files.size() == 1);
    const std::string csv = slurp(files[0]);
    CHECK(csv.find("name,mse,mae,mse_improvement,mae_improvement") != std::string::npos);
    CHECK(csv.find("+17.26%") != std::string::npos);
    CHECK(csv.find("baseline") != std::string::npos);
    CHECK(csv.find("# improvement") != std::string::npos);
    std::filesystem::remove_all(dir);
  }
  SECTION("single row has no improvement column") {
    ReportData data;
    Metrics m;
    m.task = TaskType::regression;
    m.mse = 4.0;
    m.mae = 1.5;
    data.rows.push_back({"only", m});
    const std::string dir = temp_dir("single");
    auto files = emit_report(data, dir);
    const std::string csv = slurp(files[0]);
    CHECK(csv.find("improvement,") == std::string::npos);
    CHECK(csv.find("name,mse,mae\n") != std::string::npos);
    std::filesystem::remove_all(dir);
  }
  SECTION("empty input is an error") {
    CHECK_THROWS_AS(emit_report(ReportData{}, temp_dir("empty")),
                    std::invalid_argument);
  }
  SECTION("loss curves, sweep, and scatter plots are valid PNG files") {
    ReportData data;
    NamedRunReport run;
    run.name = "demo";
    for (int e = 0; e < 5; ++e) {
      EpochRow row;
      row.losses.sup = 2.0 / (e + 1);
      row.losses.kd_pred = 1.0 / (e + 1);
      row.losses.total = row.losses.sup + 0.5 * row.losses.kd_pred;
      row.val_metric = 3.0 / (e + 1);
      run.report.epochs.push_back(row);
    }
    data.runs.push_back(run);

    SweepSeries sweep;
    sweep.param = "gamma";
    sweep.metric_name = "mae";
    sweep.points = {{0.0, 9.5}, {0.1, 9.1}, {0.5, 8.7}, {1.0, 8.9}};
    data.sweeps.push_back(sweep);

    NamedBench nb1{"teacher", BenchResult{120.0, 64, 5, 50, 6000000}};
    NamedBench nb2{"student", BenchResult{300.0, 64, 5, 50, 350000}};
    data.bench.push_back(nb1);
    data.bench.push_back(nb2);

    const std::string dir = temp_dir("plots");
    auto files = emit_report(data, dir);
    REQUIRE(files.size() == 3);
    for (const auto& f : files) {
      const std::string bytes = slurp(f);
      REQUIRE(bytes.size() > 100);
      REQUIRE(bytes.substr(1, 3) == "PNG");
    }
    std::filesystem::remove_all(dir);
  }
  SECTION("unwritable directory is an error") {
    ReportData data;
    Metrics m;
    m.task = TaskType::regression;
    data.rows.push_back({"x", m});
    CHECK_THROWS_AS(emit_report(data, "/proc/nonexistent/report"), IoError);
  }
}
