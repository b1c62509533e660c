#include <catch2/catch.hpp>

#include "ppgkd/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace ppgkd;

namespace {

Dataset tiny_hr_dataset(std::size_t n = 30, double lo = 60.0, double hi = 120.0,
                        double jitter = 0.05, std::uint64_t seed = 5) {
  return generate_hr_dataset(n, lo, hi, 4.0, 25, jitter, 0.1, 0.1, seed);
}

ModelConfig tiny_transformer(int d, int layers, int heads) {
  ModelConfig cfg;
  cfg.family = ModelFamily::patch_transformer;
  cfg.input_len = 100;
  cfg.patch_len = 20;
  cfg.d = d;
  cfg.layers = layers;
  cfg.heads = heads;
  return cfg;
}

TrainConfig tiny_train(int epochs, std::uint64_t seed = 3) {
  TrainConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = epochs;
  tc.patience = 50;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_CASE("lr_at_step matches the configured schedule exactly", "[trainer]") {
  TrainConfig tc;  // lr_init 1e-5, lr_max 1e-3, eta_min 1e-6, warmup 25%
  const long total = 1000;
  const long warm = std::lround(0.25 * total);

  CHECK(lr_at_step(0, total, tc) == 1e-5);
  CHECK(lr_at_step(warm, total, tc) == 1e-3);
  CHECK(lr_at_step(total - 1, total, tc) == 1e-6);

  SECTION("monotone within each phase") {
    for (long s = 1; s <= warm; ++s)
      REQUIRE(lr_at_step(s, total, tc) >= lr_at_step(s - 1, total, tc));
    for (long s = warm + 1; s < total; ++s)
      REQUIRE(lr_at_step(s, total, tc) <= lr_at_step(s - 1, total, tc));
  }
  SECTION("out-of-range steps rejected") {
    CHECK_THROWS_AS(lr_at_step(-1, total, tc), std::invalid_argument);
    CHECK_THROWS_AS(lr_at_step(total, total, tc), std::invalid_argument);
    CHECK_THROWS_AS(lr_at_step(0, 1, tc), std::invalid_argument);
  }
  SECTION("no warmup starts at lr_max") {
    TrainConfig nw = tc;
    nw.warmup_ratio = 0.0;
    CHECK(lr_at_step(0, total, nw) == 1e-3);
    CHECK(lr_at_step(total - 1, total, nw) == 1e-6);
  }
}

TEST_CASE("early_stop_check", "[trainer]") {
  CHECK_FALSE(early_stop_check({5, 4, 3}, 2, MetricMode::min));
  CHECK(early_stop_check({5, 4, 3, 3.1, 3.2, 3.3}, 2, MetricMode::min));
  CHECK_FALSE(early_stop_check({5}, 1, MetricMode::min));
  CHECK_FALSE(early_stop_check({5}, 100, MetricMode::min));
  CHECK_FALSE(early_stop_check({0.2, 0.5, 0.5, 0.4}, 3, MetricMode::max));
  CHECK(early_stop_check({0.2, 0.5, 0.5, 0.4}, 2, MetricMode::max));
  CHECK(early_stop_check({0.2, 0.5, 0.5, 0.4, 0.3}, 3, MetricMode::max));
  CHECK_THROWS_AS(early_stop_check({}, 2, MetricMode::min), std::invalid_argument);
}

TEST_CASE("train_teacher learns a trivially learnable task", "[trainer]") {
  // one fixed heart rate, no noise: the centered head alone solves it
  Dataset ds = generate_hr_dataset(30, 75.0, 75.0, 4.0, 25, 0.0, 0.0, 0.0, 2);
  auto res = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(3));
  const double best =
      res.report.epochs[static_cast<std::size_t>(res.report.best_epoch)].val_metric;
  CHECK(best < 1.0);
}

TEST_CASE("training is deterministic in (seed, config, data)", "[trainer]") {
  Dataset ds = tiny_hr_dataset();
  auto a = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(3));
  auto b = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(3));
  REQUIRE(a.report.epochs.size() == b.report.epochs.size());
  for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
    CHECK(a.report.epochs[e].losses.total == b.report.epochs[e].losses.total);
    CHECK(a.report.epochs[e].val_metric == b.report.epochs[e].val_metric);
  }
  for (std::size_t i = 0; i < a.model->params().size(); ++i)
    REQUIRE((a.model->params()[i].second.value() -
             b.model->params()[i].second.value())
                .cwiseAbs()
                .maxCoeff() == 0.0f);
}

TEST_CASE("patience 1 with a frozen model stops after exactly 2 epochs",
          "[trainer]") {
  Dataset ds = tiny_hr_dataset();
  TrainConfig tc = tiny_train(50);
  tc.lr_init = tc.lr_max = tc.eta_min = 0.0;
  tc.patience = 1;
  auto res = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tc);
  CHECK(res.report.epochs.size() == 2);
}

TEST_CASE("distillation", "[trainer]") {
  Dataset ds = tiny_hr_dataset();
  auto teacher = train_teacher<float>(ds, tiny_transformer(16, 2, 2), tiny_train(3));

  SECTION("zero-weight distillation reproduces supervised training") {
    DistillConfig dc;
    dc.alpha = dc.beta = dc.gamma = 0.0;
    auto plain = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(4, 9));
    auto viakd =
        distill<float>(*teacher.model, tiny_transformer(8, 1, 2), dc, tiny_train(4, 9), ds);
    REQUIRE(plain.report.epochs.size() == viakd.report.epochs.size());
    for (std::size_t e = 0; e < plain.report.epochs.size(); ++e) {
      CHECK(std::fabs(plain.report.epochs[e].losses.sup -
                      viakd.report.epochs[e].losses.sup) < 1e-6);
      CHECK(std::fabs(plain.report.epochs[e].losses.total -
                      viakd.report.epochs[e].losses.total) < 1e-6);
    }
  }

  SECTION("teacher parameters are bit-identical after distillation") {
    std::vector<ad::Mat<float>> before;
    for (const auto& [name, p] : teacher.model->params()) before.push_back(p.value());
    DistillConfig dc;
    dc.alpha = 0.5;
    dc.beta = 0.1;
    dc.gamma = 0.5;
    auto student =
        distill<float>(*teacher.model, tiny_transformer(8, 2, 2), dc, tiny_train(3), ds);
    const auto& params = teacher.model->params();
    for (std::size_t i = 0; i < params.size(); ++i)
      REQUIRE((params[i].second.value() - before[i]).cwiseAbs().maxCoeff() == 0.0f);
  }

  SECTION("per-epoch loss breakdown satisfies the additive identity") {
    DistillConfig dc;
    dc.alpha = 0.5;
    dc.beta = 0.1;
    dc.gamma = 0.5;
    auto student =
        distill<float>(*teacher.model, tiny_transformer(8, 2, 2), dc, tiny_train(3), ds);
    for (const auto& row : student.report.epochs) {
      const double expected = row.losses.sup + dc.alpha * row.losses.kd_pred +
                              dc.beta * row.losses.kd_feat +
                              dc.gamma * (row.losses.mor + row.losses.rhy);
      REQUIRE(std::fabs(row.losses.total - expected) < 1e-9);
      REQUIRE(row.losses.mor >= 0.0);
      REQUIRE(row.losses.rhy >= 0.0);
    }
  }

  SECTION("gamma > 0 with an MLP student is rejected") {
    ModelConfig mlp;
    mlp.family = ModelFamily::mlp;
    mlp.input_len = 100;
    mlp.d = 16;
    mlp.layers = 2;
    DistillConfig dc;
    dc.gamma = 0.5;
    CHECK_THROWS_AS(distill<float>(*teacher.model, mlp, dc, tiny_train(2), ds),
                    std::invalid_argument);
    dc.gamma = 0.0;
    CHECK_NOTHROW(distill<float>(*teacher.model, mlp, dc, tiny_train(2), ds));
  }

  SECTION("teacher/dataset shape mismatch is rejected") {
    Dataset other = generate_hr_dataset(10, 60.0, 100.0, 2.0, 25, 0.05, 0.1, 0.1, 4);
    DistillConfig dc;
    CHECK_THROWS_AS(
        distill<float>(*teacher.model, tiny_transformer(8, 1, 2), dc, tiny_train(2), other),
        std::invalid_argument);
  }
}

TEST_CASE("ablation sweep", "[trainer]") {
  Dataset ds = tiny_hr_dataset(20);
  auto teacher = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(2));
  DistillConfig base;
  base.alpha = 0.5;
  base.beta = 0.1;
  TrainConfig tc = tiny_train(2);

  SECTION("grid over gamma produces one row per value") {
    auto rows = ablation_sweep<float>(*teacher.model, tiny_transformer(8, 1, 2), base,
                                      tc, ds, SweepParam::gamma, {0.0, 0.1, 0.5, 1.0});
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].value == 0.0);
    CHECK(rows[3].value == 1.0);
    for (const auto& r : rows) CHECK(std::isfinite(r.best_val_metric));
  }
  SECTION("empty grid gives an empty table") {
    CHECK(ablation_sweep<float>(*teacher.model, tiny_transformer(8, 1, 2), base, tc,
                                ds, SweepParam::gamma, {})
              .empty());
  }
  SECTION("duplicate grid points are collapsed") {
    auto rows = ablation_sweep<float>(*teacher.model, tiny_transformer(8, 1, 2), base,
                                      tc, ds, SweepParam::alpha, {0.5, 0.5, 0.1});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == 0.5);
    CHECK(rows[1].value == 0.1);
  }
}

TEST_CASE("run report serialization", "[trainer]") {
  Dataset ds = tiny_hr_dataset(20);
  auto res = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(2));
  const std::string path =
      (std::filesystem::temp_directory_path() /
       ("ppgkd_report_" + std::to_string(::getpid()) + ".csv"))
          .string();
  write_run_report_csv(res.report, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,sup,kd_pred,kd_feat,mor,rhy,total,val_metric");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(res.report.epochs.size()));

  SECTION("same run twice serializes byte-identically") {
    auto res2 = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(2));
    const std::string path2 = path + ".again";
    write_run_report_csv(res2.report, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    std::filesystem::remove(path2);
  }
  std::filesystem::remove(path);
}

TEST_CASE("best-epoch metric is the optimum of the recorded history", "[trainer]") {
  Dataset ds = tiny_hr_dataset();
  auto res = train_teacher<float>(ds, tiny_transformer(8, 1, 2), tiny_train(4));
  double best = res.report.epochs[static_cast<std::size_t>(res.report.best_epoch)].val_metric;
  for (const auto& row : res.report.epochs) CHECK(best <= row.val_metric);
}
