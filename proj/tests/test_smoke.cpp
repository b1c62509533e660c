#include <catch2/catch.hpp>

#include "ppgkd/ppgkd.hpp"

using namespace ppgkd;

// Instantiates the main templates at both scalar widths and runs one tiny
// end-to-end pass; the detailed behavior is covered by the per-module suites.
TEMPLATE_TEST_CASE("toolkit smoke pass", "[smoke]", float, double) {
  using S = TestType;

  Dataset ds = generate_hr_dataset(12, 60.0, 120.0, 4.0, 25, 0.05, 0.1, 0.1, 7);
  REQUIRE(ds.size() == 12);
  REQUIRE(ds.signal_len() == 100);

  ModelConfig tc_cfg;
  tc_cfg.family = ModelFamily::patch_transformer;
  tc_cfg.input_len = 100;
  tc_cfg.patch_len = 20;
  tc_cfg.d = 16;
  tc_cfg.layers = 1;
  tc_cfg.heads = 2;

  TrainConfig tc;
  tc.batch_size = 6;
  tc.max_epochs = 2;
  tc.patience = 5;
  tc.seed = 3;

  auto teacher = train_teacher<S>(ds, tc_cfg, tc);
  REQUIRE(teacher.report.epochs.size() == 2);

  ModelConfig st_cfg = tc_cfg;
  st_cfg.d = 8;
  st_cfg.heads = 1;

  DistillConfig dc;
  dc.alpha = 0.5;
  dc.beta = 0.1;
  dc.gamma = 0.5;
  auto student = distill<S>(*teacher.model, st_cfg, dc, tc, ds);
  REQUIRE(student.report.epochs.size() == 2);
  for (const auto& row : student.report.epochs) {
    REQUIRE(std::isfinite(row.losses.total));
    REQUIRE(row.losses.mor >= 0.0);
  }

  Metrics m = evaluate(*student.model, ds);
  REQUIRE(std::isfinite(m.mae));
}
