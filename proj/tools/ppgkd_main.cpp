// ppgkd command-line entry point.
//
// Subcommands compose the library into reproducible experiments:
//   gen-data       synthesize an HR-regression or AF-classification dataset
//   train-teacher  train a model from scratch on the supervised objective
//   distill        train a student against a frozen teacher checkpoint
//   eval           compute task metrics for a checkpoint on a dataset
//   bench          measure inference throughput and parameter count
//   ablate         sweep one loss weight and tabulate the results
//
// Every run prints an effective-configuration header sufficient to reproduce
// it. Exit codes: 0 success, 1 usage error, 2 runtime/data error.

#include "ppgkd/ppgkd.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace {

using Scalar = float;
using namespace ppgkd;

struct EffectiveConfig {
  std::vector<std::pair<std::string, std::string>> items;
  void add(const std::string& key, const std::string& value) {
    items.emplace_back(key, value);
  }
  void add(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    items.emplace_back(key, buf);
  }
  void add(const std::string& key, long value) {
    items.emplace_back(key, std::to_string(value));
  }
  void print(const std::string& command) const {
    std::printf("# effective configuration\n");
    std::printf("command=%s\n", command.c_str());
    for (const auto& [k, v] : items) std::printf("%s=%s\n", k.c_str(), v.c_str());
    std::fflush(stdout);
  }
};

std::string family_name(ModelFamily f) {
  return f == ModelFamily::patch_transformer ? "patch_transformer" : "mlp";
}

ModelFamily family_from(const std::string& s) {
  if (s == "patch_transformer") return ModelFamily::patch_transformer;
  if (s == "mlp") return ModelFamily::mlp;
  throw std::invalid_argument("config: unknown family '" + s +
                              "' (use patch_transformer or mlp)");
}

// Model + training keys share one key=value file; unrecognized keys are
// rejected together in one message.
struct ParsedConfigs {
  ModelConfig model;
  TrainConfig train;
};

ParsedConfigs parse_configs(const std::string& path, const ModelConfig& model_defaults,
                            std::uint64_t seed, int input_len, HeadType head) {
  KvConfig kv = path.empty() ? KvConfig() : KvConfig::parse_file(path);
  ParsedConfigs out;
  out.model.family = family_from(
      kv.get_string("family", family_name(model_defaults.family)));
  out.model.input_len = input_len;
  out.model.patch_len =
      static_cast<int>(kv.get_int("patch_len", model_defaults.patch_len));
  out.model.d = static_cast<int>(kv.get_int("d", model_defaults.d));
  out.model.layers = static_cast<int>(kv.get_int("layers", model_defaults.layers));
  out.model.heads = static_cast<int>(kv.get_int("heads", model_defaults.heads));
  out.model.head = head;
  out.model.num_classes = 2;

  out.train.batch_size = static_cast<int>(kv.get_int("batch_size", 64));
  out.train.max_epochs = static_cast<int>(kv.get_int("max_epochs", 100));
  out.train.patience = static_cast<int>(kv.get_int("patience", 20));
  out.train.lr_init = kv.get_double("lr_init", 1e-5);
  out.train.lr_max = kv.get_double("lr_max", 1e-3);
  out.train.eta_min = kv.get_double("eta_min", 1e-6);
  out.train.warmup_ratio = kv.get_double("warmup_ratio", 0.25);
  out.train.seed = seed;

  kv.reject_unknown();
  out.model.validate();
  out.train.validate();
  return out;
}

void add_config_to_effective(EffectiveConfig& eff, const ParsedConfigs& cfg) {
  eff.add("family", family_name(cfg.model.family));
  eff.add("input_len", static_cast<long>(cfg.model.input_len));
  if (cfg.model.family == ModelFamily::patch_transformer) {
    eff.add("patch_len", static_cast<long>(cfg.model.patch_len));
    eff.add("heads", static_cast<long>(cfg.model.heads));
  }
  eff.add("d", static_cast<long>(cfg.model.d));
  eff.add("layers", static_cast<long>(cfg.model.layers));
  eff.add("batch_size", static_cast<long>(cfg.train.batch_size));
  eff.add("max_epochs", static_cast<long>(cfg.train.max_epochs));
  eff.add("patience", static_cast<long>(cfg.train.patience));
  eff.add("lr_init", cfg.train.lr_init);
  eff.add("lr_max", cfg.train.lr_max);
  eff.add("eta_min", cfg.train.eta_min);
  eff.add("warmup_ratio", cfg.train.warmup_ratio);
}

void print_run_summary(const RunReport& report) {
  const auto& best = report.epochs[static_cast<std::size_t>(report.best_epoch)];
  std::printf("epochs_run=%zu best_epoch=%d best_val_metric=%.6g wall_seconds=%.2f\n",
              report.epochs.size(), report.best_epoch, best.val_metric,
              report.wall_seconds);
}

std::string default_report_path(const std::string& checkpoint_path) {
  return checkpoint_path + ".report.csv";
}

// ---- gen-data -----------------------------------------------------------------

struct GenDataArgs {
  std::string task;
  long n = 0;
  double duration = 8.0;
  long rate = 50;
  double hr_lo = 50.0, hr_hi = 150.0;
  double af_frac = 0.3;
  double noise = 0.05, jitter = 0.05, wander = 0.1;
  std::uint64_t seed = 1;
  std::string out;
  bool jitter_given = false;
  bool hr_given = false;
  bool af_given = false;
};

int run_gen_data(const GenDataArgs& a) {
  if (a.task != "hr" && a.task != "af")
    throw std::invalid_argument("gen-data: --task must be hr or af");
  if (a.task == "af" && a.jitter_given)
    throw std::invalid_argument(
        "gen-data: --jitter applies to --task hr only (AF classes fix their own "
        "beat-timing irregularity)");
  if (a.task == "af" && a.hr_given)
    throw std::invalid_argument("gen-data: --hr-lo/--hr-hi apply to --task hr only");
  if (a.task == "hr" && a.af_given)
    throw std::invalid_argument("gen-data: --af-frac applies to --task af only");

  EffectiveConfig eff;
  eff.add("task", a.task);
  eff.add("n", a.n);
  eff.add("duration", a.duration);
  eff.add("rate", a.rate);
  if (a.task == "hr") {
    eff.add("hr_lo", a.hr_lo);
    eff.add("hr_hi", a.hr_hi);
    eff.add("jitter", a.jitter);
  } else {
    eff.add("af_frac", a.af_frac);
  }
  eff.add("noise", a.noise);
  eff.add("wander", a.wander);
  eff.add("seed", static_cast<long>(a.seed));
  eff.add("out", a.out);
  eff.print("gen-data");

  Dataset ds =
      a.task == "hr"
          ? generate_hr_dataset(static_cast<std::size_t>(a.n), a.hr_lo, a.hr_hi,
                                a.duration, static_cast<int>(a.rate), a.jitter,
                                a.noise, a.wander, a.seed)
          : generate_af_dataset(static_cast<std::size_t>(a.n), a.af_frac, a.duration,
                                static_cast<int>(a.rate), a.seed, a.noise, a.wander);
  write_dataset(ds, a.out);
  std::printf("wrote %s: records=%zu signal_len=%zu sample_rate=%u task=%s\n",
              a.out.c_str(), ds.size(), ds.signal_len(), ds.sample_rate,
              a.task.c_str());
  return 0;
}

// ---- train-teacher ---------------------------------------------------------------

int run_train_teacher(const std::string& data_path, const std::string& config_path,
                      std::uint64_t seed, const std::string& out,
                      std::string report_path) {
  Dataset ds = read_dataset(data_path);
  const HeadType head = ds.task == TaskType::regression ? HeadType::regression
                                                        : HeadType::classification;
  ParsedConfigs cfg =
      parse_configs(config_path, default_teacher_config(), seed,
                    static_cast<int>(ds.signal_len()), head);

  EffectiveConfig eff;
  eff.add("data", data_path);
  eff.add("seed", static_cast<long>(seed));
  eff.add("out", out);
  add_config_to_effective(eff, cfg);
  eff.print("train-teacher");

  TrainResult<Scalar> res = train_teacher<Scalar>(ds, cfg.model, cfg.train);
  save_checkpoint(*res.model, out);
  if (report_path.empty()) report_path = default_report_path(out);
  res.report.checkpoint_path = out;
  write_run_report_csv(res.report, report_path);
  std::printf("checkpoint=%s report=%s params=%lld\n", out.c_str(),
              report_path.c_str(),
              static_cast<long long>(count_params(*res.model)));
  print_run_summary(res.report);
  return 0;
}

// ---- distill ----------------------------------------------------------------------

struct DistillArgs {
  std::string teacher, data, student_config, out, report;
  double alpha = 0.5, beta = 0.1, gamma = 1.0, tau = 2.0;
  double pred_temp = 2.0, smooth_l1_beta = 1.0;
  std::uint64_t seed = 1;
};

int run_distill(const DistillArgs& a) {
  Dataset ds = read_dataset(a.data);
  const HeadType head = ds.task == TaskType::regression ? HeadType::regression
                                                        : HeadType::classification;
  auto teacher = load_checkpoint<Scalar>(a.teacher);
  ParsedConfigs cfg = parse_configs(a.student_config, default_student_config(), a.seed,
                                    static_cast<int>(ds.signal_len()), head);

  DistillConfig dc;
  dc.alpha = a.alpha;
  dc.beta = a.beta;
  dc.gamma = a.gamma;
  dc.tau = a.tau;
  dc.pred_kd_temp = a.pred_temp;
  dc.smooth_l1_beta = a.smooth_l1_beta;
  dc.patch_len = cfg.model.patch_len;
  dc.validate();

  EffectiveConfig eff;
  eff.add("teacher", a.teacher);
  eff.add("data", a.data);
  eff.add("seed", static_cast<long>(a.seed));
  eff.add("out", a.out);
  eff.add("alpha", dc.alpha);
  eff.add("beta", dc.beta);
  eff.add("gamma", dc.gamma);
  eff.add("tau", dc.tau);
  eff.add("pred_kd_temp", dc.pred_kd_temp);
  eff.add("smooth_l1_beta", dc.smooth_l1_beta);
  eff.add("mode", dc.gamma > 0.0 ? "patch_distill" : "global_kd");
  add_config_to_effective(eff, cfg);
  eff.print("distill");

  TrainResult<Scalar> res = distill<Scalar>(*teacher, cfg.model, dc, cfg.train, ds);
  save_checkpoint(*res.model, a.out);
  std::string report_path = a.report.empty() ? default_report_path(a.out) : a.report;
  res.report.checkpoint_path = a.out;
  write_run_report_csv(res.report, report_path);
  std::printf("checkpoint=%s report=%s student_params=%lld teacher_params=%lld\n",
              a.out.c_str(), report_path.c_str(),
              static_cast<long long>(count_params(*res.model)),
              static_cast<long long>(count_params(*teacher)));
  print_run_summary(res.report);
  return 0;
}

// ---- eval -------------------------------------------------------------------------

int run_eval(const std::string& ckpt, const std::string& data,
             const std::string& out_dir) {
  Dataset ds = read_dataset(data);
  auto model = load_checkpoint<Scalar>(ckpt);

  EffectiveConfig eff;
  eff.add("ckpt", ckpt);
  eff.add("data", data);
  if (!out_dir.empty()) eff.add("out", out_dir);
  eff.print("eval");

  Metrics m = evaluate(*model, ds);
  if (ds.task == TaskType::regression)
    std::printf("task=regression mse=%.6g mae=%.6g\n", m.mse, m.mae);
  else
    std::printf("task=classification accuracy=%.6g f1=%.6g\n", m.accuracy, m.f1);
  if (!out_dir.empty()) {
    ReportData data_out;
    data_out.rows.push_back({std::filesystem::path(ckpt).stem().string(), m});
    for (const auto& f : emit_report(data_out, out_dir))
      std::printf("wrote %s\n", f.c_str());
  }
  return 0;
}

// ---- bench ------------------------------------------------------------------------

int run_bench(const std::string& ckpt, int batch, int warmup, int measure,
              const std::string& out_dir) {
  auto model = load_checkpoint<Scalar>(ckpt);

  EffectiveConfig eff;
  eff.add("ckpt", ckpt);
  eff.add("batch", static_cast<long>(batch));
  eff.add("warmup", static_cast<long>(warmup));
  eff.add("measure", static_cast<long>(measure));
  if (!out_dir.empty()) eff.add("out", out_dir);
  eff.print("bench");

  BenchResult r = bench_throughput(*model, batch, warmup, measure);
  std::printf("param_count=%lld batches_per_second=%.4f batch_size=%d "
              "warmup_batches=%d measured_batches=%d\n",
              static_cast<long long>(r.param_count), r.batches_per_second,
              r.batch_size, r.warmup_batches, r.measured_batches);
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const std::string csv_path = out_dir + "/bench.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv)
      throw IoError(IoError::Kind::open_failed, "bench: cannot open " + csv_path);
    csv << "name,param_count,batches_per_second,batch_size,warmup_batches,"
           "measured_batches\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%lld,%.6g,%d,%d,%d\n",
                  std::filesystem::path(ckpt).stem().string().c_str(),
                  static_cast<long long>(r.param_count), r.batches_per_second,
                  r.batch_size, r.warmup_batches, r.measured_batches);
    csv << buf;
    ReportData data_out;
    data_out.bench.push_back({std::filesystem::path(ckpt).stem().string(), r});
    for (const auto& f : emit_report(data_out, out_dir))
      std::printf("wrote %s\n", f.c_str());
    std::printf("wrote %s\n", csv_path.c_str());
  }
  return 0;
}

// ---- ablate -----------------------------------------------------------------------

struct AblateArgs {
  std::string param, values_csv, teacher, data, student_config, out_dir;
  double alpha = 0.5, beta = 0.1, gamma = 1.0, tau = 2.0;
  std::uint64_t seed = 1;
};

int run_ablate(const AblateArgs& a) {
  SweepParam param;
  if (a.param == "alpha")
    param = SweepParam::alpha;
  else if (a.param == "beta")
    param = SweepParam::beta;
  else if (a.param == "gamma")
    param = SweepParam::gamma;
  else
    throw std::invalid_argument("ablate: --param must be alpha, beta, or gamma");

  std::vector<double> values;
  std::stringstream ss(a.values_csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) values.push_back(std::stod(tok));
  if (values.empty()) throw std::invalid_argument("ablate: --values is empty");

  Dataset ds = read_dataset(a.data);
  const HeadType head = ds.task == TaskType::regression ? HeadType::regression
                                                        : HeadType::classification;
  auto teacher = load_checkpoint<Scalar>(a.teacher);
  ParsedConfigs cfg = parse_configs(a.student_config, default_student_config(), a.seed,
                                    static_cast<int>(ds.signal_len()), head);

  DistillConfig base;
  base.alpha = a.alpha;
  base.beta = a.beta;
  base.gamma = a.gamma;
  base.tau = a.tau;
  base.patch_len = cfg.model.patch_len;

  EffectiveConfig eff;
  eff.add("param", a.param);
  eff.add("values", a.values_csv);
  eff.add("teacher", a.teacher);
  eff.add("data", a.data);
  eff.add("seed", static_cast<long>(a.seed));
  eff.add("out_dir", a.out_dir);
  eff.add("alpha", base.alpha);
  eff.add("beta", base.beta);
  eff.add("gamma", base.gamma);
  eff.add("tau", base.tau);
  add_config_to_effective(eff, cfg);
  eff.print("ablate");

  auto rows = ablation_sweep<Scalar>(*teacher, cfg.model, base, cfg.train, ds, param,
                                     values);

  std::error_code ec;
  std::filesystem::create_directories(a.out_dir, ec);
  const std::string table_path = a.out_dir + "/ablation_" + a.param + ".csv";
  std::ofstream table(table_path, std::ios::trunc);
  if (!table)
    throw IoError(IoError::Kind::open_failed, "ablate: cannot open " + table_path);
  const std::string metric_name =
      ds.task == TaskType::regression ? "val_mae" : "val_f1";
  table << a.param << "," << metric_name << ",best_epoch,epochs_run\n";
  ReportData report;
  SweepSeries sweep;
  sweep.param = a.param;
  sweep.metric_name = metric_name;
  for (const auto& row : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%d,%zu\n", row.value,
                  row.best_val_metric, row.report.best_epoch,
                  row.report.epochs.size());
    table << buf;
    sweep.points.emplace_back(row.value, row.best_val_metric);
    char run_name[64];
    std::snprintf(run_name, sizeof(run_name), "%s_%g", a.param.c_str(), row.value);
    write_run_report_csv(row.report,
                         a.out_dir + "/run_" + std::string(run_name) + ".csv");
    report.runs.push_back({run_name, row.report});
    std::printf("%s=%.4g %s=%.6g epochs=%zu\n", a.param.c_str(), row.value,
                metric_name.c_str(), row.best_val_metric, row.report.epochs.size());
  }
  report.sweeps.push_back(sweep);
  for (const auto& f : emit_report(report, a.out_dir))
    std::printf("wrote %s\n", f.c_str());
  std::printf("wrote %s\n", table_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPG knowledge-distillation toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "Generate a synthetic PPG dataset");
  cmd_gen->add_option("--task", gen.task, "Task: hr or af")->required();
  cmd_gen->add_option("--n", gen.n, "Record count")->required();
  cmd_gen->add_option("--duration", gen.duration, "Signal duration in seconds");
  cmd_gen->add_option("--rate", gen.rate, "Sample rate in Hz");
  auto* o_hrlo = cmd_gen->add_option("--hr-lo", gen.hr_lo, "Heart-rate range low (bpm)");
  auto* o_hrhi = cmd_gen->add_option("--hr-hi", gen.hr_hi, "Heart-rate range high (bpm)");
  auto* o_af = cmd_gen->add_option("--af-frac", gen.af_frac, "AF-positive fraction");
  cmd_gen->add_option("--noise", gen.noise, "Additive white-noise std");
  auto* o_jit = cmd_gen->add_option("--jitter", gen.jitter, "Beat-interval jitter fraction");
  cmd_gen->add_option("--wander", gen.wander, "Baseline-wander amplitude");
  cmd_gen->add_option("--seed", gen.seed, "Generation seed");
  cmd_gen->add_option("--out", gen.out, "Output dataset path")->required();

  std::string tt_data, tt_config, tt_out, tt_report;
  std::uint64_t tt_seed = 1;
  auto* cmd_tt = app.add_subcommand("train-teacher", "Train a model from scratch");
  cmd_tt->add_option("--data", tt_data, "Dataset path")->required();
  cmd_tt->add_option("--config", tt_config, "key=value model/train config file");
  cmd_tt->add_option("--seed", tt_seed, "Training seed");
  cmd_tt->add_option("--out", tt_out, "Checkpoint output path")->required();
  cmd_tt->add_option("--report", tt_report, "Run-report CSV path");

  DistillArgs dst;
  auto* cmd_dst = app.add_subcommand("distill", "Distill a student from a teacher");
  cmd_dst->add_option("--teacher", dst.teacher, "Teacher checkpoint")->required();
  cmd_dst->add_option("--data", dst.data, "Dataset path")->required();
  cmd_dst->add_option("--student-config", dst.student_config,
                      "key=value student/train config file");
  cmd_dst->add_option("--alpha", dst.alpha, "Prediction-KD weight");
  cmd_dst->add_option("--beta", dst.beta, "Feature-KD weight");
  cmd_dst->add_option("--gamma", dst.gamma,
                      "Patch-loss weight (0 selects Global KD only)");
  cmd_dst->add_option("--tau", dst.tau, "Morphology InfoNCE temperature");
  cmd_dst->add_option("--pred-temp", dst.pred_temp, "Prediction-KD temperature");
  cmd_dst->add_option("--smooth-l1-beta", dst.smooth_l1_beta,
                      "Rhythm smooth-L1 transition");
  cmd_dst->add_option("--seed", dst.seed, "Training seed");
  cmd_dst->add_option("--out", dst.out, "Student checkpoint output path")->required();
  cmd_dst->add_option("--report", dst.report, "Run-report CSV path");

  std::string ev_ckpt, ev_data, ev_out;
  auto* cmd_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  cmd_ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
  cmd_ev->add_option("--data", ev_data, "Dataset path")->required();
  cmd_ev->add_option("--out", ev_out, "Report output directory");

  std::string bn_ckpt, bn_out;
  int bn_batch = 64, bn_warmup = 5, bn_measure = 50;
  auto* cmd_bn = app.add_subcommand("bench", "Measure inference throughput");
  cmd_bn->add_option("--ckpt", bn_ckpt, "Checkpoint path")->required();
  cmd_bn->add_option("--batch", bn_batch, "Batch size");
  cmd_bn->add_option("--warmup", bn_warmup, "Unmeasured warmup batches");
  cmd_bn->add_option("--measure", bn_measure, "Measured batches");
  cmd_bn->add_option("--out", bn_out, "Report output directory");

  AblateArgs abl;
  auto* cmd_abl = app.add_subcommand("ablate", "Sweep one loss weight");
  cmd_abl->add_option("--param", abl.param, "alpha, beta, or gamma")->required();
  cmd_abl->add_option("--values", abl.values_csv, "Comma-separated grid")->required();
  cmd_abl->add_option("--teacher", abl.teacher, "Teacher checkpoint")->required();
  cmd_abl->add_option("--data", abl.data, "Dataset path")->required();
  cmd_abl->add_option("--student-config", abl.student_config,
                      "key=value student/train config file");
  cmd_abl->add_option("--alpha", abl.alpha, "Base prediction-KD weight");
  cmd_abl->add_option("--beta", abl.beta, "Base feature-KD weight");
  cmd_abl->add_option("--gamma", abl.gamma, "Base patch-loss weight");
  cmd_abl->add_option("--tau", abl.tau, "Morphology InfoNCE temperature");
  cmd_abl->add_option("--seed", abl.seed, "Training seed");
  cmd_abl->add_option("--out-dir", abl.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
    gen.jitter_given = o_jit->count() > 0;
    gen.hr_given = o_hrlo->count() > 0 || o_hrhi->count() > 0;
    gen.af_given = o_af->count() > 0;

    if (cmd_gen->parsed()) return run_gen_data(gen);
    if (cmd_tt->parsed())
      return run_train_teacher(tt_data, tt_config, tt_seed, tt_out, tt_report);
    if (cmd_dst->parsed()) return run_distill(dst);
    if (cmd_ev->parsed()) return run_eval(ev_ckpt, ev_data, ev_out);
    if (cmd_bn->parsed())
      return run_bench(bn_ckpt, bn_batch, bn_warmup, bn_measure, bn_out);
    if (cmd_abl->parsed()) return run_ablate(abl);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
