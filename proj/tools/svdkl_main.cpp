#include "svdkl/bench.hpp"
#include "svdkl/checkpoint.hpp"
#include "svdkl/data.hpp"
#include "svdkl/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace {

using namespace svdkl;

struct DataOpts {
  std::string path;
  std::string format = "csv";
  std::string label_col = "label";
  bool no_header = false;
  int dim = 0;  // libsvm feature count
};

void add_data_opts(CLI::App* cmd, DataOpts& opts) {
  cmd->add_option("--data", opts.path, "Dataset path")->required();
  cmd->add_option("--format", opts.format, "Input format: csv or libsvm")
      ->check(CLI::IsMember({"csv", "libsvm"}));
  cmd->add_option("--label-col", opts.label_col,
                  "CSV label column (header name, or 0-based index; -1 = last)");
  cmd->add_flag("--no-header", opts.no_header, "CSV file has no header row");
  cmd->add_option("--dim", opts.dim, "Feature count (libsvm format only)");
}

Dataset load_data(const DataOpts& opts, bool normalize) {
  if (opts.format == "libsvm") {
    if (opts.dim <= 0) throw ConfigError("--dim is required for libsvm input");
    return load_libsvm(opts.path, opts.dim, normalize);
  }
  return load_csv(opts.path, opts.no_header ? "-1" : opts.label_col, !opts.no_header, normalize);
}

void print_metrics(const std::string& name, const Metrics& m) {
  std::printf("%s accuracy=%.6f nlp=%.6f\n", name.c_str(), m.accuracy, m.nlp);
}

struct TrainOpts {
  DataOpts data;
  TrainConfig cfg;
  double val_frac = 0.0;
  double test_frac = 0.2;
  bool no_normalize = false;
  std::string checkpoint = "model.ckpt";
  std::string log_path;
};

int run_train(const TrainOpts& o) {
  Dataset full = load_data(o.data, !o.no_normalize);
  SplitResult parts = split(full, 1.0 - o.val_frac - o.test_frac, o.val_frac, o.test_frac,
                            o.cfg.seed);
  if (parts.train.size() == 0) throw ConfigError("train split is empty");

  DeepKernelModel model =
      init_model(int(full.dim()), full.n_classes, parts.train.size(), o.cfg);
  TrainLog log = fit(model, parts.train, parts.validation.size() > 0 ? &parts.validation : nullptr,
                     o.cfg);

  ModelCheckpoint ckpt;
  ckpt.model = model;
  ckpt.config = o.cfg;
  ckpt.stats = full.stats;
  ckpt.label_names = full.label_names;
  ckpt.rng_state = log.rng_state;
  save_checkpoint(ckpt, o.checkpoint);
  if (!o.log_path.empty()) write_train_log(log, o.log_path);

  const std::uint64_t eval_seed = mix_seed(o.cfg.seed, 0x99);
  print_metrics("train", evaluate(model, parts.train, o.cfg.eval_samples, eval_seed));
  if (parts.validation.size() > 0) {
    print_metrics("validation", evaluate(model, parts.validation, o.cfg.eval_samples, eval_seed));
  }
  if (parts.test.size() > 0) {
    print_metrics("test", evaluate(model, parts.test, o.cfg.eval_samples, eval_seed));
  }
  std::printf("checkpoint written to %s\n", o.checkpoint.c_str());
  return 0;
}

struct EvalOpts {
  DataOpts data;
  std::string checkpoint;
  int samples = -1;  // -1: use the checkpoint's eval_samples
  std::uint64_t seed = 0;
};

int run_eval(const EvalOpts& o) {
  ModelCheckpoint ckpt = load_checkpoint(o.checkpoint);
  Dataset ds = load_data(o.data, /*normalize=*/false);
  remap_labels(ds, ckpt.label_names);
  apply_normalization(ds, ckpt.stats);
  const int samples = o.samples >= 0 ? o.samples : ckpt.config.eval_samples;
  print_metrics("eval", evaluate(ckpt.model, ds, samples, mix_seed(o.seed, 0x99)));
  return 0;
}

struct BenchOpts {
  BenchConfig cfg;
  std::string out = "bench.csv";
};

int run_bench(const BenchOpts& o) {
  std::vector<BenchRecord> records = run_benchmarks(o.cfg);
  std::ostringstream csv;
  write_bench_csv(records, csv);
  std::ofstream file(o.out);
  if (!file) throw DataError("cannot write '" + o.out + "'");
  file << csv.str();
  std::cout << csv.str();
  return 0;
}

struct CovdumpOpts {
  DataOpts data;
  std::string checkpoint;
  std::vector<int> gp_indices;
  std::string out_prefix = "covdump";
  Index max_points = 3000;
  Index limit = 0;  // 0 = all points
};

int run_covdump(const CovdumpOpts& o) {
  ModelCheckpoint ckpt = load_checkpoint(o.checkpoint);
  Dataset ds = load_data(o.data, /*normalize=*/false);
  remap_labels(ds, ckpt.label_names);
  apply_normalization(ds, ckpt.stats);

  // Evaluation inputs sorted by label, ties kept in file order.
  std::vector<Index> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return ds.y[std::size_t(a)] < ds.y[std::size_t(b)]; });
  if (o.limit > 0 && Index(order.size()) > o.limit) order.resize(std::size_t(o.limit));
  Matrix x_sorted(Index(order.size()), ds.dim());
  for (std::size_t i = 0; i < order.size(); ++i) x_sorted.row(Index(i)) = ds.x.row(order[i]);

  std::vector<int> indices = o.gp_indices;
  if (indices.empty()) {
    indices.resize(std::size_t(ckpt.model.n_gps()));
    std::iota(indices.begin(), indices.end(), 0);
  }
  for (int j : indices) {
    if (j < 0 || j >= ckpt.model.n_gps()) {
      throw ConfigError("GP index " + std::to_string(j) + " out of range [0, " +
                        std::to_string(ckpt.model.n_gps()) + ")");
    }
    dump_covariance(ckpt.model, x_sorted, j, o.out_prefix, o.max_points);
    std::printf("wrote %s_cov_gp%d.csv/.pgm\n", o.out_prefix.c_str(), j);
  }
  std::printf("wrote %s_mixing.csv\n", o.out_prefix.c_str());
  return 0;
}

void add_train_config_opts(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--hidden", cfg.hidden, "Hidden layer widths")->delimiter(',');
  cmd->add_option("--gp-dim", cfg.gp_dim, "Features per GP (grid dimensionality D)");
  cmd->add_option("--grid-size", cfg.grid_size, "Inducing points per grid dimension")
      ->delimiter(',');
  cmd->add_option("--minibatch", cfg.minibatch, "Minibatch size B");
  cmd->add_option("--samples", cfg.samples, "Posterior samples T per step");
  cmd->add_option("--epochs-pretrain", cfg.epochs_pretrain, "Network pretraining epochs");
  cmd->add_option("--epochs-gp", cfg.epochs_gp, "GP/mixing-only epochs");
  cmd->add_option("--epochs-joint", cfg.epochs_joint, "Joint training epochs");
  cmd->add_option("--lr-net", cfg.lr_net, "Network learning rate");
  cmd->add_option("--lr-kernel", cfg.lr_kernel, "Kernel hyperparameter learning rate");
  cmd->add_option("--lr-variational", cfg.lr_variational, "Variational parameter learning rate");
  cmd->add_option("--lr-mixing", cfg.lr_mixing, "Mixing matrix learning rate");
  cmd->add_option("--pretrain-lr", cfg.pretrain_lr, "Pretraining SGD learning rate");
  cmd->add_option("--optimizer", cfg.optimizer, "Optimizer for GP/joint phases")
      ->check(CLI::IsMember({"adam", "sgd"}));
  cmd->add_option("--seed", cfg.seed, "Random seed");
  cmd->add_option("--grid-margin", cfg.grid_margin, "Grid margin as a fraction of feature range");
  cmd->add_option("--eval-samples", cfg.eval_samples,
                  "Posterior samples for prediction (0 = variational mean)");
  cmd->add_option("--threads", cfg.threads, "Worker threads for minibatch evaluation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep kernel learning classifier with structured stochastic variational inference"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.allow_config_extras(false);

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_data_opts(train_cmd, train_opts.data);
  add_train_config_opts(train_cmd, train_opts.cfg);
  train_cmd->add_option("--val-frac", train_opts.val_frac, "Validation fraction");
  train_cmd->add_option("--test-frac", train_opts.test_frac, "Test fraction");
  train_cmd->add_flag("--no-normalize", train_opts.no_normalize, "Skip z-score normalization");
  train_cmd->add_option("--checkpoint", train_opts.checkpoint, "Output checkpoint path");
  train_cmd->add_option("--log", train_opts.log_path, "Training log (JSON lines)");

  EvalOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_data_opts(eval_cmd, eval_opts.data);
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--samples", eval_opts.samples,
                       "Posterior samples for prediction (0 = variational mean)");
  eval_cmd->add_option("--seed", eval_opts.seed, "Random seed for predictive sampling");

  BenchOpts bench_opts;
  auto* bench_cmd = app.add_subcommand(
      "bench", "Time structured vs dense sampling and KL evaluation; emit CSV");
  bench_cmd->add_option("--m", bench_opts.cfg.m_values, "Inducing point counts")->delimiter(',');
  bench_cmd->add_option("--d", bench_opts.cfg.d_values, "Grid dimensionalities")->delimiter(',');
  bench_cmd->add_option("--reps", bench_opts.cfg.reps, "Repetitions per timing (median)");
  bench_cmd->add_option("--dense-kl-cap", bench_opts.cfg.dense_kl_cap,
                        "Skip the dense KL baseline above this m");
  bench_cmd->add_option("--out", bench_opts.out, "Output CSV path");

  CovdumpOpts cov_opts;
  auto* cov_cmd =
      app.add_subcommand("covdump", "Dump induced covariance matrices and the mixing matrix");
  add_data_opts(cov_cmd, cov_opts.data);
  cov_cmd->add_option("--checkpoint", cov_opts.checkpoint, "Checkpoint path")->required();
  cov_cmd->add_option("--gp", cov_opts.gp_indices, "GP indices to dump (default: all)")
      ->delimiter(',');
  cov_cmd->add_option("--out", cov_opts.out_prefix, "Output file prefix");
  cov_cmd->add_option("--max-points", cov_opts.max_points, "Hard cap on evaluation points");
  cov_cmd->add_option("--limit", cov_opts.limit, "Keep only the first N points after sorting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(train_cmd)) return run_train(train_opts);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval_opts);
    if (app.got_subcommand(bench_cmd)) return run_bench(bench_opts);
    if (app.got_subcommand(cov_cmd)) return run_covdump(cov_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NotPositiveDefinite& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const OutOfGrid& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
