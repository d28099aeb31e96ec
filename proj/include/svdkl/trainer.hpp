#pragma once

#include "svdkl/common.hpp"
#include "svdkl/data.hpp"
#include "svdkl/mixing.hpp"
#include "svdkl/mlp.hpp"
#include "svdkl/vargp.hpp"

#include <string>
#include <vector>

namespace svdkl {

// Bounded map keeping GP inputs strictly inside the inducing grid: network
// features pass through tanh and land in the central 90% of the grid span.
// center/scale are frozen from the feature statistics when the GP layer is
// initialized.
struct SquashMap {
  double center = 0.0;
  double scale = 1.0;
  double out_mid = 0.0;
  double out_rad = 0.9;

  double apply(double h) const { return out_mid + out_rad * std::tanh(scale * (h - center)); }
  double deriv(double h) const {
    const double t = std::tanh(scale * (h - center));
    return out_rad * scale * (1.0 - t * t);
  }
};

struct TrainConfig {
  std::vector<int> hidden{64, 32};  // hidden layer widths
  int gp_dim = 1;                   // D, features per GP
  std::vector<int> grid_size;       // inducing points per grid dimension; default set by gp_dim

  int minibatch = 256;
  int samples = 1;  // T
  int epochs_pretrain = 30;
  int epochs_gp = 15;
  int epochs_joint = 30;

  double lr_net = 1e-3;
  double lr_kernel = 1e-2;
  double lr_variational = 1e-2;
  double lr_mixing = 1e-3;
  double pretrain_lr = 1e-2;
  double pretrain_momentum = 0.9;
  std::string optimizer = "adam";  // "adam" or "sgd"

  std::uint64_t seed = 0;
  double grid_margin = 0.1;
  int eval_samples = 16;
  int threads = 1;

  void validate() const;
  std::vector<int> effective_grid_size() const;
};

// The full trainable parameter set: network weights, per-GP kernel
// hyperparameters and variational states, the mixing matrix, and the frozen
// squash maps tying them together.
struct DeepKernelModel {
  MlpSpec spec;
  MlpWeights net;
  std::vector<GpUnit> gps;
  std::vector<std::vector<SquashMap>> squash;  // [gp][dim]
  MixingMatrix mixing;
  Index n_total = 0;
  int n_classes = 0;
  bool gp_ready = false;

  int n_gps() const { return int(gps.size()); }
  int feature_dim() const { return spec.output_dim(); }
};

DeepKernelModel init_model(int input_dim, int n_classes, Index n_total, const TrainConfig& cfg);

// Flat gradient container mirroring the model's parameter blocks.
struct MinibatchGrad {
  MlpGrad net;
  std::vector<Vector> kernel;              // per GP: D lengthscales then signal var
  std::vector<Vector> mu;                  // per GP
  std::vector<std::vector<Matrix>> l_raw;  // per GP per factor, unconstrained space
  Matrix mixing;
};

enum class ParamBlock { Net, Kernel, Variational, Mixing };

Vector get_params(const DeepKernelModel& model, ParamBlock block);
void set_params(DeepKernelModel& model, ParamBlock block, const Vector& v);
Vector get_grad(const MinibatchGrad& grad, ParamBlock block);

// Frozen per-GP, per-sample standard normal draws.
using NoiseDraws = std::vector<std::vector<Vector>>;
NoiseDraws draw_noise(const DeepKernelModel& model, int samples, Rng& rng);

struct ElboResult {
  double elbo = 0.0;
  double lik_term = 0.0;  // (N / TB) sum log p(y_i | f_i^(t))
  double kl_term = 0.0;   // sum over GPs
};

// Minibatch estimate of the marginal-likelihood lower bound and, when
// requested, gradients for every parameter block (pathwise likelihood
// gradients plus analytic KL gradients). Throws NumericError naming the
// first non-finite block.
ElboResult elbo_minibatch(const DeepKernelModel& model, const Matrix& x_batch,
                          const std::vector<int>& y_batch, Index n_total,
                          const NoiseDraws& noise, MinibatchGrad* grad = nullptr,
                          int threads = 1);

struct IterRecord {
  long iter;
  int phase;
  double elbo;
  double wall_s;
};

struct EpochRecord {
  int phase;
  int epoch;
  double accuracy;
  double nlp;
};

struct TrainLog {
  std::vector<double> pretrain_loss;
  std::vector<IterRecord> iters;
  std::vector<EpochRecord> epochs;
  std::string rng_state;  // noise stream state at the end of training
};

// Three-phase pipeline: (1) network pretraining with the softmax loss;
// (2) GP layer initialization from the frozen features, then optimization of
// kernel, variational, and mixing parameters; (3) joint optimization of all
// blocks with stochastic minibatches.
TrainLog fit(DeepKernelModel& model, const Dataset& train, const Dataset* validation,
             const TrainConfig& cfg);

struct Metrics {
  double accuracy = 0.0;
  double nlp = 0.0;
};

// Predictive class probabilities: average of softmax(A f) over s posterior
// draws; s = 0 plugs in the variational mean.
Matrix predict_probs(const DeepKernelModel& model, const Matrix& x, int s_samples,
                     std::uint64_t seed);
std::vector<int> predict_labels(const Matrix& probs);

Metrics evaluate(const DeepKernelModel& model, const Dataset& ds, int s_samples,
                 std::uint64_t seed);

// Posterior covariance of f_j = M u_j over the given inputs: M S M^T.
Matrix induced_covariance(const DeepKernelModel& model, const Matrix& x, int gp_index,
                          Index max_points = 3000);

// Writes the induced covariance as CSV and PGM, and the mixing matrix as CSV:
// <prefix>_cov_gp<j>.csv/.pgm and <prefix>_mixing.csv.
void dump_covariance(const DeepKernelModel& model, const Matrix& x_sorted_by_label, int gp_index,
                     const std::string& out_prefix, Index max_points = 3000);

void write_train_log(const TrainLog& log, const std::string& path);

}  // namespace svdkl
