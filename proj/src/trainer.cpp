#include "svdkl/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace svdkl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
void parallel_over(int threads, int n, F&& f) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      try {
        for (int i; (i = next.fetch_add(1)) < n;) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Vector onehot(int y, Index n_classes) {
  Vector v = Vector::Zero(n_classes);
  v[y] = 1.0;
  return v;
}

// Simple per-block first-order optimizers on flattened parameters; gradients
// are of the objective to ascend.
struct BlockOptimizer {
  std::string kind;
  double lr = 1e-3;
  Vector m, v;
  long t = 0;

  void step(Vector& params, const Vector& grad) {
    if (kind == "sgd") {
      params += lr * grad;
      return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (t == 0) {
      m = Vector::Zero(params.size());
      v = Vector::Zero(params.size());
    }
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad).eval();
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    Vector denom = (v / bc2).cwiseSqrt();
    denom.array() += eps;
    params += (lr / bc1) * m.cwiseQuotient(denom);
  }
};

}  // namespace

void TrainConfig::validate() const {
  if (minibatch < 1) throw ConfigError("minibatch size must be >= 1");
  if (samples < 1) throw ConfigError("sample count T must be >= 1");
  if (gp_dim < 1 || gp_dim > 3) throw ConfigError("gp_dim must be 1, 2, or 3");
  if (epochs_pretrain < 0 || epochs_gp < 0 || epochs_joint < 0) {
    throw ConfigError("epoch counts must be nonnegative");
  }
  if (hidden.empty()) throw ConfigError("need at least one hidden layer");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
  }
  if (optimizer != "adam" && optimizer != "sgd") {
    throw ConfigError("optimizer must be 'adam' or 'sgd'");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(grid_margin >= 0.0)) throw ConfigError("grid margin must be nonnegative");
  for (int g : grid_size) {
    if (g < 4) throw ConfigError("grid sizes must be >= 4");
  }
  if (!grid_size.empty() && int(grid_size.size()) != 1 && int(grid_size.size()) != gp_dim) {
    throw ConfigError("grid_size must have 1 or gp_dim entries");
  }
  if (eval_samples < 0) throw ConfigError("eval_samples must be >= 0");
}

std::vector<int> TrainConfig::effective_grid_size() const {
  if (!grid_size.empty()) {
    if (int(grid_size.size()) == gp_dim) return grid_size;
    return std::vector<int>(std::size_t(gp_dim), grid_size[0]);
  }
  static const int defaults[4] = {0, 64, 32, 16};
  return std::vector<int>(std::size_t(gp_dim), defaults[gp_dim]);
}

DeepKernelModel init_model(int input_dim, int n_classes, Index n_total, const TrainConfig& cfg) {
  cfg.validate();
  if (input_dim < 1) throw ConfigError("input dimension must be positive");
  if (n_classes < 2) throw ConfigError("need at least two classes");
  const int q = n_classes;  // one GP feature group per class by default
  if (q % cfg.gp_dim != 0) {
    throw ConfigError("class count must be divisible by gp_dim so GPs cover the features");
  }
  DeepKernelModel model;
  model.spec.widths.push_back(input_dim);
  for (int h : cfg.hidden) model.spec.widths.push_back(h);
  model.spec.widths.push_back(q);
  model.spec.validate();
  Rng rng(mix_seed(cfg.seed, 0x01));
  model.net = init_weights(model.spec, rng);
  model.n_classes = n_classes;
  model.n_total = n_total;
  return model;
}

namespace {

// Phase-2 GP layer construction: grids from the empirical squashed-feature
// range, squash maps into the central 90% of each grid, variational states
// started at the prior.
void init_gp_layer(DeepKernelModel& model, const Matrix& x_train, const TrainConfig& cfg) {
  const Matrix features = forward(model.spec, model.net, x_train);
  const int q = model.feature_dim();
  const int dims = cfg.gp_dim;
  const int n_gps = q / dims;
  const std::vector<int> m_per_dim = cfg.effective_grid_size();

  model.gps.clear();
  model.squash.clear();
  for (int j = 0; j < n_gps; ++j) {
    std::vector<int> feature_subset(static_cast<std::size_t>(dims));
    std::vector<SquashMap> maps(static_cast<std::size_t>(dims));
    Vector lo(dims), hi(dims);
    for (int d = 0; d < dims; ++d) {
      const int col = j * dims + d;
      feature_subset[std::size_t(d)] = col;
      const double center = features.col(col).mean();
      const double sd =
          std::sqrt((features.col(col).array() - center).square().mean());
      const double scale = 1.0 / (2.0 * std::max(sd, 1e-6));
      double s_lo = 1.0, s_hi = -1.0;
      for (Index i = 0; i < features.rows(); ++i) {
        const double s = std::tanh(scale * (features(i, col) - center));
        s_lo = std::min(s_lo, s);
        s_hi = std::max(s_hi, s);
      }
      lo[d] = s_lo;
      hi[d] = s_hi;
      maps[std::size_t(d)].center = center;
      maps[std::size_t(d)].scale = scale;
    }
    InducingGrid grid = build_grid(lo, hi, m_per_dim, cfg.grid_margin);
    RbfParams kernel;
    kernel.log_lengthscale = Vector(dims);
    kernel.log_signal_var = 0.0;
    for (int d = 0; d < dims; ++d) {
      const Grid1D& g = grid.dims[std::size_t(d)];
      kernel.log_lengthscale[d] = std::log((g.hi - g.lo) / 10.0);
      maps[std::size_t(d)].out_mid = 0.5 * (g.lo + g.hi);
      maps[std::size_t(d)].out_rad = 0.45 * (g.hi - g.lo);
    }
    GpUnit gp{grid, kernel, init_variational_state(grid, kernel), feature_subset};
    model.gps.push_back(std::move(gp));
    model.squash.push_back(std::move(maps));
  }
  model.mixing = MixingMatrix::identity(model.n_classes, n_gps);
  model.gp_ready = true;
}

}  // namespace

Vector get_params(const DeepKernelModel& model, ParamBlock block) {
  switch (block) {
    case ParamBlock::Net:
      return model.net.flatten();
    case ParamBlock::Kernel: {
      Index n = 0;
      for (const auto& gp : model.gps) n += gp.kernel.log_lengthscale.size() + 1;
      Vector v(n);
      Index at = 0;
      for (const auto& gp : model.gps) {
        v.segment(at, gp.kernel.log_lengthscale.size()) = gp.kernel.log_lengthscale;
        at += gp.kernel.log_lengthscale.size();
        v[at++] = gp.kernel.log_signal_var;
      }
      return v;
    }
    case ParamBlock::Variational: {
      Index n = 0;
      for (const auto& gp : model.gps) {
        n += gp.vstate.mu.size();
        for (const auto& f : gp.vstate.l.factors) n += f.num_params();
      }
      Vector v(n);
      Index at = 0;
      for (const auto& gp : model.gps) {
        v.segment(at, gp.vstate.mu.size()) = gp.vstate.mu;
        at += gp.vstate.mu.size();
        for (const auto& f : gp.vstate.l.factors) {
          v.segment(at, f.num_params()) = f.flatten();
          at += f.num_params();
        }
      }
      return v;
    }
    case ParamBlock::Mixing:
      return Eigen::Map<const Vector>(model.mixing.a.data(), model.mixing.a.size());
  }
  throw std::logic_error("get_params: unknown block");
}

void set_params(DeepKernelModel& model, ParamBlock block, const Vector& v) {
  switch (block) {
    case ParamBlock::Net:
      model.net.set_from_flat(v);
      return;
    case ParamBlock::Kernel: {
      Index at = 0;
      for (auto& gp : model.gps) {
        gp.kernel.log_lengthscale = v.segment(at, gp.kernel.log_lengthscale.size());
        at += gp.kernel.log_lengthscale.size();
        gp.kernel.log_signal_var = v[at++];
      }
      if (at != v.size()) throw std::invalid_argument("set_params: kernel size mismatch");
      return;
    }
    case ParamBlock::Variational: {
      Index at = 0;
      for (auto& gp : model.gps) {
        gp.vstate.mu = v.segment(at, gp.vstate.mu.size());
        at += gp.vstate.mu.size();
        for (auto& f : gp.vstate.l.factors) {
          f.set_from_flat(v.segment(at, f.num_params()));
          at += f.num_params();
        }
      }
      if (at != v.size()) throw std::invalid_argument("set_params: variational size mismatch");
      return;
    }
    case ParamBlock::Mixing:
      if (v.size() != model.mixing.a.size()) {
        throw std::invalid_argument("set_params: mixing size mismatch");
      }
      Eigen::Map<Vector>(model.mixing.a.data(), model.mixing.a.size()) = v;
      return;
  }
}

Vector get_grad(const MinibatchGrad& grad, ParamBlock block) {
  switch (block) {
    case ParamBlock::Net:
      return grad.net.flatten();
    case ParamBlock::Kernel: {
      Index n = 0;
      for (const auto& g : grad.kernel) n += g.size();
      Vector v(n);
      Index at = 0;
      for (const auto& g : grad.kernel) {
        v.segment(at, g.size()) = g;
        at += g.size();
      }
      return v;
    }
    case ParamBlock::Variational: {
      Index n = 0;
      for (std::size_t j = 0; j < grad.mu.size(); ++j) {
        n += grad.mu[j].size();
        for (const auto& lm : grad.l_raw[j]) n += lm.rows() * (lm.rows() + 1) / 2;
      }
      Vector v(n);
      Index at = 0;
      for (std::size_t j = 0; j < grad.mu.size(); ++j) {
        v.segment(at, grad.mu[j].size()) = grad.mu[j];
        at += grad.mu[j].size();
        for (const auto& lm : grad.l_raw[j]) {
          for (Index p = 0; p < lm.rows(); ++p)
            for (Index q = 0; q <= p; ++q) v[at++] = lm(p, q);
        }
      }
      return v;
    }
    case ParamBlock::Mixing:
      return Eigen::Map<const Vector>(grad.mixing.data(), grad.mixing.size());
  }
  throw std::logic_error("get_grad: unknown block");
}

NoiseDraws draw_noise(const DeepKernelModel& model, int samples, Rng& rng) {
  NoiseDraws noise(std::size_t(model.n_gps()));
  for (std::size_t j = 0; j < noise.size(); ++j) {
    noise[j].reserve(std::size_t(samples));
    for (int t = 0; t < samples; ++t) {
      noise[j].push_back(standard_normal(model.gps[j].grid.total(), rng));
    }
  }
  return noise;
}

namespace {

struct GpBatch {
  Matrix inputs;                         // B x D squashed coordinates
  std::vector<InterpWeights> rows;       // B
  std::vector<InterpWeights> row_grads;  // B, gradient path only
  std::vector<Vector> u;                 // per sample t
  Matrix f;                              // B x T
};

void check_block_finite(bool ok, const std::string& name) {
  if (!ok) throw NumericError("non-finite value in block '" + name + "'");
}

}  // namespace

ElboResult elbo_minibatch(const DeepKernelModel& model, const Matrix& x_batch,
                          const std::vector<int>& y_batch, Index n_total,
                          const NoiseDraws& noise, MinibatchGrad* grad, int threads) {
  if (!model.gp_ready) throw std::logic_error("elbo_minibatch: GP layer not initialized");
  const Index batch = x_batch.rows();
  if (batch < 1) throw std::invalid_argument("elbo_minibatch: empty batch");
  if (Index(y_batch.size()) != batch) throw std::invalid_argument("elbo_minibatch: label count");
  const int n_gps = model.n_gps();
  if (int(noise.size()) != n_gps || noise[0].empty()) {
    throw std::invalid_argument("elbo_minibatch: noise draws do not match the model");
  }
  const int samples = int(noise[0].size());
  const double scale = double(n_total) / (double(samples) * double(batch));

  ForwardCache cache;
  const Matrix features =
      forward(model.spec, model.net, x_batch, grad ? &cache : nullptr);

  // Per-GP interpolation rows and latent samples.
  std::vector<GpBatch> gp_batches(static_cast<std::size_t>(n_gps));
  parallel_over(threads, n_gps, [&](int j) {
    const GpUnit& gp = model.gps[std::size_t(j)];
    const int dims = gp.grid.ndims();
    GpBatch& gb = gp_batches[std::size_t(j)];
    gb.inputs.resize(batch, dims);
    gb.rows.reserve(std::size_t(batch));
    if (grad) gb.row_grads.reserve(std::size_t(batch));
    for (Index i = 0; i < batch; ++i) {
      Vector x(dims);
      for (int d = 0; d < dims; ++d) {
        const auto& sq = model.squash[std::size_t(j)][std::size_t(d)];
        x[d] = sq.apply(features(i, gp.feature_subset[std::size_t(d)]));
      }
      gb.inputs.row(i) = x;
      gb.rows.push_back(interp_row(gp.grid, x));
      if (grad) gb.row_grads.push_back(interp_row_grad(gp.grid, x));
    }
    gb.f.resize(batch, samples);
    for (int t = 0; t < samples; ++t) {
      gb.u.push_back(sample_u(gp.vstate, noise[std::size_t(j)][std::size_t(t)]));
      gb.f.col(t) = apply_m(gb.rows, gb.u.back());
    }
  });

  // Likelihood term and its logit-level gradients.
  double loglik = 0.0;
  Matrix d_mixing = Matrix::Zero(model.mixing.classes(), model.mixing.gps());
  std::vector<Matrix> g_f(static_cast<std::size_t>(samples));  // B x J per sample
  for (int t = 0; t < samples; ++t) {
    Matrix f_t(batch, n_gps);
    for (int j = 0; j < n_gps; ++j) f_t.col(j) = gp_batches[std::size_t(j)].f.col(t);
    Matrix logits = f_t * model.mixing.a.transpose();
    Matrix resid(batch, model.n_classes);
    for (Index i = 0; i < batch; ++i) {
      const int y = y_batch[std::size_t(i)];
      if (y < 0 || y >= model.n_classes) {
        throw std::invalid_argument("elbo_minibatch: label out of range");
      }
      Vector z = logits.row(i);
      const double lse = logsumexp(z);
      loglik += z[y] - lse;
      if (grad) resid.row(i) = (onehot(y, model.n_classes) - (z.array() - lse).exp().matrix());
    }
    if (grad) {
      d_mixing.noalias() += scale * resid.transpose() * f_t;
      g_f[std::size_t(t)] = scale * resid * model.mixing.a;  // B x J, dELBO/df
    }
  }
  const double lik_term = scale * loglik;

  // KL and per-GP gradient assembly.
  std::vector<double> kl_values(static_cast<std::size_t>(n_gps));
  Matrix d_features = Matrix::Zero(batch, model.feature_dim());
  std::vector<Matrix> d_features_per_gp;
  MinibatchGrad local;
  if (grad) {
    d_features_per_gp.assign(std::size_t(n_gps), Matrix());
    local.kernel.resize(std::size_t(n_gps));
    local.mu.resize(std::size_t(n_gps));
    local.l_raw.resize(std::size_t(n_gps));
  }

  parallel_over(threads, n_gps, [&](int j) {
    const GpUnit& gp = model.gps[std::size_t(j)];
    GpBatch& gb = gp_batches[std::size_t(j)];
    if (!grad) {
      kl_values[std::size_t(j)] = kl_value(gp);
      return;
    }
    KlResult kl = kl_with_grads(gp);
    kl_values[std::size_t(j)] = kl.value;

    VariationalGrad acc(gp.vstate);
    Matrix dh = Matrix::Zero(batch, model.feature_dim());
    for (int t = 0; t < samples; ++t) {
      const Vector gf_col = g_f[std::size_t(t)].col(j);
      acc.accumulate(backprop_f_to_variational(gb.rows, gf_col,
                                               noise[std::size_t(j)][std::size_t(t)], gp.vstate.l));
      for (Index i = 0; i < batch; ++i) {
        const Vector dfdx =
            interp_point_grad(gb.rows[std::size_t(i)], gb.row_grads[std::size_t(i)],
                              gb.u[std::size_t(t)]);
        for (int d = 0; d < gp.grid.ndims(); ++d) {
          const int col = gp.feature_subset[std::size_t(d)];
          const auto& sq = model.squash[std::size_t(j)][std::size_t(d)];
          dh(i, col) += gf_col[i] * dfdx[d] * sq.deriv(features(i, col));
        }
      }
    }
    // ELBO = likelihood - KL.
    acc.accumulate(kl.variational, -1.0);

    Vector d_kernel(gp.kernel.log_lengthscale.size() + 1);
    d_kernel.head(gp.kernel.log_lengthscale.size()) = -kl.theta.d_log_lengthscale;
    d_kernel[d_kernel.size() - 1] = -kl.theta.d_log_signal_var;

    local.kernel[std::size_t(j)] = std::move(d_kernel);
    local.mu[std::size_t(j)] = std::move(acc.d_mu);
    auto& l_raw = local.l_raw[std::size_t(j)];
    for (std::size_t d = 0; d < gp.vstate.l.factors.size(); ++d) {
      l_raw.push_back(gp.vstate.l.factors[d].grad_to_raw(acc.d_l_dense[d]));
    }
    d_features_per_gp[std::size_t(j)] = std::move(dh);
  });

  double kl_term = 0.0;
  for (double v : kl_values) kl_term += v;

  ElboResult result;
  result.lik_term = lik_term;
  result.kl_term = kl_term;
  result.elbo = lik_term - kl_term;

  if (!std::isfinite(result.elbo)) {
    check_block_finite(std::isfinite(lik_term), "likelihood");
    for (int j = 0; j < n_gps; ++j) {
      check_block_finite(std::isfinite(kl_values[std::size_t(j)]), "kl[" + std::to_string(j) + "]");
    }
    throw NumericError("non-finite ELBO");
  }

  if (grad) {
    for (int j = 0; j < n_gps; ++j) d_features += d_features_per_gp[std::size_t(j)];
    local.net = backward(model.spec, model.net, cache, d_features);
    local.mixing = std::move(d_mixing);

    check_block_finite(local.net.flatten().allFinite(), "net");
    for (int j = 0; j < n_gps; ++j) {
      check_block_finite(local.kernel[std::size_t(j)].allFinite(),
                         "kernel[" + std::to_string(j) + "]");
      check_block_finite(local.mu[std::size_t(j)].allFinite(), "mu[" + std::to_string(j) + "]");
      for (const auto& lm : local.l_raw[std::size_t(j)]) {
        check_block_finite(lm.allFinite(), "L[" + std::to_string(j) + "]");
      }
    }
    check_block_finite(local.mixing.allFinite(), "mixing");
    *grad = std::move(local);
  }
  return result;
}

namespace {

void run_sv_phase(DeepKernelModel& model, const Dataset& train, const Dataset* validation,
                  const TrainConfig& cfg, int phase, int epochs,
                  const std::vector<ParamBlock>& blocks, Rng& shuffle_rng, Rng& noise_rng,
                  TrainLog& log, long& iter, Clock::time_point t0) {
  if (epochs <= 0) return;
  std::vector<BlockOptimizer> opts;
  for (ParamBlock b : blocks) {
    BlockOptimizer o;
    o.kind = cfg.optimizer;
    switch (b) {
      case ParamBlock::Net: o.lr = cfg.lr_net; break;
      case ParamBlock::Kernel: o.lr = cfg.lr_kernel; break;
      case ParamBlock::Variational: o.lr = cfg.lr_variational; break;
      case ParamBlock::Mixing: o.lr = cfg.lr_mixing; break;
    }
    opts.push_back(std::move(o));
  }

  const Index n = train.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  MinibatchGrad grad;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (Index start = 0; start < n; start += cfg.minibatch) {
      const Index count = std::min<Index>(cfg.minibatch, n - start);
      Matrix xb(count, train.x.cols());
      std::vector<int> yb(static_cast<std::size_t>(count));
      for (Index i = 0; i < count; ++i) {
        xb.row(i) = train.x.row(order[std::size_t(start + i)]);
        yb[std::size_t(i)] = train.y[std::size_t(order[std::size_t(start + i)])];
      }
      NoiseDraws noise = draw_noise(model, cfg.samples, noise_rng);
      ElboResult r = elbo_minibatch(model, xb, yb, model.n_total, noise, &grad, cfg.threads);
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        Vector params = get_params(model, blocks[b]);
        opts[b].step(params, get_grad(grad, blocks[b]));
        set_params(model, blocks[b], params);
      }
      log.iters.push_back({iter++, phase, r.elbo, seconds_since(t0)});
    }
    if (validation && validation->size() > 0) {
      Metrics m = evaluate(model, *validation, cfg.eval_samples, mix_seed(cfg.seed, 0x99));
      log.epochs.push_back({phase, epoch, m.accuracy, m.nlp});
    }
  }
}

}  // namespace

TrainLog fit(DeepKernelModel& model, const Dataset& train, const Dataset* validation,
             const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw std::invalid_argument("fit: empty training set");
  for (int y : train.y) {
    if (y < 0 || y >= model.n_classes) throw std::invalid_argument("fit: label out of range");
  }
  model.n_total = train.size();
  const auto t0 = Clock::now();
  TrainLog log;

  // Phase 1: network pretraining with the softmax loss.
  if (cfg.epochs_pretrain > 0) {
    PretrainConfig pc;
    pc.epochs = cfg.epochs_pretrain;
    pc.lr = cfg.pretrain_lr;
    pc.momentum = cfg.pretrain_momentum;
    pc.batch = cfg.minibatch;
    pc.seed = cfg.seed;
    log.pretrain_loss = pretrain(model.spec, model.net, train.x, train.y, model.n_classes, pc);
  }

  // Phase 2: GP layer on the frozen features.
  init_gp_layer(model, train.x, cfg);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x02));
  Rng noise_rng(mix_seed(cfg.seed, 0x03));
  long iter = 0;
  run_sv_phase(model, train, validation, cfg, 2, cfg.epochs_gp,
               {ParamBlock::Kernel, ParamBlock::Variational, ParamBlock::Mixing}, shuffle_rng,
               noise_rng, log, iter, t0);

  // Phase 3: joint training of all blocks.
  run_sv_phase(model, train, validation, cfg, 3, cfg.epochs_joint,
               {ParamBlock::Net, ParamBlock::Kernel, ParamBlock::Variational, ParamBlock::Mixing},
               shuffle_rng, noise_rng, log, iter, t0);

  std::ostringstream rng_state;
  rng_state << noise_rng;
  log.rng_state = rng_state.str();
  return log;
}

Matrix predict_probs(const DeepKernelModel& model, const Matrix& x, int s_samples,
                     std::uint64_t seed) {
  if (!model.gp_ready) throw std::logic_error("predict: GP layer not initialized");
  const Index n = x.rows();
  const int n_gps = model.n_gps();
  const Matrix features = forward(model.spec, model.net, x);

  std::vector<std::vector<InterpWeights>> rows(static_cast<std::size_t>(n_gps));
  for (int j = 0; j < n_gps; ++j) {
    const GpUnit& gp = model.gps[std::size_t(j)];
    rows[std::size_t(j)].reserve(std::size_t(n));
    for (Index i = 0; i < n; ++i) {
      Vector xi(gp.grid.ndims());
      for (int d = 0; d < gp.grid.ndims(); ++d) {
        xi[d] = model.squash[std::size_t(j)][std::size_t(d)].apply(
            features(i, gp.feature_subset[std::size_t(d)]));
      }
      rows[std::size_t(j)].push_back(interp_row(gp.grid, xi));
    }
  }

  std::vector<Matrix> logit_draws;
  if (s_samples <= 0) {
    Matrix f_mean(n, n_gps);
    for (int j = 0; j < n_gps; ++j) {
      f_mean.col(j) = apply_m(rows[std::size_t(j)], model.gps[std::size_t(j)].vstate.mu);
    }
    logit_draws.push_back(f_mean * model.mixing.a.transpose());
  } else {
    Rng rng(mix_seed(seed, 0x77));
    for (int t = 0; t < s_samples; ++t) {
      Matrix f_t(n, n_gps);
      for (int j = 0; j < n_gps; ++j) {
        const GpUnit& gp = model.gps[std::size_t(j)];
        Vector eps = standard_normal(gp.grid.total(), rng);
        f_t.col(j) = apply_m(rows[std::size_t(j)], sample_u(gp.vstate, eps));
      }
      logit_draws.push_back(f_t * model.mixing.a.transpose());
    }
  }
  return mean_softmax(logit_draws);
}

std::vector<int> predict_labels(const Matrix& probs) {
  std::vector<int> labels(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best;
    probs.row(i).maxCoeff(&best);
    labels[std::size_t(i)] = int(best);
  }
  return labels;
}

Metrics evaluate(const DeepKernelModel& model, const Dataset& ds, int s_samples,
                 std::uint64_t seed) {
  const Matrix probs = predict_probs(model, ds.x, s_samples, seed);
  const std::vector<int> pred = predict_labels(probs);
  Index correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == ds.y[i]) ++correct;
  }
  Metrics m;
  m.accuracy = ds.size() > 0 ? double(correct) / double(ds.size()) : 0.0;
  m.nlp = nlp_metric(probs, ds.y);
  return m;
}

Matrix induced_covariance(const DeepKernelModel& model, const Matrix& x, int gp_index,
                          Index max_points) {
  if (!model.gp_ready) throw std::logic_error("induced_covariance: GP layer not initialized");
  if (gp_index < 0 || gp_index >= model.n_gps()) {
    throw std::invalid_argument("induced_covariance: GP index out of range");
  }
  const Index n = x.rows();
  if (n > max_points) {
    throw std::invalid_argument("induced_covariance: " + std::to_string(n) +
                                " points exceed the cap of " + std::to_string(max_points) +
                                "; subsample the inputs");
  }
  const GpUnit& gp = model.gps[std::size_t(gp_index)];
  const Matrix features = forward(model.spec, model.net, x);
  const Index m = gp.grid.total();

  std::vector<Matrix> l_t;
  for (const Matrix& l : gp.vstate.l.dense_factors()) l_t.push_back(l.transpose());

  // Rows of M L, one kron MVM per evaluation point; cov = (M L)(M L)^T.
  Matrix v(n, m);
  for (Index i = 0; i < n; ++i) {
    Vector xi(gp.grid.ndims());
    for (int d = 0; d < gp.grid.ndims(); ++d) {
      xi[d] = model.squash[std::size_t(gp_index)][std::size_t(d)].apply(
          features(i, gp.feature_subset[std::size_t(d)]));
    }
    Vector r = Vector::Zero(m);
    interp_row(gp.grid, xi).for_each_nonzero([&](Index k, double w) { r[k] += w; });
    v.row(i) = kron_mvm(l_t, r);
  }
  return v * v.transpose();
}

void dump_covariance(const DeepKernelModel& model, const Matrix& x_sorted_by_label, int gp_index,
                     const std::string& out_prefix, Index max_points) {
  const Matrix cov = induced_covariance(model, x_sorted_by_label, gp_index, max_points);
  const std::string stem = out_prefix + "_cov_gp" + std::to_string(gp_index);
  write_matrix_csv(cov, stem + ".csv");
  write_matrix_pgm(cov, stem + ".pgm");
  write_matrix_csv(model.mixing.a, out_prefix + "_mixing.csv");
}

void write_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  using nlohmann::json;
  for (std::size_t i = 0; i < log.pretrain_loss.size(); ++i) {
    out << json{{"kind", "pretrain_epoch"}, {"epoch", i}, {"loss", log.pretrain_loss[i]}}.dump()
        << '\n';
  }
  for (const auto& r : log.iters) {
    out << json{{"kind", "iter"}, {"iter", r.iter}, {"phase", r.phase}, {"elbo", r.elbo},
                {"wall_s", r.wall_s}}
               .dump()
        << '\n';
  }
  for (const auto& r : log.epochs) {
    out << json{{"kind", "epoch"}, {"phase", r.phase}, {"epoch", r.epoch},
                {"accuracy", r.accuracy}, {"nlp", r.nlp}}
               .dump()
        << '\n';
  }
}

}  // namespace svdkl
