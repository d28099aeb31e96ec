#include "svdkl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace svdkl {

void MlpSpec::validate() const {
  if (widths.size() < 3) throw std::invalid_argument("MlpSpec: need at least one hidden layer");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("MlpSpec: widths must be positive");
  }
}

Index MlpWeights::num_params() const {
  Index n = 0;
  for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
  return n;
}

Vector MlpWeights::flatten() const {
  Vector v(num_params());
  Index at = 0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    v.segment(at, w[l].size()) = Eigen::Map<const Vector>(w[l].data(), w[l].size());
    at += w[l].size();
    v.segment(at, b[l].size()) = b[l];
    at += b[l].size();
  }
  return v;
}

void MlpWeights::set_from_flat(const Vector& v) {
  if (v.size() != num_params()) throw std::invalid_argument("MlpWeights: flat size mismatch");
  Index at = 0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Eigen::Map<Vector>(w[l].data(), w[l].size()) = v.segment(at, w[l].size());
    at += w[l].size();
    b[l] = v.segment(at, b[l].size());
    at += b[l].size();
  }
}

MlpWeights init_weights(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpWeights out;
  const int layers = spec.layers();
  for (int l = 0; l < layers; ++l) {
    const int fan_in = spec.widths[std::size_t(l)];
    const int fan_out = spec.widths[std::size_t(l) + 1];
    const bool output_layer = (l == layers - 1);
    const double limit = output_layer ? std::sqrt(6.0 / double(fan_in + fan_out))
                                      : std::sqrt(6.0 / double(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(fan_out, fan_in);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    out.w.push_back(std::move(w));
    out.b.push_back(Vector::Zero(fan_out));
  }
  return out;
}

Matrix forward(const MlpSpec& spec, const MlpWeights& w, const Matrix& x_batch,
               ForwardCache* cache) {
  spec.validate();
  if (x_batch.cols() != spec.input_dim()) {
    throw std::invalid_argument("forward: input width " + std::to_string(x_batch.cols()) +
                                " does not match spec width " + std::to_string(spec.input_dim()));
  }
  const int layers = spec.layers();
  if (cache) {
    cache->input = x_batch;
    cache->preact.assign(std::size_t(layers), Matrix());
    cache->act.assign(std::size_t(layers), Matrix());
  }
  Matrix a = x_batch;
  for (int l = 0; l < layers; ++l) {
    Matrix z = (a * w.w[std::size_t(l)].transpose()).rowwise() + w.b[std::size_t(l)].transpose();
    const bool hidden = (l < layers - 1);
    Matrix act = hidden ? z.cwiseMax(0.0) : z;
    if (cache) {
      cache->preact[std::size_t(l)] = z;
      cache->act[std::size_t(l)] = act;
    }
    a = std::move(act);
  }
  return a;
}

MlpGrad backward(const MlpSpec& spec, const MlpWeights& w, const ForwardCache& cache,
                 const Matrix& d_features, Matrix* d_input) {
  const int layers = spec.layers();
  if (int(cache.preact.size()) != layers || cache.act.empty()) {
    throw std::logic_error("backward: cache does not match spec");
  }
  if (d_features.rows() != cache.input.rows() || d_features.cols() != spec.output_dim()) {
    throw std::invalid_argument("backward: d_features shape mismatch");
  }
  MlpGrad grad;
  grad.w.assign(std::size_t(layers), Matrix());
  grad.b.assign(std::size_t(layers), Vector());

  Matrix dz = d_features;  // output layer is linear
  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& below = (l == 0) ? cache.input : cache.act[std::size_t(l) - 1];
    grad.w[std::size_t(l)] = dz.transpose() * below;
    grad.b[std::size_t(l)] = dz.colwise().sum();
    if (l == 0) {
      if (d_input) *d_input = dz * w.w[0];
      break;
    }
    Matrix da = dz * w.w[std::size_t(l)];
    dz = da.cwiseProduct(
        (cache.preact[std::size_t(l) - 1].array() > 0.0).cast<double>().matrix());
  }
  return grad;
}

Vector MlpGrad::flatten() const {
  Index n = 0;
  for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
  Vector v(n);
  Index at = 0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    v.segment(at, w[l].size()) = Eigen::Map<const Vector>(w[l].data(), w[l].size());
    at += w[l].size();
    v.segment(at, b[l].size()) = b[l];
    at += b[l].size();
  }
  return v;
}

double softmax_xent(const Matrix& logits, const std::vector<int>& labels, Matrix* d_logits) {
  const Index n = logits.rows();
  if (Index(labels.size()) != n) throw std::invalid_argument("softmax_xent: label count mismatch");
  if (d_logits) d_logits->setZero(n, logits.cols());
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    Vector z = logits.row(i);
    const double lse = logsumexp(z);
    const int y = labels[std::size_t(i)];
    if (y < 0 || y >= logits.cols()) throw std::invalid_argument("softmax_xent: label out of range");
    loss -= z[y] - lse;
    if (d_logits) {
      Vector p = (z.array() - lse).exp();
      p[y] -= 1.0;
      d_logits->row(i) = p / double(n);
    }
  }
  return loss / double(n);
}

std::vector<double> pretrain(const MlpSpec& spec, MlpWeights& w, const Matrix& x,
                             const std::vector<int>& y, int n_classes, const PretrainConfig& cfg) {
  spec.validate();
  if (spec.output_dim() != n_classes) {
    throw std::invalid_argument("pretrain: output width must equal the class count");
  }
  if (x.rows() == 0) throw std::invalid_argument("pretrain: empty dataset");
  const Index n = x.rows();
  std::vector<double> trajectory;
  if (cfg.epochs <= 0) return trajectory;

  Rng rng(mix_seed(cfg.seed, 0x11));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));

  Vector velocity = Vector::Zero(w.num_params());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MlpWeights snapshot = w;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index start = 0; start < n; start += cfg.batch) {
      const Index count = std::min<Index>(cfg.batch, n - start);
      Matrix xb(count, x.cols());
      std::vector<int> yb(static_cast<std::size_t>(count));
      for (Index i = 0; i < count; ++i) {
        xb.row(i) = x.row(order[std::size_t(start + i)]);
        yb[std::size_t(i)] = y[std::size_t(order[std::size_t(start + i)])];
      }
      ForwardCache cache;
      Matrix logits = forward(spec, w, xb, &cache);
      Matrix d_logits;
      const double loss = softmax_xent(logits, yb, &d_logits);
      MlpGrad grad = backward(spec, w, cache, d_logits);

      velocity = cfg.momentum * velocity - cfg.lr * grad.flatten();
      w.set_from_flat(w.flatten() + velocity);

      epoch_loss += loss;
      ++batches;
    }
    epoch_loss /= double(batches);
    if (!std::isfinite(epoch_loss)) {
      w = snapshot;
      throw NumericError("pretrain diverged at epoch " + std::to_string(epoch) +
                         "; weights restored to the last finite epoch");
    }
    trajectory.push_back(epoch_loss);
  }
  return trajectory;
}

}  // namespace svdkl
