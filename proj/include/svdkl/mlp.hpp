#pragma once

#include "svdkl/common.hpp"

#include <vector>

namespace svdkl {

// Fully-connected feature extractor: ReLU on hidden layers, identity output.
struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., output

  int layers() const { return int(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  void validate() const;
};

struct MlpWeights {
  std::vector<Matrix> w;  // per layer, out x in
  std::vector<Vector> b;

  Index num_params() const;
  Vector flatten() const;
  void set_from_flat(const Vector& v);
};

// He-uniform on ReLU layers, Xavier-uniform on the linear output, zero biases.
MlpWeights init_weights(const MlpSpec& spec, Rng& rng);

struct ForwardCache {
  Matrix input;                 // batch x d
  std::vector<Matrix> preact;   // per layer, batch x width
  std::vector<Matrix> act;      // post-activation
};

// Features of a batch (rows are points); cache feeds backward().
Matrix forward(const MlpSpec& spec, const MlpWeights& w, const Matrix& x_batch,
               ForwardCache* cache = nullptr);

struct MlpGrad {
  std::vector<Matrix> w;
  std::vector<Vector> b;

  Vector flatten() const;
};

// Reverse-mode gradients for the batch; d_input is filled when non-null.
MlpGrad backward(const MlpSpec& spec, const MlpWeights& w, const ForwardCache& cache,
                 const Matrix& d_features, Matrix* d_input = nullptr);

// Softmax cross-entropy over logit rows; gradient is (softmax - onehot)/n.
double softmax_xent(const Matrix& logits, const std::vector<int>& labels, Matrix* d_logits = nullptr);

struct PretrainConfig {
  int epochs = 30;
  double lr = 1e-2;
  double momentum = 0.9;
  int batch = 64;
  std::uint64_t seed = 0;
};

// Softmax-loss SGD on the raw network output (requires output width == number
// of classes). Returns the per-epoch mean training loss. On divergence the
// weights are restored to the last finite epoch and NumericError is thrown.
std::vector<double> pretrain(const MlpSpec& spec, MlpWeights& w, const Matrix& x,
                             const std::vector<int>& y, int n_classes, const PretrainConfig& cfg);

}  // namespace svdkl
