#include "svdkl/mixing.hpp"

#include <cmath>

namespace svdkl {

MixingMatrix MixingMatrix::identity(Index n_classes, Index n_gps) {
  MixingMatrix m;
  m.a = Matrix::Identity(n_classes, n_gps);
  return m;
}

Vector class_logprobs(const MixingMatrix& mixing, const Vector& f) {
  if (f.size() != mixing.gps()) throw std::invalid_argument("class_logprobs: f size mismatch");
  Vector logits = mixing.a * f;
  return logits.array() - logsumexp(logits);
}

LoglikGrad loglik_grad(const MixingMatrix& mixing, const Vector& f, const Vector& y_onehot) {
  if (y_onehot.size() != mixing.classes()) {
    throw std::invalid_argument("loglik_grad: label size mismatch");
  }
  int ones = 0;
  for (Index c = 0; c < y_onehot.size(); ++c) {
    if (y_onehot[c] == 1.0) {
      ++ones;
    } else if (y_onehot[c] != 0.0) {
      throw std::invalid_argument("loglik_grad: y must be one-hot");
    }
  }
  if (ones != 1) throw std::invalid_argument("loglik_grad: y must be one-hot");

  Vector p = class_logprobs(mixing, f).array().exp();
  Vector residual = y_onehot - p;
  LoglikGrad g;
  g.d_a = residual * f.transpose();
  g.d_f = mixing.a.transpose() * residual;
  return g;
}

double nlp_metric(const Matrix& probabilities, const std::vector<int>& labels) {
  const Index n = probabilities.rows();
  if (Index(labels.size()) != n) throw std::invalid_argument("nlp_metric: label count mismatch");
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[std::size_t(i)];
    if (y < 0 || y >= probabilities.cols()) throw std::invalid_argument("nlp_metric: label out of range");
    total -= std::log(std::max(probabilities(i, y), 1e-12));
  }
  return n > 0 ? total / double(n) : 0.0;
}

Matrix mean_softmax(const std::vector<Matrix>& logit_draws) {
  if (logit_draws.empty()) throw std::invalid_argument("mean_softmax: no draws");
  Matrix acc = Matrix::Zero(logit_draws[0].rows(), logit_draws[0].cols());
  for (const Matrix& logits : logit_draws) {
    for (Index i = 0; i < logits.rows(); ++i) {
      Vector z = logits.row(i);
      acc.row(i) += ((z.array() - logsumexp(z)).exp()).matrix().transpose();
    }
  }
  return acc / double(logit_draws.size());
}

}  // namespace svdkl
