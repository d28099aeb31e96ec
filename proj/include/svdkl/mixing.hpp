#pragma once

#include "svdkl/common.hpp"

#include <vector>

namespace svdkl {

// Linear mixing layer producing correlated class logits from the GP outputs.
struct MixingMatrix {
  Matrix a;  // C x J

  // Identity when C = J, rectangular identity otherwise.
  static MixingMatrix identity(Index n_classes, Index n_gps);

  Index classes() const { return a.rows(); }
  Index gps() const { return a.cols(); }
};

// log softmax(A f), max-subtracted.
Vector class_logprobs(const MixingMatrix& mixing, const Vector& f);

struct LoglikGrad {
  Matrix d_a;   // C x J
  Vector d_f;   // J
};

// Gradient of log p(y | f, A) for a one-hot y: d/df_j = sum_c (y_c - p_c) A_cj,
// d/dA = (y - p) f^T.
LoglikGrad loglik_grad(const MixingMatrix& mixing, const Vector& f, const Vector& y_onehot);

// Mean over test points of -log p(true class), probabilities floored at 1e-12.
double nlp_metric(const Matrix& probabilities, const std::vector<int>& labels);

// Row-wise average of softmax(logits) over posterior samples.
Matrix mean_softmax(const std::vector<Matrix>& logit_draws);

}  // namespace svdkl
