#pragma once

#include "svdkl/common.hpp"
#include "svdkl/interp.hpp"
#include "svdkl/kernels.hpp"
#include "svdkl/kron.hpp"

#include <vector>

namespace svdkl {

// Gaussian variational posterior q(u) = N(mu, S) with S = (x)L_d (x)L_d^T.
struct VariationalState {
  Vector mu;
  KroneckerLower l;

  Index dim() const { return mu.size(); }
};

// One additive-layer GP: its inducing grid, base kernel, variational state,
// and the network features it reads.
struct GpUnit {
  InducingGrid grid;
  RbfParams kernel;
  VariationalState vstate;
  std::vector<int> feature_subset;  // size D
};

// Prior covariance K_{Z,Z} as per-dimension RBF factors.
KroneckerPSD prior_cov(const InducingGrid& grid, const RbfParams& kernel);

// mu = 0 and L_d = chol(K_d), so S = K and the KL starts at zero.
VariationalState init_variational_state(const InducingGrid& grid, const RbfParams& kernel);

// u = mu + ((x)L_d) eps; cost O(m^(1+1/D)).
Vector sample_u(const VariationalState& vs, const Vector& eps);

// f = M u over the interpolation rows.
Vector latent_f(const std::vector<InterpWeights>& rows, const Vector& u);

// KL[q(u) || N(0, K_{Z,Z})], closed form assembled from the per-factor
// Kronecker operations; cost O(sum m_d^3).
double kl_value(const GpUnit& gp);

struct KlThetaGrad {
  Vector d_log_lengthscale;  // size D
  double d_log_signal_var = 0.0;
};

// dKL/dtheta for the base kernel hyperparameters. Each per-dimension
// parameter perturbs exactly one Kronecker factor, so every trace splits
// into a product of per-factor traces.
KlThetaGrad kl_grad_theta(const GpUnit& gp);

struct VariationalGrad {
  Vector d_mu;
  std::vector<Matrix> d_l_dense;  // per factor, gradient w.r.t. the dense L_d

  VariationalGrad() = default;
  explicit VariationalGrad(const VariationalState& vs);
  void accumulate(const VariationalGrad& other, double scale = 1.0);
};

// dKL/dmu = K^-1 mu; dKL/dL_d = lower(-(m/m_d) L_d^-T + c_d K_d^-1 L_d)
// with c_d the product of the other factors' tr(K^-1 S).
VariationalGrad kl_grad_variational(const GpUnit& gp);

// Everything the trainer needs from one prior factorization.
struct KlResult {
  double value = 0.0;
  KlThetaGrad theta;
  VariationalGrad variational;
};
KlResult kl_with_grads(const GpUnit& gp);

// Pathwise gradient of a likelihood term through f = M(mu + L eps), given
// dL/df for the batch and the exact noise used for the sample:
// d_mu = M^T g, d_L_d = lower(mode-d unfolding of M^T g against
// ((x)_{d' != d} L_{d'}) eps).
VariationalGrad backprop_f_to_variational(const std::vector<InterpWeights>& rows,
                                          const Vector& d_f, const Vector& eps,
                                          const KroneckerLower& l);

}  // namespace svdkl
