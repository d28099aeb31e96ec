#pragma once

#include "svdkl/common.hpp"

#include <string>
#include <vector>

namespace svdkl {

// RBF hyperparameters for one GP, in log space: one lengthscale per grid
// dimension plus a shared signal variance.
struct RbfParams {
  Vector log_lengthscale;  // size D
  double log_signal_var = 0.0;
};

// Equispaced 1-D inducing grid.
struct Grid1D {
  double lo = 0.0;
  double hi = 1.0;
  int m = 0;

  double spacing() const { return (hi - lo) / double(m - 1); }
  double point(int p) const { return lo + spacing() * double(p); }
  Vector points() const;
};

Grid1D make_grid1d(double lo, double hi, int m);

struct InducingGrid {
  std::vector<Grid1D> dims;

  int ndims() const { return int(dims.size()); }
  Index total() const;
  // Row-major strides: the first dimension varies slowest, matching the
  // Kronecker factor order.
  std::vector<Index> strides() const;
};

// Prior covariance factor for dimension d: sigma_d^2 exp(-(z_p-z_q)^2/(2 l_d^2))
// with sigma_d^2 = (sigma^2)^(1/D) so the Kronecker product carries the full
// signal variance.
Matrix rbf_factor(const Grid1D& g, const RbfParams& p, int d);

struct RbfFactorGrad {
  Matrix d_log_lengthscale;
  Matrix d_log_signal_var;
};

// Analytic derivatives of rbf_factor w.r.t. the log parameters.
RbfFactorGrad rbf_factor_grad(const Grid1D& g, const RbfParams& p, int d);

// Grid spanning [lo - margin*range, hi + margin*range] per dimension.
// Degenerate ranges (hi - lo < 1e-12) are widened to a unit range around the
// midpoint, with a note appended to *warnings when given.
InducingGrid build_grid(const Vector& feature_lo, const Vector& feature_hi,
                        const std::vector<int>& m_per_dim, double margin,
                        std::vector<std::string>* warnings = nullptr);

}  // namespace svdkl
