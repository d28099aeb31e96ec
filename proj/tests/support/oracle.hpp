#pragma once

// Slow, dense, obviously-correct reference implementations. Test code only:
// production modules never include this header.

#include "svdkl/common.hpp"
#include "svdkl/interp.hpp"
#include "svdkl/kernels.hpp"

#include <functional>
#include <vector>

namespace svdkl::oracle {

// Materializes (x) factors as a dense matrix.
Matrix dense_kron(const std::vector<Matrix>& factors);

// Textbook KL between N(mu, s) and N(0, k), dense algebra throughout.
double dense_kl(const Vector& mu, const Matrix& s, const Matrix& k);

// Same quantity through eigendecompositions, used to cross-check dense_kl.
double dense_kl_eig(const Vector& mu, const Matrix& s, const Matrix& k);

// Assembles the interpolation rows of the given points into a dense n x m
// matrix by scattering each sparse row.
Matrix dense_m(const InducingGrid& grid, const std::vector<Vector>& points);

// Central finite differences of a scalar function.
Vector finite_diff(const std::function<double(const Vector&)>& f, const Vector& x, double h);

// Scalar cubic convolution kernel (a = -0.5) for independent weight checks.
double keys_weight(double s);

struct MomentEstimate {
  Vector mean;
  Matrix cov;
};

// Empirical mean and covariance of a vector-valued sampler.
MomentEstimate mc_moments(const std::function<Vector(Rng&)>& draw, Index dim, Index n_samples,
                          Rng& rng);

// Random symmetric positive definite matrix (Wishart-style A A^T + n I scaled).
Matrix random_spd(Index n, Rng& rng, double jitter = 0.5);

// Random lower-triangular matrix with positive diagonal.
Matrix random_lower(Index n, Rng& rng);

}  // namespace svdkl::oracle
