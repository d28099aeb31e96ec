#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace svdkl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Thrown when a factor stays indefinite through the whole jitter schedule.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an interpolation input falls outside the inducing grid.
class OutOfGrid : public std::runtime_error {
 public:
  OutOfGrid(int dimension, double value, double lo, double hi)
      : std::runtime_error("input coordinate " + std::to_string(value) +
                           " outside grid bounds [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "] in dimension " + std::to_string(dimension)),
        dimension(dimension),
        value(value) {}
  int dimension;
  double value;
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Divergence, non-finite objectives, and similar numerical failures.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

inline double softplus_inv(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sum_i exp(v_i)), max-subtracted.
inline double logsumexp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

using Rng = std::mt19937_64;

// Derives independent-looking streams from one seed (splitmix64 step).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Vector standard_normal(Index n, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace svdkl
