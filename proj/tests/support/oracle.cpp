#include "support/oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace svdkl::oracle {

Matrix dense_kron(const std::vector<Matrix>& factors) {
  Matrix acc = factors.at(0);
  for (std::size_t d = 1; d < factors.size(); ++d) {
    const Matrix& b = factors[d];
    Matrix next(acc.rows() * b.rows(), acc.cols() * b.cols());
    for (Index r = 0; r < acc.rows(); ++r) {
      for (Index c = 0; c < acc.cols(); ++c) {
        next.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = acc(r, c) * b;
      }
    }
    acc = std::move(next);
  }
  return acc;
}

double dense_kl(const Vector& mu, const Matrix& s, const Matrix& k) {
  const Index m = k.rows();
  Eigen::LLT<Matrix> llt_k(k);
  Eigen::LLT<Matrix> llt_s(s);
  auto logdet = [](const Eigen::LLT<Matrix>& llt) {
    double acc = 0.0;
    const Matrix l = llt.matrixL();
    for (Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
    return 2.0 * acc;
  };
  const double trace = llt_k.solve(s).trace();
  const double quad = mu.dot(llt_k.solve(mu));
  return 0.5 * (logdet(llt_k) - logdet(llt_s) - double(m) + trace + quad);
}

double dense_kl_eig(const Vector& mu, const Matrix& s, const Matrix& k) {
  const Index m = k.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es_k(k);
  Eigen::SelfAdjointEigenSolver<Matrix> es_s(s);
  const double logdet_k = es_k.eigenvalues().array().log().sum();
  const double logdet_s = es_s.eigenvalues().array().log().sum();
  const Matrix k_inv = es_k.eigenvectors() *
                       es_k.eigenvalues().cwiseInverse().asDiagonal() *
                       es_k.eigenvectors().transpose();
  const double trace = (k_inv * s).trace();
  const double quad = mu.dot(k_inv * mu);
  return 0.5 * (logdet_k - logdet_s - double(m) + trace + quad);
}

Matrix dense_m(const InducingGrid& grid, const std::vector<Vector>& points) {
  Matrix m = Matrix::Zero(Index(points.size()), grid.total());
  for (std::size_t i = 0; i < points.size(); ++i) {
    interp_row(grid, points[i]).for_each_nonzero([&](Index k, double w) {
      m(Index(i), k) += w;
    });
  }
  return m;
}

Vector finite_diff(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

double keys_weight(double s) {
  const double a = -0.5;
  const double t = std::abs(s);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0);
  return 0.0;
}

MomentEstimate mc_moments(const std::function<Vector(Rng&)>& draw, Index dim, Index n_samples,
                          Rng& rng) {
  Vector mean = Vector::Zero(dim);
  Matrix second = Matrix::Zero(dim, dim);
  for (Index s = 0; s < n_samples; ++s) {
    const Vector x = draw(rng);
    mean += x;
    second.noalias() += x * x.transpose();
  }
  mean /= double(n_samples);
  MomentEstimate out;
  out.mean = mean;
  out.cov = second / double(n_samples) - mean * mean.transpose();
  return out;
}

Matrix random_spd(Index n, Rng& rng, double jitter) {
  Matrix a(n, n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = dist(rng);
  Matrix spd = a * a.transpose() / double(n);
  spd.diagonal().array() += jitter;
  return spd;
}

Matrix random_lower(Index n, Rng& rng) {
  Matrix l = Matrix::Zero(n, n);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::uniform_real_distribution<double> diag(0.3, 1.5);
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < p; ++q) l(p, q) = 0.3 * dist(rng);
    l(p, p) = diag(rng);
  }
  return l;
}

}  // namespace svdkl::oracle
