#include "svdkl/bench.hpp"

#include "svdkl/kernels.hpp"
#include "svdkl/kron.hpp"
#include "svdkl/vargp.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace svdkl {

namespace {

using Clock = std::chrono::steady_clock;

double median_time(const std::vector<double>& times) {
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  return sorted[sorted.size() / 2];
}

// O(m^2) baseline: multiplies the Kronecker-product rows out entry by entry
// without materializing the matrix, so large m stays within memory.
Vector dense_lower_mvm(const std::vector<Matrix>& factors, const Vector& v) {
  const Index m = v.size();
  const int num_dims = int(factors.size());
  std::vector<std::vector<int>> digits(static_cast<std::size_t>(num_dims),
                                       std::vector<int>(static_cast<std::size_t>(m)));
  {
    std::vector<Index> dims;
    for (const auto& f : factors) dims.push_back(f.rows());
    for (Index i = 0; i < m; ++i) {
      Index rest = i;
      for (int d = num_dims - 1; d >= 0; --d) {
        digits[std::size_t(d)][std::size_t(i)] = int(rest % dims[std::size_t(d)]);
        rest /= dims[std::size_t(d)];
      }
    }
  }
  Vector out(m);
  for (Index i = 0; i < m; ++i) {
    double acc = 0.0;
    for (Index j = 0; j < m; ++j) {
      double w = 1.0;
      for (int d = 0; d < num_dims; ++d) {
        w *= factors[std::size_t(d)](digits[std::size_t(d)][std::size_t(i)],
                                     digits[std::size_t(d)][std::size_t(j)]);
      }
      acc += w * v[j];
    }
    out[i] = acc;
  }
  return out;
}

Matrix dense_kron(const std::vector<Matrix>& factors) {
  Matrix acc = factors[0];
  for (std::size_t d = 1; d < factors.size(); ++d) {
    const Matrix& b = factors[d];
    Matrix next(acc.rows() * b.rows(), acc.cols() * b.cols());
    for (Index r = 0; r < acc.rows(); ++r)
      for (Index c = 0; c < acc.cols(); ++c)
        next.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = acc(r, c) * b;
    acc = std::move(next);
  }
  return acc;
}

double dense_gaussian_kl(const Vector& mu, const Matrix& s, const Matrix& k) {
  Eigen::LLT<Matrix> llt_k(k);
  Eigen::LLT<Matrix> llt_s(s);
  const Index m = k.rows();
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

struct BenchInstance {
  GpUnit gp;
  std::vector<Matrix> l_factors;
  Vector eps;
};

BenchInstance make_instance(Index m_per_dim, int num_dims, Rng& rng) {
  BenchInstance inst;
  std::vector<int> sizes(static_cast<std::size_t>(num_dims), int(m_per_dim));
  inst.gp.grid = build_grid(Vector::Zero(num_dims), Vector::Ones(num_dims), sizes, 0.0);
  inst.gp.kernel.log_lengthscale = Vector::Constant(num_dims, std::log(0.2));
  inst.gp.kernel.log_signal_var = 0.0;
  inst.gp.vstate = init_variational_state(inst.gp.grid, inst.gp.kernel);
  // Nudge mu and L away from the prior so nothing degenerates to zero work.
  inst.gp.vstate.mu = standard_normal(inst.gp.grid.total(), rng) * 0.1;
  inst.l_factors = inst.gp.vstate.l.dense_factors();
  inst.eps = standard_normal(inst.gp.grid.total(), rng);
  return inst;
}

}  // namespace

std::vector<BenchRecord> run_benchmarks(const BenchConfig& cfg) {
  if (cfg.reps < 1) throw std::invalid_argument("bench: reps must be >= 1");
  std::vector<BenchRecord> records;
  Rng rng(mix_seed(cfg.seed, 0xbe));

  for (int num_dims : cfg.d_values) {
    if (num_dims < 1 || num_dims > 3) throw std::invalid_argument("bench: D must be 1..3");
    for (Index m_target : cfg.m_values) {
      const Index m_per_dim =
          std::max<Index>(4, Index(std::llround(std::pow(double(m_target), 1.0 / num_dims))));
      BenchInstance inst = make_instance(m_per_dim, num_dims, rng);
      const Index m = inst.gp.grid.total();

      // Correctness cross-check on shared noise before timing anything.
      {
        const Vector structured = sample_u(inst.gp.vstate, inst.eps);
        const Vector dense = inst.gp.vstate.mu + dense_lower_mvm(inst.l_factors, inst.eps);
        const double rel = (structured - dense).norm() / std::max(dense.norm(), 1e-30);
        if (rel > 1e-10) {
          throw NumericError("bench: structured and dense samplers disagree (rel " +
                             std::to_string(rel) + ")");
        }
      }

      auto time_method = [&](auto&& body) {
        body();  // warm-up
        std::vector<double> times;
        times.reserve(std::size_t(cfg.reps));
        for (int r = 0; r < cfg.reps; ++r) {
          const auto t0 = Clock::now();
          body();
          times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
        }
        return median_time(times);
      };

      records.push_back({m, num_dims, "kron_sample",
                         time_method([&] { (void)sample_u(inst.gp.vstate, inst.eps); })});
      records.push_back({m, num_dims, "dense_sample", time_method([&] {
                           (void)dense_lower_mvm(inst.l_factors, inst.eps);
                         })});

      if (cfg.include_kl) {
        records.push_back(
            {m, num_dims, "kron_kl", time_method([&] { (void)kl_value(inst.gp); })});
        if (m <= cfg.dense_kl_cap) {
          const Matrix k_dense = dense_kron(prior_cov(inst.gp.grid, inst.gp.kernel).factors);
          const Matrix l_dense = dense_kron(inst.l_factors);
          const Matrix s_dense = l_dense * l_dense.transpose();
          records.push_back({m, num_dims, "dense_kl", time_method([&] {
                               (void)dense_gaussian_kl(inst.gp.vstate.mu, s_dense, k_dense);
                             })});
        }
      }
    }
  }
  return records;
}

void write_bench_csv(const std::vector<BenchRecord>& records, std::ostream& out) {
  out << "m,D,method,seconds\n";
  for (const auto& r : records) {
    out << r.m << ',' << r.d << ',' << r.method << ',' << r.seconds << '\n';
  }
}

}  // namespace svdkl
