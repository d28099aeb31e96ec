#include "svdkl/vargp.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace svdkl {

namespace {

std::vector<Matrix> s_factors_of(const KroneckerLower& l) {
  std::vector<Matrix> s;
  s.reserve(l.factors.size());
  for (const auto& f : l.factors) {
    Matrix ld = f.dense();
    s.push_back(ld * ld.transpose());
  }
  return s;
}

// sum over left/right slabs of a[l,p,r] * b[l,q,r] -> m_d x m_d.
Matrix mode_contract(const Vector& a, const Vector& b, const std::vector<Index>& dims,
                     std::size_t mode) {
  Index left = 1;
  for (std::size_t d = 0; d < mode; ++d) left *= dims[d];
  const Index nd = dims[mode];
  Index right = 1;
  for (std::size_t d = mode + 1; d < dims.size(); ++d) right *= dims[d];
  Matrix out = Matrix::Zero(nd, nd);
  for (Index l = 0; l < left; ++l) {
    Eigen::Map<const RowMatrix> slab_a(a.data() + l * nd * right, nd, right);
    Eigen::Map<const RowMatrix> slab_b(b.data() + l * nd * right, nd, right);
    out.noalias() += slab_a * slab_b.transpose();
  }
  return out;
}

}  // namespace

KroneckerPSD prior_cov(const InducingGrid& grid, const RbfParams& kernel) {
  if (Index(grid.dims.size()) != kernel.log_lengthscale.size()) {
    throw std::invalid_argument("prior_cov: kernel dimension mismatch");
  }
  std::vector<Matrix> factors;
  factors.reserve(grid.dims.size());
  for (int d = 0; d < grid.ndims(); ++d) {
    factors.push_back(rbf_factor(grid.dims[std::size_t(d)], kernel, d));
  }
  return KroneckerPSD(std::move(factors));
}

VariationalState init_variational_state(const InducingGrid& grid, const RbfParams& kernel) {
  KroneckerPSD k = prior_cov(grid, kernel);
  std::vector<LowerTri> lfactors;
  lfactors.reserve(k.factors.size());
  for (std::size_t d = 0; d < k.factors.size(); ++d) {
    lfactors.push_back(factor_chol(k.factors[d], default_jitter_schedule(k.factors[d]),
                                   "K_" + std::to_string(d)));
  }
  return VariationalState{Vector::Zero(grid.total()), KroneckerLower(std::move(lfactors))};
}

Vector sample_u(const VariationalState& vs, const Vector& eps) {
  if (eps.size() != vs.mu.size()) throw std::invalid_argument("sample_u: eps length mismatch");
  return vs.mu + kron_mvm(vs.l.dense_factors(), eps);
}

Vector latent_f(const std::vector<InterpWeights>& rows, const Vector& u) {
  return apply_m(rows, u);
}

VariationalGrad::VariationalGrad(const VariationalState& vs) {
  d_mu = Vector::Zero(vs.mu.size());
  d_l_dense.reserve(vs.l.factors.size());
  for (const auto& f : vs.l.factors) d_l_dense.push_back(Matrix::Zero(f.dim(), f.dim()));
}

void VariationalGrad::accumulate(const VariationalGrad& other, double scale) {
  d_mu += scale * other.d_mu;
  for (std::size_t d = 0; d < d_l_dense.size(); ++d) d_l_dense[d] += scale * other.d_l_dense[d];
}

KlResult kl_with_grads(const GpUnit& gp) {
  const Index m = gp.grid.total();
  const std::size_t num_dims = gp.grid.dims.size();
  KroneckerPSD k = prior_cov(gp.grid, gp.kernel);
  KronChol kchol = kron_factorize(k);
  std::vector<Matrix> s_factors = s_factors_of(gp.vstate.l);

  // Per-factor LLT solves shared by every term.
  std::vector<Eigen::LLT<Matrix>> llt(num_dims);
  std::vector<double> tr_kinv_s(num_dims);
  for (std::size_t d = 0; d < num_dims; ++d) {
    Matrix shifted = k.factors[d];
    shifted.diagonal().array() += kchol.jitters[d];
    llt[d].compute(shifted);
    tr_kinv_s[d] = llt[d].solve(s_factors[d]).trace();
  }

  const double logdet_k = kron_logdet(kchol);
  const double logdet_s = kron_lower_logdet(gp.vstate.l);
  double trace_prod = 1.0;
  for (double t : tr_kinv_s) trace_prod *= t;
  const Vector kinv_mu = kron_solve(kchol, gp.vstate.mu);
  const double quad = gp.vstate.mu.dot(kinv_mu);

  KlResult out;
  out.value = 0.5 * (logdet_k - logdet_s - double(m) + trace_prod + quad);

  // Kernel hyperparameter gradients: a parameter touching factor d perturbs
  // K by K_1 (x) ... G_d ... (x) K_D, and each trace splits per factor.
  auto single_factor_term = [&](std::size_t d, const Matrix& g_d) {
    const Index m_d = k.factors[d].rows();
    const double tr_kinv_g = llt[d].solve(g_d).trace();
    Matrix kinv_g = llt[d].solve(g_d);
    Matrix kinv_s = llt[d].solve(s_factors[d]);
    const double tr_kgks = (kinv_g.array() * kinv_s.transpose().array()).sum();
    double others = 1.0;
    for (std::size_t e = 0; e < num_dims; ++e) {
      if (e != d) others *= tr_kinv_s[e];
    }
    std::vector<Matrix> perturbed = k.factors;
    perturbed[d] = g_d;
    const double quad_term = kinv_mu.dot(kron_mvm(perturbed, kinv_mu));
    return 0.5 * (double(m / m_d) * tr_kinv_g - others * tr_kgks - quad_term);
  };

  out.theta.d_log_lengthscale = Vector::Zero(Index(num_dims));
  out.theta.d_log_signal_var = 0.0;
  for (std::size_t d = 0; d < num_dims; ++d) {
    RbfFactorGrad g = rbf_factor_grad(gp.grid.dims[d], gp.kernel, int(d));
    out.theta.d_log_lengthscale[Index(d)] = single_factor_term(d, g.d_log_lengthscale);
    out.theta.d_log_signal_var += single_factor_term(d, g.d_log_signal_var);
  }

  // Variational gradients.
  out.variational.d_mu = kinv_mu;
  out.variational.d_l_dense.reserve(num_dims);
  for (std::size_t d = 0; d < num_dims; ++d) {
    const Index m_d = k.factors[d].rows();
    Matrix ld = gp.vstate.l.factors[d].dense();
    Matrix linv = Matrix(ld.triangularView<Eigen::Lower>().solve(Matrix::Identity(m_d, m_d)));
    double others = 1.0;
    for (std::size_t e = 0; e < num_dims; ++e) {
      if (e != d) others *= tr_kinv_s[e];
    }
    Matrix grad = -double(m / m_d) * linv.transpose() + others * llt[d].solve(ld);
    out.variational.d_l_dense.push_back(grad.triangularView<Eigen::Lower>());
  }
  return out;
}

double kl_value(const GpUnit& gp) {
  const Index m = gp.grid.total();
  KroneckerPSD k = prior_cov(gp.grid, gp.kernel);
  KronChol kchol = kron_factorize(k);
  const double logdet_k = kron_logdet(kchol);
  const double logdet_s = kron_lower_logdet(gp.vstate.l);
  const double trace = kron_inv_trace(kchol, s_factors_of(gp.vstate.l));
  const double quad = kron_solve_quadform(kchol, gp.vstate.mu);
  return 0.5 * (logdet_k - logdet_s - double(m) + trace + quad);
}

KlThetaGrad kl_grad_theta(const GpUnit& gp) { return kl_with_grads(gp).theta; }

VariationalGrad kl_grad_variational(const GpUnit& gp) { return kl_with_grads(gp).variational; }

VariationalGrad backprop_f_to_variational(const std::vector<InterpWeights>& rows,
                                          const Vector& d_f, const Vector& eps,
                                          const KroneckerLower& l) {
  const Index m = l.dim();
  if (eps.size() != m) throw std::invalid_argument("backprop_f_to_variational: eps length mismatch");
  VariationalGrad out;
  out.d_mu = apply_m_transpose(rows, d_f, m);

  std::vector<Index> dims;
  dims.reserve(l.factors.size());
  for (const auto& f : l.factors) dims.push_back(f.dim());
  std::vector<Matrix> dense = l.dense_factors();

  out.d_l_dense.reserve(l.factors.size());
  for (std::size_t d = 0; d < l.factors.size(); ++d) {
    // ((x)_{d' != d} L_{d'}) eps, identity in mode d.
    std::vector<Matrix> partial = dense;
    partial[d] = Matrix::Identity(dims[d], dims[d]);
    Vector w = l.factors.size() == 1 ? eps : kron_mvm(partial, eps);
    Matrix grad = mode_contract(out.d_mu, w, dims, d);
    out.d_l_dense.push_back(grad.triangularView<Eigen::Lower>());
  }
  return out;
}

}  // namespace svdkl
