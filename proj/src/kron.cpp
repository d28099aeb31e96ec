#include "svdkl/kron.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <utility>

namespace svdkl {

namespace {

void check_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("factor must be square");
  if (!a.allFinite()) throw std::invalid_argument("factor has non-finite entries");
  const double scale = a.cwiseAbs().maxCoeff();
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(scale, 1.0)) {
    throw std::invalid_argument("factor is not symmetric");
  }
}

Index product_dim(const std::vector<Matrix>& factors) {
  Index m = 1;
  for (const auto& f : factors) m *= f.rows();
  return m;
}

// Plain lower Cholesky with jitter schedule; used internally where the
// softplus representation would only add round trips.
Matrix raw_chol(const Matrix& a, const std::vector<double>& schedule, const std::string& label,
                double* jitter_used) {
  check_symmetric(a);
  for (double jitter : schedule) {
    Matrix shifted = a;
    if (jitter != 0.0) shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return llt.matrixL();
    }
  }
  throw NotPositiveDefinite("factor " + (label.empty() ? "" : "'" + label + "' ") + "(" +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                            ") not positive definite after jitter schedule");
}

double lower_logdet_m(const Matrix& lower) {
  double s = 0.0;
  for (Index i = 0; i < lower.rows(); ++i) {
    const double d = lower(i, i);
    if (!(d > 0.0)) throw std::domain_error("nonpositive diagonal in triangular factor");
    s += std::log(d);
  }
  return 2.0 * s;
}

}  // namespace

LowerTri::LowerTri(Matrix raw) : raw_(std::move(raw)) {
  if (raw_.rows() != raw_.cols()) throw std::invalid_argument("LowerTri must be square");
  if (!raw_.allFinite()) throw std::invalid_argument("LowerTri has non-finite entries");
  raw_.triangularView<Eigen::StrictlyUpper>().setZero();
}

LowerTri LowerTri::from_dense(const Matrix& lower) {
  if (lower.rows() != lower.cols()) throw std::invalid_argument("LowerTri must be square");
  Matrix raw = lower;
  for (Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0)) {
      throw std::invalid_argument("LowerTri::from_dense requires a positive diagonal");
    }
    raw(i, i) = softplus_inv(lower(i, i));
  }
  return LowerTri(std::move(raw));
}

Matrix LowerTri::dense() const {
  Matrix out = raw_;
  for (Index i = 0; i < out.rows(); ++i) out(i, i) = softplus(raw_(i, i));
  return out;
}

Matrix LowerTri::grad_to_raw(const Matrix& dense_grad) const {
  Matrix g = dense_grad.triangularView<Eigen::Lower>();
  for (Index i = 0; i < g.rows(); ++i) g(i, i) *= sigmoid(raw_(i, i));
  return g;
}

Vector LowerTri::flatten() const {
  Vector v(num_params());
  Index k = 0;
  for (Index p = 0; p < dim(); ++p)
    for (Index q = 0; q <= p; ++q) v[k++] = raw_(p, q);
  return v;
}

void LowerTri::set_from_flat(const Vector& v) {
  if (v.size() != num_params()) throw std::invalid_argument("LowerTri: flat size mismatch");
  Index k = 0;
  for (Index p = 0; p < dim(); ++p)
    for (Index q = 0; q <= p; ++q) raw_(p, q) = v[k++];
}

KroneckerPSD::KroneckerPSD(std::vector<Matrix> factor_list) : factors(std::move(factor_list)) {
  if (factors.empty()) throw std::invalid_argument("KroneckerPSD requires at least one factor");
  for (const auto& f : factors) check_symmetric(f);
}

Index KroneckerPSD::dim() const { return product_dim(factors); }

Index KroneckerLower::dim() const {
  Index m = 1;
  for (const auto& f : factors) m *= f.dim();
  return m;
}

std::vector<Matrix> KroneckerLower::dense_factors() const {
  std::vector<Matrix> out;
  out.reserve(factors.size());
  for (const auto& f : factors) out.push_back(f.dense());
  return out;
}

Vector kron_mvm(const std::vector<Matrix>& factors, const Vector& v) {
  if (factors.empty()) throw std::invalid_argument("kron_mvm: no factors");
  const Index m = product_dim(factors);
  if (v.size() != m) {
    throw std::invalid_argument("kron_mvm: vector length " + std::to_string(v.size()) +
                                " does not match factor product " + std::to_string(m));
  }
  Vector cur = v;
  Vector next(m);
  Index left = 1;
  Index right = m;
  for (const auto& a : factors) {
    if (a.rows() != a.cols()) throw std::invalid_argument("kron_mvm: factors must be square");
    const Index nd = a.rows();
    right /= nd;
    for (Index l = 0; l < left; ++l) {
      Eigen::Map<const RowMatrix> in(cur.data() + l * nd * right, nd, right);
      Eigen::Map<RowMatrix> out(next.data() + l * nd * right, nd, right);
      out.noalias() = a * in;
    }
    left *= nd;
    cur.swap(next);
  }
  return cur;
}

std::vector<double> default_jitter_schedule(const Matrix& a) {
  const double base = a.diagonal().cwiseAbs().mean();
  return {0.0, 1e-10 * base, 1e-8 * base, 1e-6 * base};
}

LowerTri factor_chol(const Matrix& a, const std::vector<double>& jitter_schedule,
                     const std::string& label, double* jitter_used) {
  return LowerTri::from_dense(raw_chol(a, jitter_schedule, label, jitter_used));
}

LowerTri factor_chol(const Matrix& a) { return factor_chol(a, default_jitter_schedule(a)); }

Index KronChol::dim() const { return product_dim(lowers); }

KronChol kron_factorize(const KroneckerPSD& k) {
  KronChol out;
  out.lowers.reserve(k.factors.size());
  out.jitters.resize(k.factors.size(), 0.0);
  for (std::size_t d = 0; d < k.factors.size(); ++d) {
    out.lowers.push_back(raw_chol(k.factors[d], default_jitter_schedule(k.factors[d]),
                                  "K_" + std::to_string(d), &out.jitters[d]));
  }
  return out;
}

KronChol kron_factorize(const KroneckerPSD& k, const std::vector<double>& jitter_schedule) {
  KronChol out;
  out.lowers.reserve(k.factors.size());
  out.jitters.resize(k.factors.size(), 0.0);
  for (std::size_t d = 0; d < k.factors.size(); ++d) {
    out.lowers.push_back(
        raw_chol(k.factors[d], jitter_schedule, "K_" + std::to_string(d), &out.jitters[d]));
  }
  return out;
}

double kron_logdet(const KroneckerPSD& k) { return kron_logdet(kron_factorize(k)); }

double kron_logdet(const KronChol& chol) {
  const Index m = chol.dim();
  double total = 0.0;
  for (const auto& l : chol.lowers) total += double(m / l.rows()) * lower_logdet_m(l);
  return total;
}

double kron_lower_logdet(const KroneckerLower& l) {
  const Index m = l.dim();
  double total = 0.0;
  for (const auto& f : l.factors) {
    double s = 0.0;
    for (Index p = 0; p < f.dim(); ++p) {
      const double diag = softplus(f.raw()(p, p));
      if (!(diag > 0.0)) throw std::domain_error("kron_lower_logdet: nonpositive diagonal");
      s += std::log(diag);
    }
    total += 2.0 * double(m / f.dim()) * s;
  }
  return total;
}

double kron_inv_trace(const KroneckerPSD& k, const std::vector<Matrix>& s_factors) {
  return kron_inv_trace(kron_factorize(k), s_factors);
}

double kron_inv_trace(const KronChol& chol, const std::vector<Matrix>& s_factors) {
  if (chol.lowers.size() != s_factors.size()) {
    throw std::invalid_argument("kron_inv_trace: factor count mismatch");
  }
  double prod = 1.0;
  for (std::size_t d = 0; d < s_factors.size(); ++d) {
    const Matrix& l = chol.lowers[d];
    const Matrix& s = s_factors[d];
    if (s.rows() != l.rows() || s.cols() != l.cols()) {
      throw std::invalid_argument("kron_inv_trace: factor dimension mismatch");
    }
    // tr(K_d^-1 S_d) = tr(L^-1 S L^-T) = sum of the solved matrix diagonal.
    Matrix half = l.triangularView<Eigen::Lower>().solve(s);
    Matrix full = l.triangularView<Eigen::Lower>().transpose().solve(half);
    prod *= full.trace();
  }
  return prod;
}

double kron_solve_quadform(const KroneckerPSD& k, const Vector& v) {
  return kron_solve_quadform(kron_factorize(k), v);
}

double kron_solve_quadform(const KronChol& chol, const Vector& v) {
  if (v.size() != chol.dim()) throw std::invalid_argument("kron_solve_quadform: length mismatch");
  return kron_lower_solve(chol.lowers, v, /*transposed=*/false).squaredNorm();
}

Vector kron_lower_solve(const std::vector<Matrix>& lowers, const Vector& v, bool transposed) {
  const Index m = product_dim(lowers);
  if (v.size() != m) throw std::invalid_argument("kron_lower_solve: length mismatch");
  Vector cur = v;
  Index left = 1;
  Index right = m;
  for (const auto& l : lowers) {
    const Index nd = l.rows();
    right /= nd;
    for (Index idx = 0; idx < left; ++idx) {
      Eigen::Map<RowMatrix> block(cur.data() + idx * nd * right, nd, right);
      if (transposed) {
        l.triangularView<Eigen::Lower>().transpose().solveInPlace(block);
      } else {
        l.triangularView<Eigen::Lower>().solveInPlace(block);
      }
    }
    left *= nd;
  }
  return cur;
}

Vector kron_solve(const KronChol& chol, const Vector& v) {
  Vector half = kron_lower_solve(chol.lowers, v, /*transposed=*/false);
  return kron_lower_solve(chol.lowers, half, /*transposed=*/true);
}

}  // namespace svdkl
