#pragma once

#include "svdkl/common.hpp"

#include <string>
#include <vector>

namespace svdkl {

// Lower-triangular matrix with a strictly positive diagonal. The diagonal is
// stored as unconstrained parameters and mapped through softplus when the
// dense matrix is materialized, so gradient-based updates never need a
// positivity projection.
class LowerTri {
 public:
  explicit LowerTri(Matrix raw);

  // Builds the unconstrained representation of a concrete lower-triangular
  // matrix. Requires a strictly positive diagonal.
  static LowerTri from_dense(const Matrix& lower);

  Index dim() const { return raw_.rows(); }
  const Matrix& raw() const { return raw_; }

  // Materializes the constrained matrix: strict lower triangle verbatim,
  // softplus on the diagonal, zeros above.
  Matrix dense() const;

  // Chain rule from a gradient w.r.t. the dense entries to a gradient w.r.t.
  // the unconstrained storage. Only the lower triangle is kept.
  Matrix grad_to_raw(const Matrix& dense_grad) const;

  // Free-parameter packing (row-major lower triangle including diagonal).
  Index num_params() const { return dim() * (dim() + 1) / 2; }
  Vector flatten() const;
  void set_from_flat(const Vector& v);

 private:
  Matrix raw_;
};

// Positive-definite matrix stored as a Kronecker product of small dense
// symmetric factors; never materialized.
struct KroneckerPSD {
  explicit KroneckerPSD(std::vector<Matrix> factor_list);

  Index dim() const;  // product of factor dimensions

  std::vector<Matrix> factors;
};

// Lower-triangular Kronecker product, one LowerTri per grid dimension.
struct KroneckerLower {
  KroneckerLower() = default;
  explicit KroneckerLower(std::vector<LowerTri> factor_list) : factors(std::move(factor_list)) {}

  Index dim() const;
  std::vector<Matrix> dense_factors() const;

  std::vector<LowerTri> factors;
};

// y = (factors[0] x factors[1] x ... ) v via the mode-wise sweep; cost
// O(m * sum n_d) and O(m) memory. Factors need not be square symmetric here,
// only square.
Vector kron_mvm(const std::vector<Matrix>& factors, const Vector& v);

// Jitter schedule used when none is given: multiples {0, 1e-10, 1e-8, 1e-6}
// of the mean diagonal.
std::vector<double> default_jitter_schedule(const Matrix& a);

// Lower Cholesky factor of (a + jitter I) for the first jitter in the
// schedule that succeeds. Throws NotPositiveDefinite (mentioning `label`)
// if all jitters fail. The jitter that succeeded is written to *jitter_used.
LowerTri factor_chol(const Matrix& a, const std::vector<double>& jitter_schedule,
                     const std::string& label = "", double* jitter_used = nullptr);
LowerTri factor_chol(const Matrix& a);

// Per-factor Cholesky of a KroneckerPSD, reused across the log-det / trace /
// solve operations below.
struct KronChol {
  std::vector<Matrix> lowers;
  std::vector<double> jitters;
  Index dim() const;
};

KronChol kron_factorize(const KroneckerPSD& k);
KronChol kron_factorize(const KroneckerPSD& k, const std::vector<double>& jitter_schedule);

// log|k| = sum_d (m/m_d) log|K_d|.
double kron_logdet(const KroneckerPSD& k);
double kron_logdet(const KronChol& chol);

// log|L L^T| = 2 sum_d (m/m_d) sum_p log L_{d,pp}.
double kron_lower_logdet(const KroneckerLower& l);

// tr(K^-1 S) = prod_d tr(K_d^-1 S_d).
double kron_inv_trace(const KroneckerPSD& k, const std::vector<Matrix>& s_factors);
double kron_inv_trace(const KronChol& chol, const std::vector<Matrix>& s_factors);

// v^T K^-1 v, computed as the squared norm of the per-mode forward solve.
double kron_solve_quadform(const KroneckerPSD& k, const Vector& v);
double kron_solve_quadform(const KronChol& chol, const Vector& v);

// (x) L_d^-1 v (forward) or (x) L_d^-T v (backward) by per-mode triangular
// solves against the Cholesky factors.
Vector kron_lower_solve(const std::vector<Matrix>& lowers, const Vector& v, bool transposed);

// K^-1 v.
Vector kron_solve(const KronChol& chol, const Vector& v);

}  // namespace svdkl
