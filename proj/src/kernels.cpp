#include "svdkl/kernels.hpp"

#include <cmath>

namespace svdkl {

Vector Grid1D::points() const {
  Vector v(m);
  for (int p = 0; p < m; ++p) v[p] = point(p);
  return v;
}

Grid1D make_grid1d(double lo, double hi, int m) {
  if (!(lo < hi)) throw std::invalid_argument("Grid1D: lo must be < hi");
  if (m < 4) throw std::invalid_argument("Grid1D: need at least 4 points for cubic support");
  return Grid1D{lo, hi, m};
}

Index InducingGrid::total() const {
  Index m = 1;
  for (const auto& g : dims) m *= g.m;
  return m;
}

std::vector<Index> InducingGrid::strides() const {
  std::vector<Index> s(dims.size(), 1);
  for (int d = int(dims.size()) - 2; d >= 0; --d) s[d] = s[d + 1] * dims[d + 1].m;
  return s;
}

Matrix rbf_factor(const Grid1D& g, const RbfParams& p, int d) {
  const int num_dims = int(p.log_lengthscale.size());
  if (d < 0 || d >= num_dims) throw std::invalid_argument("rbf_factor: dimension index out of range");
  const double ell = std::exp(p.log_lengthscale[d]);
  const double var_share = std::exp(p.log_signal_var / double(num_dims));
  Matrix k(g.m, g.m);
  for (int a = 0; a < g.m; ++a) {
    k(a, a) = var_share;
    for (int b = 0; b < a; ++b) {
      const double r = g.point(a) - g.point(b);
      const double v = var_share * std::exp(-r * r / (2.0 * ell * ell));
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

RbfFactorGrad rbf_factor_grad(const Grid1D& g, const RbfParams& p, int d) {
  const int num_dims = int(p.log_lengthscale.size());
  const double ell = std::exp(p.log_lengthscale[d]);
  Matrix k = rbf_factor(g, p, d);
  RbfFactorGrad out;
  out.d_log_signal_var = k / double(num_dims);
  out.d_log_lengthscale = Matrix(g.m, g.m);
  for (int a = 0; a < g.m; ++a) {
    for (int b = 0; b < g.m; ++b) {
      const double r = g.point(a) - g.point(b);
      out.d_log_lengthscale(a, b) = k(a, b) * (r * r) / (ell * ell);
    }
  }
  return out;
}

InducingGrid build_grid(const Vector& feature_lo, const Vector& feature_hi,
                        const std::vector<int>& m_per_dim, double margin,
                        std::vector<std::string>* warnings) {
  const auto num_dims = std::size_t(feature_lo.size());
  if (std::size_t(feature_hi.size()) != num_dims || m_per_dim.size() != num_dims) {
    throw std::invalid_argument("build_grid: dimension mismatch");
  }
  if (num_dims == 0 || num_dims > 3) throw std::invalid_argument("build_grid: D must be 1..3");
  InducingGrid grid;
  for (std::size_t d = 0; d < num_dims; ++d) {
    double lo = feature_lo[Index(d)];
    double hi = feature_hi[Index(d)];
    if (hi - lo < 1e-12) {
      const double mid = 0.5 * (lo + hi);
      lo = mid - 0.5;
      hi = mid + 0.5;
      if (warnings) {
        warnings->push_back("degenerate feature range in dimension " + std::to_string(d) +
                            "; widened to [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      }
    } else {
      const double range = hi - lo;
      lo -= margin * range;
      hi += margin * range;
    }
    grid.dims.push_back(make_grid1d(lo, hi, m_per_dim[d]));
  }
  return grid;
}

}  // namespace svdkl
