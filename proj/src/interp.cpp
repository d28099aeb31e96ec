#include "svdkl/interp.hpp"

#include <algorithm>
#include <cmath>

namespace svdkl {

namespace {

InterpWeights::DimSupport dim_support(const Grid1D& g, double x, int d, bool derivative) {
  if (!(x >= g.lo && x <= g.hi)) throw OutOfGrid(d, x, g.lo, g.hi);
  const double h = g.spacing();
  int cell = int(std::floor((x - g.lo) / h));
  cell = std::clamp(cell, 0, g.m - 2);
  const double t = (x - g.point(cell)) / h;

  InterpWeights::DimSupport s;
  if (cell == 0 || cell == g.m - 2) {
    // Cubic support would leave the grid; fall back to linear.
    s.start = cell;
    s.count = 2;
    if (derivative) {
      s.w = {-1.0 / h, 1.0 / h, 0.0, 0.0};
    } else {
      s.w = {1.0 - t, t, 0.0, 0.0};
    }
  } else {
    s.start = cell - 1;
    s.count = 4;
    const double t2 = t * t;
    const double t3 = t2 * t;
    if (derivative) {
      s.w = {(-1.5 * t2 + 2.0 * t - 0.5) / h, (4.5 * t2 - 5.0 * t) / h,
             (-4.5 * t2 + 4.0 * t + 0.5) / h, (1.5 * t2 - t) / h};
    } else {
      s.w = {-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0,
             -1.5 * t3 + 2.0 * t2 + 0.5 * t, 0.5 * t3 - 0.5 * t2};
    }
  }
  return s;
}

InterpWeights build_row(const InducingGrid& grid, const Vector& x, int deriv_dim) {
  if (x.size() != grid.ndims()) throw std::invalid_argument("interp_row: point dimension mismatch");
  const auto strides = grid.strides();
  InterpWeights row;
  row.dims.reserve(std::size_t(grid.ndims()));
  for (int d = 0; d < grid.ndims(); ++d) {
    auto s = dim_support(grid.dims[std::size_t(d)], x[d], d, d == deriv_dim);
    s.stride = strides[std::size_t(d)];
    row.dims.push_back(s);
  }
  return row;
}

}  // namespace

InterpWeights interp_row(const InducingGrid& grid, const Vector& x) {
  return build_row(grid, x, -1);
}

InterpWeights interp_row_grad(const InducingGrid& grid, const Vector& x) {
  // Build the plain row once and swap each dimension's weights for the
  // derivative version; interp_point_grad combines the two.
  InterpWeights row = build_row(grid, x, -1);
  InterpWeights grad = row;
  for (int d = 0; d < grid.ndims(); ++d) {
    auto s = dim_support(grid.dims[std::size_t(d)], x[d], d, true);
    s.stride = grad.dims[std::size_t(d)].stride;
    grad.dims[std::size_t(d)] = s;
  }
  return grad;
}

Vector apply_m(const std::vector<InterpWeights>& rows, const Vector& u) {
  Vector f(Index(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double acc = 0.0;
    rows[i].for_each_nonzero([&](Index k, double w) {
      if (k < 0 || k >= u.size()) throw std::logic_error("apply_m: support index out of range");
      acc += w * u[k];
    });
    f[Index(i)] = acc;
  }
  return f;
}

Vector apply_m_transpose(const std::vector<InterpWeights>& rows, const Vector& v, Index m) {
  if (Index(rows.size()) != v.size()) throw std::invalid_argument("apply_m_transpose: size mismatch");
  Vector out = Vector::Zero(m);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double vi = v[Index(i)];
    rows[i].for_each_nonzero([&](Index k, double w) {
      if (k < 0 || k >= m) throw std::logic_error("apply_m_transpose: support index out of range");
      out[k] += w * vi;
    });
  }
  return out;
}

Vector interp_point_grad(const InterpWeights& row, const InterpWeights& row_grad, const Vector& u) {
  const auto num_dims = row.dims.size();
  Vector g = Vector::Zero(Index(num_dims));
  for (std::size_t d = 0; d < num_dims; ++d) {
    InterpWeights mixed = row;
    mixed.dims[d] = row_grad.dims[d];
    double acc = 0.0;
    mixed.for_each_nonzero([&](Index k, double w) { acc += w * u[k]; });
    g[Index(d)] = acc;
  }
  return g;
}

}  // namespace svdkl
