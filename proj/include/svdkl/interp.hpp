#pragma once

#include "svdkl/common.hpp"
#include "svdkl/kernels.hpp"

#include <array>
#include <vector>

namespace svdkl {

// One input point's sparse interpolation row over the inducing grid: cubic
// convolution weights per dimension (linear in the first/last cell), combined
// as the tensor product of the per-dimension weight vectors.
struct InterpWeights {
  struct DimSupport {
    int start = 0;                    // first grid index of the support
    int count = 0;                    // 2 (linear) or 4 (cubic)
    std::array<double, 4> w{};        // per-dimension weights
    Index stride = 1;                 // grid stride of this dimension
  };

  std::vector<DimSupport> dims;

  // Visits every nonzero of the combined row as (flat grid index, weight).
  template <typename F>
  void for_each_nonzero(F&& f) const {
    visit(0, 0, 1.0, f);
  }

 private:
  template <typename F>
  void visit(std::size_t d, Index base, double weight, F& f) const {
    if (d == dims.size()) {
      f(base, weight);
      return;
    }
    const DimSupport& s = dims[d];
    for (int i = 0; i < s.count; ++i) {
      visit(d + 1, base + Index(s.start + i) * s.stride, weight * s.w[std::size_t(i)], f);
    }
  }
};

// Interpolation weights of a point (cubic convolution, Keys a = -0.5).
// Throws OutOfGrid when a coordinate leaves the grid bounds.
InterpWeights interp_row(const InducingGrid& grid, const Vector& x);

// Derivative of the weights w.r.t. each input coordinate; same support
// layout, weights replaced by d w / d x_d in the matching dimension.
InterpWeights interp_row_grad(const InducingGrid& grid, const Vector& x);

// f_i = sum_k w_ik u_k over the sparse row nonzeros.
Vector apply_m(const std::vector<InterpWeights>& rows, const Vector& u);

// Scatter-add adjoint: <apply_m(u), v> = <u, apply_m_transpose(v)>.
Vector apply_m_transpose(const std::vector<InterpWeights>& rows, const Vector& v, Index m);

// d f / d x_d for one point: contracts u against the row with dimension d's
// weights swapped for their derivatives. Returns one entry per grid dimension.
Vector interp_point_grad(const InterpWeights& row, const InterpWeights& row_grad, const Vector& u);

}  // namespace svdkl
