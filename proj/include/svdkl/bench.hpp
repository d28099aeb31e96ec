#pragma once

#include "svdkl/common.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace svdkl {

struct BenchRecord {
  Index m = 0;  // actual inducing-point count (m_d^D)
  int d = 1;
  std::string method;
  double seconds = 0.0;  // median over repetitions, per evaluation
};

struct BenchConfig {
  std::vector<Index> m_values{256, 1024, 4096};
  std::vector<int> d_values{1, 2};
  int reps = 5;                 // median of reps after one warm-up
  Index dense_kl_cap = 2048;    // dense KL baseline only up to this m
  bool include_kl = true;
  std::uint64_t seed = 0;
};

// Times kron-structured sampling against a dense O(m^2) sampler, and the
// structured KL against a fully dense one, on synthetic RBF grid kernels.
// The structured and dense samplers are cross-checked for equality on shared
// noise before timing.
std::vector<BenchRecord> run_benchmarks(const BenchConfig& cfg);

// CSV: m,D,method,seconds
void write_bench_csv(const std::vector<BenchRecord>& records, std::ostream& out);

}  // namespace svdkl
