#pragma once

#include "svdkl/common.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace svdkl {

struct NormStats {
  Vector mean;
  Vector std;  // clamped to 1 for constant features
};

struct Dataset {
  Matrix x;                                // n x d
  std::vector<int> y;                      // dense labels in [0, C)
  int n_classes = 0;
  std::vector<std::string> feature_names;  // empty when the source has none
  std::vector<std::string> label_names;    // dense id -> original token
  NormStats stats;                         // stats applied to x
  bool normalized = false;

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
};

// RFC-4180-subset CSV (quoted fields, no embedded newlines). The label
// column is selected by name when there is a header, or by 0-based index
// otherwise ("-1" meaning the last column). Label tokens are mapped to dense
// integers, numerically sorted when every token parses as a number. Features
// are z-scored unless normalize is false.
Dataset load_csv(const std::string& path, const std::string& label_column, bool has_header,
                 bool normalize = true);

// libsvm text format: "label idx:value ...", 1-based indices, d columns.
Dataset load_libsvm(const std::string& path, int d, bool normalize = true);

NormStats compute_stats(const Matrix& x);
void apply_normalization(Dataset& ds, const NormStats& stats);
void normalize_inplace(Dataset& ds);
Matrix denormalized(const Matrix& x_norm, const NormStats& stats);

// Re-expresses ds.y in terms of a reference label mapping (e.g. the one a
// model was trained with). Unseen labels are an error.
void remap_labels(Dataset& ds, const std::vector<std::string>& reference_labels);

Dataset subset(const Dataset& ds, const std::vector<Index>& indices);

struct SplitResult {
  Dataset train, validation, test;
};

// Seeded shuffle then partition by fractions (must be nonnegative, sum 1).
SplitResult split(const Dataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed);

// k disjoint test folds covering [0, n) exactly once, after a seeded shuffle.
std::vector<std::vector<Index>> kfold_indices(Index n, int k, std::uint64_t seed);

void write_matrix_csv(const Matrix& m, const std::string& path);
void write_matrix_pgm(const Matrix& m, const std::string& path);

}  // namespace svdkl
