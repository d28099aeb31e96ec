#include "svdkl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace svdkl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quote at line " + std::to_string(line_no));
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double* out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return false;
  *out = v;
  return true;
}

// Dense label ids: numeric sort when every token is a number, else lexical.
std::vector<std::string> order_labels(const std::vector<std::string>& tokens) {
  std::vector<std::string> unique = tokens;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  bool all_numeric = true;
  for (const auto& t : unique) {
    double v;
    if (!parse_double(t, &v)) {
      all_numeric = false;
      break;
    }
  }
  if (all_numeric) {
    std::sort(unique.begin(), unique.end(), [](const std::string& a, const std::string& b) {
      double va, vb;
      parse_double(a, &va);
      parse_double(b, &vb);
      return va < vb;
    });
  }
  return unique;
}

void assign_labels(Dataset& ds, const std::vector<std::string>& tokens) {
  ds.label_names = order_labels(tokens);
  std::map<std::string, int> id;
  for (std::size_t i = 0; i < ds.label_names.size(); ++i) id[ds.label_names[i]] = int(i);
  ds.y.resize(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) ds.y[i] = id[tokens[i]];
  ds.n_classes = int(ds.label_names.size());
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column, bool has_header,
                 bool normalize) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> header;
  if (has_header) {
    if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
    ++line_no;
    header = split_csv_line(line, line_no);
    for (auto& h : header) h = trim(h);
  }

  std::vector<std::vector<std::string>> rows;
  std::size_t width = header.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw DataError("no data rows in '" + path + "'");

  // Resolve the label column: by header name when available, else by index
  // (negative counts from the end).
  auto index_of = [&](const std::string& spec) -> std::size_t {
    double v;
    if (!parse_double(spec, &v)) {
      throw DataError("label column must be an index when there is no header");
    }
    long idx = long(v);
    if (idx < 0) idx += long(width);
    if (idx < 0 || idx >= long(width)) throw DataError("label column index out of range");
    return std::size_t(idx);
  };
  std::size_t label_idx;
  if (has_header) {
    auto it = std::find(header.begin(), header.end(), label_column);
    if (it != header.end()) {
      label_idx = std::size_t(it - header.begin());
    } else {
      double v;
      if (!parse_double(label_column, &v)) {
        throw DataError("label column '" + label_column + "' not found in header");
      }
      label_idx = index_of(label_column);
    }
  } else {
    label_idx = index_of(label_column);
  }

  Dataset ds;
  const std::size_t d = width - 1;
  ds.x.resize(Index(rows.size()), Index(d));
  std::vector<std::string> label_tokens(rows.size());
  for (std::size_t c = 0, out = 0; c < width; ++c) {
    if (c == label_idx) continue;
    if (has_header) ds.feature_names.push_back(header[c]);
    ++out;
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t out = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_idx) {
        label_tokens[r] = trim(rows[r][c]);
        continue;
      }
      double v;
      if (!parse_double(rows[r][c], &v) || !std::isfinite(v)) {
        const std::string col = has_header ? header[c] : std::to_string(c);
        throw DataError("non-numeric or non-finite value in column '" + col + "' at data row " +
                        std::to_string(r + 1));
      }
      ds.x(Index(r), Index(out)) = v;
      ++out;
    }
  }
  assign_labels(ds, label_tokens);
  ds.stats.mean = Vector::Zero(Index(d));
  ds.stats.std = Vector::Ones(Index(d));
  if (normalize) normalize_inplace(ds);
  return ds;
}

Dataset load_libsvm(const std::string& path, int d, bool normalize) {
  if (d <= 0) throw std::invalid_argument("load_libsvm: d must be positive");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<Vector> rows;
  std::vector<std::string> label_tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string label;
    ls >> label;
    Vector row = Vector::Zero(d);
    std::string pair;
    while (ls >> pair) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) {
        throw DataError("malformed index:value pair at line " + std::to_string(line_no));
      }
      double idx_v, val;
      if (!parse_double(pair.substr(0, colon), &idx_v) ||
          !parse_double(pair.substr(colon + 1), &val)) {
        throw DataError("malformed index:value pair at line " + std::to_string(line_no));
      }
      const long idx = long(idx_v);
      if (idx < 1 || idx > d) {
        throw DataError("feature index " + std::to_string(idx) + " out of range [1, " +
                        std::to_string(d) + "] at line " + std::to_string(line_no));
      }
      row[Index(idx - 1)] = val;
    }
    rows.push_back(std::move(row));
    label_tokens.push_back(label);
  }
  if (rows.empty()) throw DataError("no data rows in '" + path + "'");
  Dataset ds;
  ds.x.resize(Index(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) ds.x.row(Index(r)) = rows[r];
  assign_labels(ds, label_tokens);
  ds.stats.mean = Vector::Zero(d);
  ds.stats.std = Vector::Ones(d);
  if (normalize) normalize_inplace(ds);
  return ds;
}

NormStats compute_stats(const Matrix& x) {
  NormStats s;
  s.mean = x.colwise().mean();
  s.std = Vector(x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.mean[c]).square().mean();
    const double sd = std::sqrt(var);
    s.std[c] = sd < 1e-12 ? 1.0 : sd;
  }
  return s;
}

void apply_normalization(Dataset& ds, const NormStats& stats) {
  if (stats.mean.size() != ds.x.cols()) {
    throw DataError("normalization stats dimension mismatch: data has " +
                    std::to_string(ds.x.cols()) + " features, stats have " +
                    std::to_string(stats.mean.size()));
  }
  ds.x = (ds.x.rowwise() - stats.mean.transpose()).array().rowwise() /
         stats.std.transpose().array();
  ds.stats = stats;
  ds.normalized = true;
}

void normalize_inplace(Dataset& ds) { apply_normalization(ds, compute_stats(ds.x)); }

Matrix denormalized(const Matrix& x_norm, const NormStats& stats) {
  return (x_norm.array().rowwise() * stats.std.transpose().array()).rowwise() +
         stats.mean.transpose().array();
}

void remap_labels(Dataset& ds, const std::vector<std::string>& reference_labels) {
  std::map<std::string, int> id;
  for (std::size_t i = 0; i < reference_labels.size(); ++i) id[reference_labels[i]] = int(i);
  for (std::size_t i = 0; i < ds.y.size(); ++i) {
    const std::string& token = ds.label_names[std::size_t(ds.y[i])];
    auto it = id.find(token);
    if (it == id.end()) throw DataError("label '" + token + "' was not seen at training time");
    ds.y[i] = it->second;
  }
  ds.label_names = reference_labels;
  ds.n_classes = int(reference_labels.size());
}

Dataset subset(const Dataset& ds, const std::vector<Index>& indices) {
  Dataset out = ds;
  out.x.resize(Index(indices.size()), ds.x.cols());
  out.y.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.x.row(Index(i)) = ds.x.row(indices[i]);
    out.y[i] = ds.y[std::size_t(indices[i])];
  }
  return out;
}

SplitResult split(const Dataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || test_frac < 0) {
    throw std::invalid_argument("split: fractions must be nonnegative");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must sum to 1");
  }
  const Index n = ds.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  Rng rng(mix_seed(seed, 0x51));
  std::shuffle(order.begin(), order.end(), rng);
  const Index n_train = Index(std::llround(train_frac * double(n)));
  const Index n_val = std::min<Index>(Index(std::llround(val_frac * double(n))), n - n_train);
  SplitResult out;
  out.train = subset(ds, {order.begin(), order.begin() + n_train});
  out.validation = subset(ds, {order.begin() + n_train, order.begin() + n_train + n_val});
  out.test = subset(ds, {order.begin() + n_train + n_val, order.end()});
  return out;
}

std::vector<std::vector<Index>> kfold_indices(Index n, int k, std::uint64_t seed) {
  if (k < 2 || Index(k) > n) throw std::invalid_argument("kfold: need 2 <= k <= n");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  Rng rng(mix_seed(seed, 0x52));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
  for (Index i = 0; i < n; ++i) folds[std::size_t(i % k)].push_back(order[std::size_t(i)]);
  return folds;
}

void write_matrix_csv(const Matrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  char buf[32];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << buf;
      if (c + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
}

void write_matrix_pgm(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  const double lo = m.minCoeff();
  const double hi = m.maxCoeff();
  const double range = hi - lo;
  out << "P5\n" << m.cols() << " " << m.rows() << "\n255\n";
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = range > 0 ? (m(r, c) - lo) / range : 0.5;
      out.put(char(std::lround(v * 255.0)));
    }
  }
}

}  // namespace svdkl
