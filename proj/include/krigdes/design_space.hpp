#pragma once

// Finite candidate universes, designs as index subsets, and trend bases.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "krigdes/error.hpp"

namespace krigdes {

using Index = int;
using IndexList = std::vector<Index>;

/// Finite set of locations X with planar coordinates and optional named covariates.
class CandidateSet {
 public:
  CandidateSet() = default;

  CandidateSet(std::vector<std::int64_t> ids, Eigen::MatrixXd coords,
               std::vector<std::string> covariate_names = {},
               Eigen::MatrixXd covariates = {},
               std::optional<double> grid_spacing = std::nullopt)
      : ids_(std::move(ids)),
        coords_(std::move(coords)),
        covariate_names_(std::move(covariate_names)),
        covariates_(std::move(covariates)),
        grid_spacing_(grid_spacing) {
    if (coords_.cols() < 1) throw ConfigError("candidate set: dimension must be >= 1");
    if (coords_.rows() < 2) throw ConfigError("candidate set: need at least 2 points");
    if (static_cast<Eigen::Index>(ids_.size()) != coords_.rows())
      throw ConfigError("candidate set: id count does not match coordinate rows");
    if (covariates_.size() == 0) covariates_.resize(coords_.rows(), 0);
    if (covariates_.rows() != coords_.rows() ||
        covariates_.cols() != static_cast<Eigen::Index>(covariate_names_.size()))
      throw ConfigError("candidate set: covariate table shape mismatch");
    std::unordered_set<std::int64_t> seen;
    for (auto id : ids_)
      if (!seen.insert(id).second)
        throw ConfigError("candidate set: duplicate id " + std::to_string(id));
  }

  Index size() const { return static_cast<Index>(coords_.rows()); }
  int dim() const { return static_cast<int>(coords_.cols()); }
  std::int64_t id(Index i) const { return ids_[static_cast<std::size_t>(i)]; }
  const std::vector<std::int64_t>& ids() const { return ids_; }
  const Eigen::MatrixXd& coords() const { return coords_; }
  auto point(Index i) const { return coords_.row(i); }

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  std::optional<int> covariate_column(std::string_view name) const {
    for (std::size_t c = 0; c < covariate_names_.size(); ++c)
      if (covariate_names_[c] == name) return static_cast<int>(c);
    return std::nullopt;
  }
  double covariate(Index i, int column) const { return covariates_(i, column); }

  /// Lattice spacing when the set was built by make_grid; nullopt for irregular sets.
  std::optional<double> grid_spacing() const { return grid_spacing_; }

  /// Dense index of an external id.
  Index index_of(std::int64_t id) const {
    auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) throw ConfigError("unknown candidate id " + std::to_string(id));
    return static_cast<Index>(it - ids_.begin());
  }

 private:
  std::vector<std::int64_t> ids_;
  Eigen::MatrixXd coords_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd covariates_;
  std::optional<double> grid_spacing_;
};

/// A design xi: sorted, distinct candidate indices with 1 <= k <= N-1.
class Design {
 public:
  Design() = default;

  Design(IndexList indices, Index n) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    if (indices_.empty()) throw ConfigError("design must contain at least one point");
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
      throw ConfigError("design contains repeated indices");
    if (indices_.front() < 0 || indices_.back() >= n)
      throw ConfigError("design index out of range [0, " + std::to_string(n) + ")");
    if (static_cast<Index>(indices_.size()) > n - 1)
      throw ConfigError("design size must be at most N-1");
  }

  const IndexList& indices() const { return indices_; }
  Index size() const { return static_cast<Index>(indices_.size()); }
  bool contains(Index i) const { return std::binary_search(indices_.begin(), indices_.end(), i); }

  friend bool operator==(const Design&, const Design&) = default;
  friend auto operator<=>(const Design& a, const Design& b) { return a.indices_ <=> b.indices_; }

 private:
  IndexList indices_;
};

/// Sorted complement X \ xi.
inline IndexList complement(std::span<const Index> design, Index n) {
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  for (Index i : design) in[static_cast<std::size_t>(i)] = 1;
  IndexList out;
  out.reserve(static_cast<std::size_t>(n) - design.size());
  for (Index i = 0; i < n; ++i)
    if (!in[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

inline IndexList complement(const Design& design, Index n) { return complement(design.indices(), n); }

inline constexpr std::int64_t kDefaultMaxPoints = 4'000'000;

/// Regular lattice {s, 2s, ..., ns}^d, row-major with the last axis fastest; ids from 0.
inline CandidateSet make_grid(int n_per_axis, int d, double spacing,
                              std::int64_t max_points = kDefaultMaxPoints) {
  if (n_per_axis < 2) throw ConfigError("make_grid: n_per_axis must be >= 2");
  if (d < 1) throw ConfigError("make_grid: dimension must be >= 1");
  if (!(spacing > 0) || !std::isfinite(spacing)) throw ConfigError("make_grid: spacing must be > 0");
  std::int64_t n = 1;
  for (int a = 0; a < d; ++a) {
    n *= n_per_axis;
    if (n > max_points)
      throw CapacityError("make_grid: " + std::to_string(n_per_axis) + "^" + std::to_string(d) +
                          " points exceeds the maximum of " + std::to_string(max_points));
  }
  Eigen::MatrixXd coords(n, d);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r) {
    std::int64_t rem = r;
    for (int a = d - 1; a >= 0; --a) {
      coords(r, a) = spacing * static_cast<double>(rem % n_per_axis + 1);
      rem /= n_per_axis;
    }
    ids[static_cast<std::size_t>(r)] = r;
  }
  return CandidateSet(std::move(ids), std::move(coords), {}, {}, spacing);
}

/// Column layout of a candidate CSV. When `dim` is unset, coordinate columns are the
/// consecutive headers after `id` named x, y, z or x1, x2, ...
struct CsvSchema {
  std::optional<int> dim;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool is_coordinate_header(std::string_view h, int position) {
  static constexpr std::string_view kAxes[] = {"x", "y", "z"};
  if (position < 3 && h == kAxes[position]) return true;
  return h == "x" + std::to_string(position + 1);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, std::string_view column) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw ConfigError("parse error at line " + std::to_string(line) + ": column '" +
                      std::string(column) + "' is not numeric ('" + std::string(field) + "')");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value))
      throw ConfigError("parse error at line " + std::to_string(line) + ": non-finite value");
  }
  return value;
}

}  // namespace detail

/// Reads `id,x1[,...,xd][,cov1,...]`. Coordinates are treated as planar.
inline CandidateSet load_candidates(std::istream& in, CsvSchema schema = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (line_no == 0 || line.find_first_not_of(" \t\r") == std::string::npos)
    throw ConfigError("candidate CSV is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);

  auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "id")
    throw ConfigError("candidate CSV header must start with 'id' (line " + std::to_string(line_no) + ")");
  const int ncols = static_cast<int>(header.size());
  int d = 0;
  if (schema.dim) {
    d = *schema.dim;
    if (d < 1 || d > ncols - 1) throw ConfigError("candidate CSV: dimension does not fit the header");
  } else {
    while (d + 1 < ncols && detail::is_coordinate_header(header[static_cast<std::size_t>(d + 1)], d)) ++d;
    if (d == 0) throw ConfigError("candidate CSV: no coordinate columns (expected x1 or x after id)");
  }
  std::vector<std::string> cov_names;
  for (int c = 1 + d; c < ncols; ++c) cov_names.emplace_back(header[static_cast<std::size_t>(c)]);
  const int q = static_cast<int>(cov_names.size());

  std::vector<std::int64_t> ids;
  std::vector<double> coord_vals, cov_vals;
  std::unordered_set<std::int64_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) != ncols)
      throw ConfigError("inconsistent column count at line " + std::to_string(line_no) + ": expected " +
                        std::to_string(ncols) + ", got " + std::to_string(fields.size()));
    auto id = detail::parse_number<std::int64_t>(fields[0], line_no, "id");
    if (!seen.insert(id).second) throw ConfigError("duplicate id at line " + std::to_string(line_no));
    ids.push_back(id);
    for (int c = 1; c <= d; ++c)
      coord_vals.push_back(detail::parse_number<double>(fields[static_cast<std::size_t>(c)], line_no,
                                                        header[static_cast<std::size_t>(c)]));
    for (int c = 1 + d; c < ncols; ++c)
      cov_vals.push_back(detail::parse_number<double>(fields[static_cast<std::size_t>(c)], line_no,
                                                      header[static_cast<std::size_t>(c)]));
  }
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n < 2) throw ConfigError("candidate CSV must contain at least 2 records");
  Eigen::MatrixXd coords = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      coord_vals.data(), n, d);
  Eigen::MatrixXd covs(n, q);
  if (q > 0)
    covs = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cov_vals.data(), n, q);
  return CandidateSet(std::move(ids), std::move(coords), std::move(cov_names), std::move(covs));
}

inline CandidateSet load_candidates(const std::string& path, CsvSchema schema = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open candidate file '" + path + "'");
  return load_candidates(in, schema);
}

/// Trend functions f(x) = (f_1(x), ..., f_p(x)).
class TrendBasis {
 public:
  enum class Kind { kConstant, kLinear, kQuadratic, kMonomials, kExternalDrift };

  static TrendBasis constant() { return TrendBasis(Kind::kConstant); }
  static TrendBasis linear() { return TrendBasis(Kind::kLinear); }
  /// Full quadratic: 1, x_i..., x_i^2..., then x_i x_j (i<j). In 2-D: (1, x, y, x^2, y^2, xy).
  static TrendBasis quadratic() { return TrendBasis(Kind::kQuadratic); }
  /// Each entry holds one exponent per coordinate axis.
  static TrendBasis monomials(std::vector<std::vector<int>> exponents) {
    if (exponents.empty()) throw ConfigError("monomial basis needs at least one term");
    TrendBasis b(Kind::kMonomials);
    b.exponents_ = std::move(exponents);
    return b;
  }
  /// Columns (1, covariate).
  static TrendBasis external_drift(std::string covariate) {
    TrendBasis b(Kind::kExternalDrift);
    b.covariate_ = std::move(covariate);
    return b;
  }

  Kind kind() const { return kind_; }
  const std::string& covariate() const { return covariate_; }
  const std::vector<std::vector<int>>& exponents() const { return exponents_; }

  int size(int d) const {
    switch (kind_) {
      case Kind::kConstant: return 1;
      case Kind::kLinear: return d + 1;
      case Kind::kQuadratic: return 1 + 2 * d + d * (d - 1) / 2;
      case Kind::kMonomials: return static_cast<int>(exponents_.size());
      case Kind::kExternalDrift: return 2;
    }
    return 0;
  }

  void check(const CandidateSet& set) const {
    if (kind_ == Kind::kExternalDrift && !set.covariate_column(covariate_))
      throw ConfigError("external drift covariate '" + covariate_ + "' is missing from the candidate set");
    if (kind_ == Kind::kMonomials)
      for (const auto& e : exponents_)
        if (static_cast<int>(e.size()) != set.dim())
          throw ConfigError("monomial exponent vector length must equal the dimension");
  }

  void evaluate(const CandidateSet& set, Index i, std::span<double> row) const {
    const int d = set.dim();
    auto x = set.point(i);
    switch (kind_) {
      case Kind::kConstant:
        row[0] = 1.0;
        break;
      case Kind::kLinear:
        row[0] = 1.0;
        for (int a = 0; a < d; ++a) row[static_cast<std::size_t>(1 + a)] = x(a);
        break;
      case Kind::kQuadratic: {
        std::size_t c = 0;
        row[c++] = 1.0;
        for (int a = 0; a < d; ++a) row[c++] = x(a);
        for (int a = 0; a < d; ++a) row[c++] = x(a) * x(a);
        for (int a = 0; a < d; ++a)
          for (int b = a + 1; b < d; ++b) row[c++] = x(a) * x(b);
        break;
      }
      case Kind::kMonomials:
        for (std::size_t t = 0; t < exponents_.size(); ++t) {
          double v = 1.0;
          for (int a = 0; a < d; ++a) v *= std::pow(x(a), exponents_[t][static_cast<std::size_t>(a)]);
          row[t] = v;
        }
        break;
      case Kind::kExternalDrift: {
        auto col = set.covariate_column(covariate_);
        if (!col) throw ConfigError("external drift covariate '" + covariate_ + "' is missing");
        row[0] = 1.0;
        row[1] = set.covariate(i, *col);
        break;
      }
    }
  }

 private:
  explicit TrendBasis(Kind k) : kind_(k) {}

  Kind kind_;
  std::vector<std::vector<int>> exponents_;
  std::string covariate_;
};

/// Design matrix: row i is f(x_{subset[i]}).
inline Eigen::MatrixXd basis_matrix(const TrendBasis& basis, const CandidateSet& set,
                                    std::span<const Index> subset) {
  basis.check(set);
  const int p = basis.size(set.dim());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(
      static_cast<Eigen::Index>(subset.size()), p);
  for (std::size_t r = 0; r < subset.size(); ++r) {
    if (subset[r] < 0 || subset[r] >= set.size()) throw ConfigError("basis_matrix: index out of range");
    basis.evaluate(set, subset[r], std::span<double>(out.row(static_cast<Eigen::Index>(r)).data(),
                                                     static_cast<std::size_t>(p)));
  }
  return out;
}

}  // namespace krigdes
