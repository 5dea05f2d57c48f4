#include "safa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "safa/errors.hpp"

namespace safa {

namespace {

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= d;
  }
  return n;
}

void require_matrix(const Tensor& t, const char* name) {
  if (t.rank() != 2)
    throw DimensionError(std::string(name) + " must be a matrix, got shape " + shape_string(t.shape()));
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size())
    throw DimensionError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                         " elements");
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis out of range for " + shape_string(shape_));
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require_matrix(*this, "tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_matrix(*this, "tensor");
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const auto c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

Tensor Tensor::transpose() const {
  const auto r = rows();
  const auto c = cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = at(i, j);
  return out;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  Tensor out({m, n});
  // i-p-j order: each out(i,j) accumulates p = 0..k-1 left to right.
  for (std::size_t i = 0; i < m; ++i) {
    auto orow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      const auto brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

namespace {

// Lower-triangular Cholesky factor of g + jitter*I, or the index of the first
// leading minor that is not positive definite.
bool cholesky(const Tensor& g, double jitter, Tensor& l, std::size_t& failed_minor) {
  const auto n = g.rows();
  l = Tensor({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double diag = g.at(j, j) + jitter;
    for (std::size_t p = 0; p < j; ++p) diag -= l.at(j, p) * l.at(j, p);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      failed_minor = j + 1;
      return false;
    }
    const double ljj = std::sqrt(diag);
    l.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = g.at(i, j);
      for (std::size_t p = 0; p < j; ++p) s -= l.at(i, p) * l.at(j, p);
      l.at(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace

Tensor spd_solve(const Tensor& g, const Tensor& rhs, double jitter) {
  require_matrix(g, "spd_solve matrix");
  require_matrix(rhs, "spd_solve rhs");
  const auto n = g.rows();
  if (g.cols() != n) throw DimensionError("spd_solve matrix must be square, got " + shape_string(g.shape()));
  if (rhs.rows() != n)
    throw DimensionError("spd_solve rhs rows " + std::to_string(rhs.rows()) + " != " + std::to_string(n));
  if (jitter < 0.0) throw DimensionError("spd_solve jitter must be non-negative");

  Tensor l;
  std::size_t failed = 0;
  double j = jitter;
  bool ok = false;
  for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
    ok = cholesky(g, j, l, failed);
    if (!ok) j = (j > 0.0) ? j * 10.0 : 1e-12;
  }
  if (!ok)
    throw SingularMatrixError("matrix is not positive definite: leading minor " + std::to_string(failed) +
                                  " failed after jitter escalation",
                              failed);

  const auto m = rhs.cols();
  Tensor x = rhs;
  for (std::size_t c = 0; c < m; ++c) {
    // forward: L y = b
    for (std::size_t i = 0; i < n; ++i) {
      double s = x.at(i, c);
      for (std::size_t p = 0; p < i; ++p) s -= l.at(i, p) * x.at(p, c);
      x.at(i, c) = s / l.at(i, i);
    }
    // backward: L^T x = y
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x.at(ii, c);
      for (std::size_t p = ii + 1; p < n; ++p) s -= l.at(p, ii) * x.at(p, c);
      x.at(ii, c) = s / l.at(ii, ii);
    }
  }
  return x;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("dot length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateError("cosine similarity of a zero-norm vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Tensor normalize_rows(const Tensor& m) {
  Tensor out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = out.row(r);
    const double n = l2_norm(row);
    if (!(n > 0.0)) throw DegenerateError("row " + std::to_string(r) + " has zero norm");
    // Rows already unit to rounding are left alone, so normalizing twice is exact.
    if (std::abs(n - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) continue;
    for (auto& v : row) v /= n;
  }
  return out;
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DimensionError("gather_rows: no rows selected");
  const auto c = m.cols();
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace safa
