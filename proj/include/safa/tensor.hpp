#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace safa {

using Shape = std::vector<std::size_t>;

// Dense row-major array of doubles. Shape dimensions are positive and their
// product always equals data().size().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  Tensor transpose() const;
  bool all_finite() const noexcept;
  void fill(double v);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const Shape& shape);

Tensor matmul(const Tensor& a, const Tensor& b);

// Solves (g + jitter*I) x = rhs through a Cholesky factorization. If the
// factorization breaks down the jitter is raised tenfold (starting from
// 1e-12 when jitter is zero), for at most three attempts.
Tensor spd_solve(const Tensor& g, const Tensor& rhs, double jitter);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Scales every row of a matrix to unit L2 norm; rows whose norm is already 1
// to within 4 ulp are copied unchanged. Zero rows raise DegenerateError.
Tensor normalize_rows(const Tensor& m);

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> rows);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace safa
