#include <cmath>
#include <vector>

#include "doctest.h"
#include "safa/errors.hpp"
#include "safa/finite_diff.hpp"
#include "safa/hash.hpp"
#include "safa/rng.hpp"
#include "safa/tensor.hpp"

using namespace safa;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

// Plain Gauss-Jordan with partial pivoting.
Tensor gauss_solve(Tensor g, Tensor rhs) {
  const auto n = g.rows(), m = rhs.cols();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(g.at(r, c)) > std::abs(g.at(p, c))) p = r;
    for (std::size_t k = 0; k < n; ++k) std::swap(g.at(c, k), g.at(p, k));
    for (std::size_t k = 0; k < m; ++k) std::swap(rhs.at(c, k), rhs.at(p, k));
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = g.at(r, c) / g.at(c, c);
      for (std::size_t k = 0; k < n; ++k) g.at(r, k) -= f * g.at(c, k);
      for (std::size_t k = 0; k < m; ++k) rhs.at(r, k) -= f * rhs.at(c, k);
    }
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < m; ++k) rhs.at(r, k) /= g.at(r, r);
  return rhs;
}

Tensor random_matrix(RngStream& rng, std::size_t r, std::size_t c) {
  Tensor t({r, c});
  for (auto& v : t.data()) v = rng.next_normal();
  return t;
}

}  // namespace

TEST_CASE("tensor construction contracts") {
  CHECK_THROWS_AS(Tensor(Shape{}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>(3)), DimensionError);
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), DimensionError);
  auto t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.transpose().at(2, 1) == 6);
  CHECK(shape_string(t.shape()) == "[2x3]");
}

TEST_CASE("matmul") {
  auto a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), a) == a);
  CHECK(matmul(a, Tensor::matrix({{1}, {1}})) == Tensor::matrix({{3}, {7}}));
  CHECK_THROWS_AS(matmul(a, Tensor::matrix({{1, 2, 3}})), DimensionError);

  RngStream rng(11, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = 1 + rng.next_below(9), k = 1 + rng.next_below(9), n = 1 + rng.next_below(9);
    auto x = random_matrix(rng, m, k), y = random_matrix(rng, k, n);
    CHECK(max_abs_diff(matmul(x, y), naive_matmul(x, y)) < 1e-12);
  }
}

TEST_CASE("spd_solve") {
  auto b = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  CHECK(max_abs_diff(spd_solve(Tensor::identity(3), b, 0.0), b) == 0.0);
  auto x = spd_solve(Tensor::matrix({{4, 0}, {0, 9}}), Tensor::matrix({{2}, {3}}), 0.0);
  CHECK(x.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(x.at(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  RngStream rng(12, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = 1 + rng.next_below(10);
    auto a = random_matrix(rng, n, n + 2);
    auto g = matmul(a, a.transpose());
    auto rhs = random_matrix(rng, n, 3);
    CHECK(max_abs_diff(spd_solve(g, rhs, 0.0), gauss_solve(g, rhs)) < 1e-8);
  }

  SUBCASE("a zero pivot is rescued by jitter") {
    auto g = Tensor::matrix({{1, 0}, {0, 0}});
    CHECK(spd_solve(g, Tensor::matrix({{1}, {0}}), 0.0).all_finite());
  }
  SUBCASE("indefinite input names the leading minor") {
    auto g = Tensor::matrix({{1, 0, 0}, {0, 1, 2}, {0, 2, 1}});
    try {
      spd_solve(g, Tensor::matrix({{1}, {1}, {1}}), 0.0);
      FAIL("expected SingularMatrixError");
    } catch (const SingularMatrixError& e) {
      CHECK(e.leading_minor() == 3);
    }
  }
  CHECK_THROWS_AS(spd_solve(Tensor::matrix({{1, 2}}), Tensor::matrix({{1}}), 0.0), DimensionError);
}

TEST_CASE("rng determinism") {
  RngStream a(42, 3), b(42, 3);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  RngStream c(42, 3);
  auto fork = c.fork(7);
  CHECK(c.counter() == 0);
  CHECK(fork.next_u64() != RngStream(42, 3).next_u64());
  CHECK(RngStream(43, 3).next_u64() != RngStream(42, 3).next_u64());
}

TEST_CASE("philox known answer") {
  // Random123 reference vectors for philox4x32-10.
  auto z = RngStream::philox({0, 0, 0, 0}, {0, 0});
  CHECK(z == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  auto f = RngStream::philox({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(f == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
}

TEST_CASE("gaussian moments over 1e6 draws") {
  RngStream rng(2024, streams::kZo);
  auto s = gaussian_sample(rng, 1'000'000);
  double mean = 0.0;
  for (double v : s.data()) mean += v;
  mean /= s.size();
  double var = 0.0;
  for (double v : s.data()) var += (v - mean) * (v - mean);
  var /= s.size() - 1;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("distinct streams are uncorrelated") {
  RngStream a(5, 1), b(5, 2);
  const int n = 100'000;
  std::vector<double> x(n), y(n);
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    x[i] = a.next_normal();
    y[i] = b.next_normal();
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.01);
}

TEST_CASE("next_below and next_uniform ranges") {
  RngStream rng(9, 9);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = rng.next_uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    hist[rng.next_below(7)]++;
  }
  for (int h : hist) CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("cosine similarity") {
  std::vector<double> v{0.3, -2.0, 1.5};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> e1{1, 0}, e2{0, 1}, z{0, 0};
  CHECK(cosine_similarity(e1, e2) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(e1, z), DegenerateError);
  CHECK_THROWS_AS(cosine_similarity(e1, v), DimensionError);
}

TEST_CASE("normalize_rows") {
  auto m = normalize_rows(Tensor::matrix({{3, 4}, {0, 2}}));
  CHECK(m.at(0, 0) == doctest::Approx(0.6));
  CHECK(m.at(0, 1) == doctest::Approx(0.8));
  CHECK(m.at(1, 1) == 1.0);
  CHECK(normalize_rows(m) == m);
  CHECK_THROWS_AS(normalize_rows(Tensor::matrix({{1, 0}, {0, 0}})), DegenerateError);
}

TEST_CASE("finite differences") {
  auto sq = [](const Tensor& x) { return x[0] * x[0] + x[1] * x[1]; };
  auto g = finite_diff_grad(sq, Tensor::vector({1, 2}), 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-6);
  CHECK(std::abs(g[1] - 4.0) < 1e-6);
  auto c = finite_diff_grad([](const Tensor&) { return 3.0; }, Tensor::vector({1, 2, 3}), 1e-5);
  CHECK(max_abs_diff(c, Tensor({3})) == 0.0);
  auto bad = [](const Tensor& x) { return x[0] > 0.5 ? std::nan("") : 0.0; };
  CHECK_THROWS_AS(finite_diff_grad(bad, Tensor::vector({0.5}), 1e-3), NumericError);
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a(std::string_view("")) == kFnvOffset);
  CHECK(fnv1a(std::string_view("a")) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a(std::string_view("foobar")) == 0x85944171f73967e8ull);
  CHECK(fnv1a(std::string_view("bar"), fnv1a(std::string_view("foo"))) == fnv1a(std::string_view("foobar")));
  CHECK(to_hex(0xabcull) == "0000000000000abc");
}
