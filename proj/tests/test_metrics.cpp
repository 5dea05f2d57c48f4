#include <cmath>
#include <vector>

#include "doctest.h"
#include "safa/errors.hpp"
#include "safa/metrics.hpp"

using namespace safa;

TEST_CASE("session accuracy") {
  std::vector<std::size_t> y{0, 1, 2, 3};
  CHECK(session_accuracy(std::vector<long>{0, 1, 2, 3}, y) == 1.0);
  CHECK(session_accuracy(std::vector<long>{0, 1, 0, 0}, y) == 0.5);
  CHECK(session_accuracy(std::vector<long>{-1, 1, 2, 3}, y) == 0.75);
  CHECK_THROWS_AS(session_accuracy(std::vector<long>{}, std::vector<std::size_t>{}), DimensionError);
  CHECK_THROWS_AS(session_accuracy(std::vector<long>{0}, y), DimensionError);
}

TEST_CASE("average and last-session delta") {
  std::vector<double> flat{0.4, 0.4, 0.4};
  CHECK(avg_and_delta_last(flat, 0.0).avg == doctest::Approx(0.4).epsilon(1e-15));
  std::vector<double> ours{60.0, 52.0, 44.69};
  const auto r = avg_and_delta_last(ours, 48.70);
  CHECK(std::round(r.delta_last * 100.0) / 100.0 == -4.01);
  CHECK(std::abs(r.delta_last + 4.01) < 1e-12);
  CHECK_THROWS_AS(avg_and_delta_last(std::vector<double>{}, 0.0), DimensionError);
}

TEST_CASE("harmonic accuracy") {
  CHECK(harmonic_accuracy(0.5, 0.5) == 0.5);
  CHECK(harmonic_accuracy(0.7, 0.0) == 0.0);
  CHECK(harmonic_accuracy(0.0, 0.0) == 0.0);
  CHECK(harmonic_accuracy(0.6, 0.3) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(harmonic_accuracy(-0.1, 0.5), DimensionError);
}

TEST_CASE("confusion breakdown") {
  ConfusionBreakdown b{649778, 4222, 12108, 5092};
  finish_ratios(b);
  REQUIRE(b.mbr.has_value());
  CHECK(std::round(*b.mbr * 1000.0) / 1000.0 == 0.704);
  CHECK(*b.mar == doctest::Approx(4222.0 / 654000.0));

  std::vector<std::size_t> y{0, 0, 1, 2, 2, 3};
  std::vector<long> p{0, 1, 1, 2, -1, 0};
  auto c = confusion_breakdown(p, y, 2);
  CHECK(c.cbn == 2);
  CHECK(c.mbn == 1);
  CHECK(c.cnn == 1);
  CHECK(c.mnn == 2);
  CHECK(*c.mbr == doctest::Approx(2.0 / 3.0));

  std::vector<std::size_t> base_only{0, 1};
  auto d = confusion_breakdown(std::vector<long>{0, 1}, base_only, 2);
  CHECK_FALSE(d.mbr.has_value());
  CHECK(*d.mar == 0.0);

  std::vector<std::size_t> novel{2, 3};
  CHECK(*confusion_breakdown(std::vector<long>{2, 3}, novel, 2).mbr == 0.0);
  CHECK_THROWS_AS(confusion_breakdown(p, y, 0), DimensionError);
}

TEST_CASE("sparsity report") {
  std::vector<double> none{0.0, 0.0}, steps{40.0, 20.0};
  auto r = sparsity_report(none, steps);
  CHECK(r.global_sparsity == 1.0);
  auto all = sparsity_report(steps, steps);
  CHECK(all.global_sparsity == 0.0);
  std::vector<double> some{10.0, 5.0};
  auto s = sparsity_report(some, steps);
  CHECK(s.layer_rates == std::vector<double>{0.25, 0.25});
  CHECK(s.global_rate == 0.25);
  CHECK_THROWS_AS(sparsity_report(some, std::vector<double>{1.0}), DimensionError);
}
