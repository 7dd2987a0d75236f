#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "photocon/depth_repr.hpp"

using namespace photocon;

TEST_CASE("decoded values") {
  ReprConfig disp;
  disp.kind = ReprKind::disparity;
  CHECK(decode_value(0.5, disp) == doctest::Approx(2.0));

  ReprConfig sc;
  sc.kind = ReprKind::scaled_disparity;
  CHECK(decode_value(0.0, sc) == doctest::Approx(100.0));
  CHECK(decode_value(1.0, sc) == doctest::Approx(0.1));

  ReprConfig sp;
  CHECK(decode_value(0.0, sp) == doctest::Approx(std::log(2.0)));
  CHECK(decode_value(50.0, sp) == 50.0);
  CHECK(decode_value(-800.0, sp) >= 0.0);
  CHECK(std::isfinite(decode_value(800.0, sp)));
}

TEST_CASE("encode inverts decode") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.2, 60.0);
  for (ReprKind k : {ReprKind::disparity, ReprKind::scaled_disparity, ReprKind::softplus}) {
    ReprConfig c;
    c.kind = k;
    for (int n = 0; n < 100; ++n) {
      const double d = u(rng);
      CHECK(decode_value(encode_value(d, c), c) == doctest::Approx(d).epsilon(1e-10));
    }
  }
}

TEST_CASE("derivative matches central differences") {
  std::mt19937_64 rng(8);
  for (ReprKind k : {ReprKind::disparity, ReprKind::scaled_disparity, ReprKind::softplus}) {
    ReprConfig c;
    c.kind = k;
    std::uniform_real_distribution<double> u(k == ReprKind::softplus ? -5.0 : 0.05, k == ReprKind::softplus ? 40.0 : 0.95);
    for (int n = 0; n < 100; ++n) {
      const double x = u(rng);
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      const double fd = (decode_value(x + h, c) - decode_value(x - h, c)) / (2 * h);
      CHECK(decode_derivative(x, c) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("decode rejects values outside the representation's domain") {
  ReprConfig disp;
  disp.kind = ReprKind::disparity;
  Grid<double> x(2, 2, 0.5);
  x(1, 0) = 0.0;
  CHECK_THROWS_AS(decode(x, disp), InvalidInput);

  ReprConfig sc;
  sc.kind = ReprKind::scaled_disparity;
  x = Grid<double>(2, 2, 0.5);
  x(0, 1) = 1.5;
  CHECK_THROWS_AS(decode(x, sc), InvalidInput);

  ReprConfig sp;
  x = Grid<double>(2, 2, 0.5);
  x(0, 0) = std::nan("");
  CHECK_THROWS_AS(decode(x, sp), InvalidInput);

  sc.sigma_min = 20.0;
  CHECK_THROWS_AS(sc.validate(), InvalidInput);
}

TEST_CASE("decode agrees with decode_value on every pixel") {
  ReprConfig c;
  Grid<double> x(3, 4);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = -2.0 + 0.7 * static_cast<double>(k);
  const DecodedDepth d = decode(x, c, Exec::serial);
  const DecodedDepth p = decode(x, c, Exec::parallel);
  for (std::size_t k = 0; k < x.size(); ++k) {
    CHECK(d.depth[k] == decode_value(x[k], c));
    CHECK(d.d_depth[k] == decode_derivative(x[k], c));
    CHECK(p.depth[k] == d.depth[k]);
  }
}

TEST_CASE("variance regularizer") {
  SUBCASE("population variance and gradient") {
    DepthMap d(1, 4);
    d.data = {1.0, 2.0, 3.0, 6.0};
    const double mean = 3.0;
    double var = 0.0;
    for (double v : d.data) var += (v - mean) * (v - mean);
    var /= 4.0;
    const VarianceLoss l = variance_regularizer(d);
    CHECK(l.variance == doctest::Approx(var));
    CHECK(l.loss == doctest::Approx(kVarianceLossWeight / var));
    CHECK_FALSE(l.collapsed);
    const double h = 1e-6;
    for (std::size_t k = 0; k < d.size(); ++k) {
      DepthMap a = d, b = d;
      a[k] += h;
      b[k] -= h;
      const double fd = (variance_regularizer(a).loss - variance_regularizer(b).loss) / (2 * h);
      CHECK(l.grad[k] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  SUBCASE("constant depth is flagged and finite") {
    const VarianceLoss l = variance_regularizer(DepthMap(3, 3, 4.0));
    CHECK(l.collapsed);
    CHECK(std::isfinite(l.loss));
    for (double g : l.grad.data) CHECK(g == 0.0);
  }
  SUBCASE("mask restricts the pixels") {
    DepthMap d(1, 3);
    d.data = {1.0, 3.0, 1000.0};
    Mask m(1, 3, 1);
    m[2] = 0;
    const VarianceLoss l = variance_regularizer(d, &m);
    CHECK(l.variance == doctest::Approx(1.0));
    CHECK(l.grad[2] == 0.0);
  }
  CHECK(uses_variance_regularizer(ReprKind::disparity));
  CHECK(uses_variance_regularizer(ReprKind::softplus));
  CHECK_FALSE(uses_variance_regularizer(ReprKind::scaled_disparity));
}

TEST_CASE("parse names") {
  CHECK(parse_repr_kind("softplus") == ReprKind::softplus);
  CHECK(parse_repr_kind("scaled") == ReprKind::scaled_disparity);
  CHECK_THROWS_AS(parse_repr_kind("log"), InvalidInput);
}
