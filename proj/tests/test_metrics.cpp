#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "photocon/metrics.hpp"

using namespace photocon;

TEST_CASE("median uses the even-count convention") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("hand-computed metrics without median scaling") {
  DepthMap gt(1, 2), pred(1, 2);
  gt.data = {2.0, 4.0};
  pred.data = {2.0, 5.0};
  const DepthMetrics m = evaluate(pred, gt, kDepthCap, false);
  CHECK(m.pixels == 2);
  CHECK(m.abs_rel == doctest::Approx((0.0 + 0.25) / 2));
  CHECK(m.sq_rel == doctest::Approx((0.0 + 1.0 / 4.0) / 2));
  CHECK(m.rmse == doctest::Approx(std::sqrt(0.5)));
  CHECK(m.rmse_log == doctest::Approx(std::sqrt(std::pow(std::log(5.0 / 4.0), 2) / 2)));
  CHECK(m.delta1 == 0.5);  // 5/4 sits exactly on the strict threshold
  CHECK(m.delta2 == 1.0);
  CHECK(m.scale == 1.0);
}

TEST_CASE("invalid pixels are skipped and an empty set throws") {
  DepthMap gt(1, 4, 5.0), pred(1, 4, 5.0);
  gt[0] = 0.0;
  pred[1] = std::nan("");
  pred[2] = -1.0;
  Mask valid(1, 4, 1);
  CHECK(evaluate(pred, gt, kDepthCap, false, &valid).pixels == 1);
  valid[3] = 0;
  CHECK_THROWS_AS(evaluate(pred, gt, kDepthCap, false, &valid), InvalidInput);
  CHECK_THROWS_AS(evaluate(DepthMap(2, 2, 1.0), DepthMap(2, 3, 1.0)), InvalidInput);
}

TEST_CASE("caps clamp both maps") {
  DepthMap gt(1, 1, 200.0), pred(1, 1, 100.0);
  const DepthMetrics m = evaluate(pred, gt, 80.0, false);
  CHECK(m.abs_rel == 0.0);
}

TEST_CASE("scale report") {
  const ScaleReport r = scale_report(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(r.mean == doctest::Approx(2.0));
  CHECK(r.stddev == doctest::Approx(std::sqrt(2.0 / 3.0)));
  DepthMap gt(1, 3), pred(1, 3);
  gt.data = {1.0, 2.0, 3.0};
  pred.data = {10.0, 20.0, 30.0};
  const ScaleReport p = scale_report({{pred, gt}});
  REQUIRE(p.ratios.size() == 1);
  CHECK(p.ratios[0] == doctest::Approx(0.1));
}
