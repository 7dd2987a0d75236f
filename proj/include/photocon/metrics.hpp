#pragma once

#include <vector>

#include "photocon/grid.hpp"

namespace photocon {

inline constexpr double kDepthFloor = 1e-3;
inline constexpr double kDepthCap = 80.0;

struct DepthMetrics {
  double abs_rel = 0.0;   ///< ARD
  double sq_rel = 0.0;    ///< SRD
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double scale = 1.0;     ///< factor applied to the prediction (1 without median scaling)
  std::size_t pixels = 0;
};

/// Pixels count when gt > 0, both maps are finite, pred > 0 and (if given) valid is set.
/// With median scaling pred is multiplied by median(gt)/median(pred); both maps are then
/// clamped to [kDepthFloor, cap].
DepthMetrics evaluate(const DepthMap& pred, const DepthMap& gt, double cap = kDepthCap, bool median_scale = true,
                      const Mask* valid = nullptr);

struct ScaleReport {
  std::vector<double> ratios;  ///< median(gt) / median(pred) per image
  double mean = 0.0;
  double stddev = 0.0;         ///< population
};

ScaleReport scale_report(const std::vector<std::pair<DepthMap, DepthMap>>& runs);
/// Same, from precomputed per-image ratios.
ScaleReport scale_report(const std::vector<double>& ratios);

/// Median with the even-count convention (mean of the two middle values).
double median(std::vector<double> values);

}  // namespace photocon
