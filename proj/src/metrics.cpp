#include "photocon/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace photocon {

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidInput("median of an empty set");
  const std::size_t n = values.size();
  auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double hi = *mid;
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), mid);
  return 0.5 * (lo + hi);
}

DepthMetrics evaluate(const DepthMap& pred, const DepthMap& gt, double cap, bool median_scale, const Mask* valid) {
  require_same_shape(pred, gt, "evaluate");
  if (valid) require_same_shape(pred, *valid, "evaluate mask");
  if (!(cap > kDepthFloor)) throw InvalidInput("evaluate: cap must exceed the depth floor");
  std::vector<double> p, g;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    if (valid && !(*valid)[k]) continue;
    if (!(gt[k] > 0.0) || !std::isfinite(gt[k]) || !(pred[k] > 0.0) || !std::isfinite(pred[k])) continue;
    p.push_back(pred[k]);
    g.push_back(gt[k]);
  }
  if (p.empty()) throw InvalidInput("evaluate: no jointly valid pixels");
  DepthMetrics m;
  m.pixels = p.size();
  if (median_scale) {
    const double mp = median(p);
    m.scale = median(g) / mp;
    for (double& v : p) v *= m.scale;
  }
  const auto n = static_cast<double>(p.size());
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pv = std::clamp(p[k], kDepthFloor, cap);
    const double gv = std::clamp(g[k], kDepthFloor, cap);
    const double diff = pv - gv;
    m.abs_rel += std::abs(diff) / gv;
    m.sq_rel += diff * diff / gv;
    m.rmse += diff * diff;
    const double ld = std::log(pv) - std::log(gv);
    m.rmse_log += ld * ld;
    const double ratio = std::max(pv / gv, gv / pv);
    d1 += ratio < 1.25 ? 1 : 0;
    d2 += ratio < 1.25 * 1.25 ? 1 : 0;
    d3 += ratio < 1.25 * 1.25 * 1.25 ? 1 : 0;
  }
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_log = std::sqrt(m.rmse_log / n);
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  return m;
}

ScaleReport scale_report(const std::vector<double>& ratios) {
  if (ratios.empty()) throw InvalidInput("scale_report: need at least one run");
  ScaleReport r;
  r.ratios = ratios;
  for (double v : ratios) r.mean += v;
  r.mean /= static_cast<double>(ratios.size());
  for (double v : ratios) r.stddev += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(r.stddev / static_cast<double>(ratios.size()));
  return r;
}

ScaleReport scale_report(const std::vector<std::pair<DepthMap, DepthMap>>& runs) {
  std::vector<double> ratios;
  for (const auto& [pred, gt] : runs) {
    require_same_shape(pred, gt, "scale_report");
    std::vector<double> p, g;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      if (!(gt[k] > 0.0) || !std::isfinite(gt[k]) || !std::isfinite(pred[k])) continue;
      p.push_back(pred[k]);
      g.push_back(gt[k]);
    }
    if (p.empty()) throw InvalidInput("scale_report: no valid pixels");
    const double mp = median(p);
    if (!(mp > 0.0)) throw InvalidInput("scale_report: zero median prediction");
    ratios.push_back(median(g) / mp);
  }
  return scale_report(ratios);
}

}  // namespace photocon
