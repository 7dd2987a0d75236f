#include "photocon/depth_repr.hpp"

#include <cmath>
#include <string>

namespace photocon {

std::string_view to_string(ReprKind kind) {
  switch (kind) {
    case ReprKind::disparity: return "disparity";
    case ReprKind::scaled_disparity: return "scaled_disparity";
    case ReprKind::softplus: return "softplus";
  }
  return "?";
}

ReprKind parse_repr_kind(std::string_view name) {
  if (name == "disparity") return ReprKind::disparity;
  if (name == "scaled_disparity" || name == "scaled") return ReprKind::scaled_disparity;
  if (name == "softplus") return ReprKind::softplus;
  throw InvalidInput("unknown depth representation '" + std::string(name) + "'");
}

void ReprConfig::validate() const {
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
    throw InvalidInput("repr: require 0 < sigma_min < sigma_max");
  }
}

ReprConfig ReprConfig::scaled(double min_depth, double max_depth) {
  ReprConfig c;
  c.kind = ReprKind::scaled_disparity;
  c.sigma_min = 1.0 / max_depth;
  c.sigma_max = 1.0 / min_depth;
  c.validate();
  return c;
}

namespace {
constexpr double kSoftplusLinear = 30.0;
}

double decode_value(double x, const ReprConfig& cfg) {
  switch (cfg.kind) {
    case ReprKind::disparity: return 1.0 / x;
    case ReprKind::scaled_disparity: return 1.0 / (cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * x);
    case ReprKind::softplus: return x > kSoftplusLinear ? x : std::log1p(std::exp(x));
  }
  return 0.0;
}

double decode_derivative(double x, const ReprConfig& cfg) {
  switch (cfg.kind) {
    case ReprKind::disparity: return -1.0 / (x * x);
    case ReprKind::scaled_disparity: {
      const double s = cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * x;
      return -(cfg.sigma_max - cfg.sigma_min) / (s * s);
    }
    case ReprKind::softplus: return 1.0 / (1.0 + std::exp(-x));
  }
  return 0.0;
}

double encode_value(double depth, const ReprConfig& cfg) {
  switch (cfg.kind) {
    case ReprKind::disparity: return 1.0 / depth;
    case ReprKind::scaled_disparity: return (1.0 / depth - cfg.sigma_min) / (cfg.sigma_max - cfg.sigma_min);
    case ReprKind::softplus: return depth > kSoftplusLinear ? depth : std::log(std::expm1(depth));
  }
  return 0.0;
}

DecodedDepth decode(const Grid<double>& x, const ReprConfig& cfg, Exec exec) {
  if (cfg.kind == ReprKind::scaled_disparity) cfg.validate();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = x[k];
    const bool ok = std::isfinite(v) && (cfg.kind != ReprKind::disparity || v > 0.0) &&
                    (cfg.kind != ReprKind::scaled_disparity || (v >= 0.0 && v <= 1.0));
    if (!ok) {
      throw InvalidInput("decode(" + std::string(to_string(cfg.kind)) + "): invalid value " + std::to_string(v) +
                         " at pixel (" + std::to_string(k / x.width) + ", " + std::to_string(k % x.width) + ")");
    }
  }
  DecodedDepth out{DepthMap(x.height, x.width), Grid<double>(x.height, x.width)};
  for_rows(x.height, exec, [&](int i) {
    for (int j = 0; j < x.width; ++j) {
      const std::size_t k = x.index(i, j);
      out.depth[k] = decode_value(x[k], cfg);
      out.d_depth[k] = decode_derivative(x[k], cfg);
    }
  });
  return out;
}

bool uses_variance_regularizer(ReprKind kind) { return kind != ReprKind::scaled_disparity; }

VarianceLoss variance_regularizer(const DepthMap& depth, const Mask* valid, double weight) {
  if (valid) require_same_shape(depth, *valid, "variance_regularizer");
  VarianceLoss out;
  out.grad = Grid<double>(depth.height, depth.width, 0.0);
  std::size_t n = 0;
  double mean = 0.0;
  for (std::size_t k = 0; k < depth.size(); ++k) {
    if (valid && !(*valid)[k]) continue;
    mean += depth[k];
    ++n;
  }
  if (n < 2) throw InvalidInput("variance_regularizer: need at least 2 valid pixels");
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t k = 0; k < depth.size(); ++k) {
    if (valid && !(*valid)[k]) continue;
    const double e = depth[k] - mean;
    var += e * e;
  }
  var /= static_cast<double>(n);
  out.variance = var;
  if (var < kVarianceEps) {
    out.loss = weight / kVarianceEps;
    out.collapsed = true;
    return out;
  }
  out.loss = weight / var;
  const double scale = -weight / (var * var) * 2.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < depth.size(); ++k) {
    if (valid && !(*valid)[k]) continue;
    out.grad[k] = scale * (depth[k] - mean);
  }
  return out;
}

}  // namespace photocon
