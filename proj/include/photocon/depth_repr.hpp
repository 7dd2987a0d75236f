#pragma once

#include <string_view>

#include "photocon/grid.hpp"
#include "photocon/parallel.hpp"

namespace photocon {

enum class ReprKind { disparity, scaled_disparity, softplus };

std::string_view to_string(ReprKind kind);
ReprKind parse_repr_kind(std::string_view name);

struct ReprConfig {
  ReprKind kind = ReprKind::softplus;
  /// Disparity bounds in 1/m, used only by scaled_disparity.
  double sigma_min = 0.01;
  double sigma_max = 10.0;

  void validate() const;
  /// Scaled disparity covering the depth range [min_depth, max_depth].
  static ReprConfig scaled(double min_depth, double max_depth);
};

/// Decoded depth and the elementwise derivative dd/dx.
struct DecodedDepth {
  DepthMap depth;
  Grid<double> d_depth;
};

/// disparity: d = 1/x; scaled: d = 1/(s_min + (s_max - s_min) x); softplus: d = ln(1 + e^x).
DecodedDepth decode(const Grid<double>& x, const ReprConfig& cfg, Exec exec = default_exec());

double decode_value(double x, const ReprConfig& cfg);
double decode_derivative(double x, const ReprConfig& cfg);
/// Inverse of decode_value; used to initialize parameters from a target depth.
double encode_value(double depth, const ReprConfig& cfg);

inline constexpr double kVarianceLossWeight = 1e-6;
inline constexpr double kVarianceEps = 1e-12;

/// The variance loss is part of the disparity and softplus objectives only.
bool uses_variance_regularizer(ReprKind kind);

struct VarianceLoss {
  double loss = 0.0;
  Grid<double> grad;       ///< dL/dd
  bool collapsed = false;  ///< Var(d) < kVarianceEps: loss capped, gradient zeroed
  double variance = 0.0;
};

/// L = weight / Var(d) with population variance over valid pixels.
VarianceLoss variance_regularizer(const DepthMap& depth, const Mask* valid = nullptr,
                                  double weight = kVarianceLossWeight);

}  // namespace photocon
