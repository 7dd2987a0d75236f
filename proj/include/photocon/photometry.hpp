#pragma once

#include "photocon/grid.hpp"
#include "photocon/parallel.hpp"

namespace photocon {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
/// Weight of the SSIM half of pe; the L1 half gets 1 - alpha.
inline constexpr double kPeAlpha = 0.85;

/// Affine intensity model I' = a I + b.
struct BrightnessParams {
  double a = 1.0;
  double b = 0.0;
};

struct BrightnessResult {
  Image image;
  Image d_gain;         ///< dI'/da = I
  double d_bias = 1.0;  ///< dI'/db
};

BrightnessResult brightness_transform(const Image& image, const BrightnessParams& params, Exec exec = default_exec());

/// 3x3 mean filter with edge-replicate padding.
Grid<double> box3(const Grid<double>& in, Exec exec = default_exec());

/// Per-pixel SSIM plus its partials with respect to the raw window moments
/// E[a], E[b], E[a^2], E[b^2], E[ab]; the partials drive the backward pass.
struct SsimMap {
  Grid<double> value;
  Grid<double> d_mean_a, d_mean_b, d_sq_a, d_sq_b, d_cross;
};

SsimMap ssim_full(const Image& a, const Image& b, Exec exec = default_exec());

/// Per-pixel SSIM over 3x3 windows; every pixel is valid.
ErrorMap ssim(const Image& a, const Image& b, Exec exec = default_exec());

/// Accumulates dL/da and dL/db (either may be null) given dL/dSSIM per pixel.
void ssim_backward(const SsimMap& s, const Image& a, const Image& b, const Grid<double>& upstream, Grid<double>* grad_a,
                   Grid<double>* grad_b, Exec exec = default_exec());

struct PeOptions {
  bool use_ssim = true;
  double alpha = kPeAlpha;
  /// Per-pixel multiplier on the SSIM term (depth-error weights); null means 1.
  const Grid<double>* ssim_weight = nullptr;
};

struct PeMap {
  ErrorMap error;
  SsimMap ssim;  ///< empty when use_ssim is false
  PeOptions options;
};

/// alpha/2 (1 - SSIM) + (1 - alpha) |a - b|, or plain |a - b| without SSIM.
PeMap pe_full(const Image& a, const Image& b, const PeOptions& options = {}, Exec exec = default_exec());
ErrorMap pe(const Image& a, const Image& b, const PeOptions& options = {}, Exec exec = default_exec());

/// Accumulates dL/da and dL/db given dL/dpe per pixel.
void pe_backward(const PeMap& m, const Image& a, const Image& b, const Grid<double>& upstream, Grid<double>* grad_a,
                 Grid<double>* grad_b, Exec exec = default_exec());

/// Depth-error weights w = s2 / (s2 + (d_recon - d_pred)^2) with s2 the mean squared
/// error over jointly valid pixels. Pixels outside the valid set get weight 1, and so
/// does every pixel when s2 = 0.
Grid<double> dw_ssim_weights(const DepthMap& d_pred, const DepthMap& d_recon, const Mask* valid = nullptr);

}  // namespace photocon
