#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "photocon/depth_repr.hpp"
#include "photocon/geometry.hpp"
#include "photocon/photometry.hpp"

namespace photocon {

enum class Occlusion { none, min_reprojection, depth_consistency, combined };

std::string_view to_string(Occlusion occ);
Occlusion parse_occlusion(std::string_view name);

struct LossWeights {
  double smooth_depth = 1e-1;
  double smooth_motion = 1.0;
  double motion_sparsity = 1.0;
  double variance = kVarianceLossWeight;
  /// Relative slack in the depth-consistency comparison z' <= z (1 + tol).
  double dc_tolerance = 0.01;
};

/// Declarative selection of the loss handlers; grid IDs R0..C4 resolve to one of these.
struct LossConfig {
  ReprConfig repr;
  bool brightness = false;
  bool ssim = true;
  bool dw_ssim = false;
  Occlusion occlusion = Occlusion::none;
  bool auto_mask = false;
  bool uncertainty = false;
  bool motion_map = false;
  /// Applied only for the disparity and softplus representations.
  bool variance_regularizer = true;
  int warm_up_steps = 200;
  std::string grid_id;
  LossWeights weights;

  /// Throws ConfigError naming the violated rule.
  void validate() const;
  [[nodiscard]] bool uses_mr() const {
    return occlusion == Occlusion::min_reprojection || occlusion == Occlusion::combined;
  }
  [[nodiscard]] bool uses_dc() const {
    return occlusion == Occlusion::depth_consistency || occlusion == Occlusion::combined;
  }
  [[nodiscard]] bool variance_active() const { return variance_regularizer && uses_variance_regularizer(repr.kind); }
  [[nodiscard]] std::string describe() const;
};

// ---------------------------------------------------------------------------
// Individual handlers

struct MinReprojection {
  ErrorMap error;
  Grid<int> argmin;  ///< -1 where no map is valid
};

/// Per-pixel minimum over maps; invalid entries do not compete. Ties go to the lowest index.
MinReprojection min_reprojection(std::span<const ErrorMap> errors);

/// mu = 1 where the warped error is valid and strictly below the raw (unwarped) error.
Mask auto_mask(const ErrorMap& warped, const ErrorMap& raw);

/// Computes min_t' pe(I_t, I_t'->t) and min_t' pe(I_t, I_t') and compares them.
Mask auto_mask(const Image& target, std::span<const Image> warped, std::span<const Mask> warped_valid,
               std::span<const Image> raw_sources, const PeOptions& options = {});

struct ScalarLoss {
  double loss = 0.0;
  Grid<double> grad;
};

struct UncertaintyLoss {
  double loss = 0.0;
  Grid<double> d_error;
  Grid<double> d_log_sigma;
};

/// mean over valid pixels of err / Sigma + log Sigma with Sigma = exp(log_sigma).
UncertaintyLoss uncertainty_weighted(const ErrorMap& err, const Grid<double>& log_sigma);

struct SparsityLoss {
  double loss = 0.0;
  MotionMap grad;
  std::array<double, 3> means{};       ///< <|T_i|> per axis
  std::array<bool, 3> degenerate{};    ///< axis mean below 1e-12, contributes 0
};

/// L_1/2 = 2 sum_i <|T_i|> mean_p sqrt(1 + |T_i|/<|T_i|>); the means are held constant in
/// the gradient. `frozen_means`, when given, replaces the computed means.
SparsityLoss motion_sparsity(const MotionMap& motion, const std::array<double, 3>* frozen_means = nullptr);

/// Keeps err where z_transformed <= z_target (1 + tolerance); other pixels become invalid.
/// Pixels where either depth is unavailable keep their error.
ErrorMap depth_consistency_gate(const DepthMap& z_transformed, const DepthMap& z_target, const ErrorMap& err,
                                double tolerance = 0.0);

/// mean |du f| exp(-|du I|) + mean |dv f| exp(-|dv I|), forward differences, each mean
/// over its own difference count.
ScalarLoss smoothness(const Grid<double>& field, const Image& image);
ScalarLoss smoothness(const MotionMap& field, const Image& image);
/// Smoothness of d / mean(d), with the gradient taken through the mean.
ScalarLoss normalized_depth_smoothness(const DepthMap& depth, const Image& image);

// ---------------------------------------------------------------------------
// Composition

/// Target frame plus source frames at time offsets `offsets` (e.g. -1, +1).
struct FrameSet {
  CameraModel cam;
  Image target;
  std::vector<Image> sources;
  std::vector<int> offsets;
  /// min_t' pe(I_t, I_t'), filled by prepare(); needed by auto-masking.
  ErrorMap raw_min;

  void prepare(Exec exec = default_exec());
  [[nodiscard]] int source_count() const { return static_cast<int>(sources.size()); }
};

enum class Group { depth, pose, motion, log_sigma, gain, bias };
inline constexpr std::array<Group, 6> kAllGroups{Group::depth, Group::pose, Group::motion,
                                                Group::log_sigma, Group::gain, Group::bias};
std::string_view to_string(Group g);
Group parse_group(std::string_view name);

/// Every optimized quantity as flat vectors. The motion map is shared by all sources;
/// source s sees offsets[s] * T. Also used as the gradient container.
struct ParamSet {
  int height = 0;
  int width = 0;
  int sources = 0;
  std::array<std::vector<double>, 6> values;

  ParamSet() = default;
  ParamSet(int h, int w, int n_sources);

  std::vector<double>& group(Group g) { return values[static_cast<std::size_t>(g)]; }
  [[nodiscard]] const std::vector<double>& group(Group g) const { return values[static_cast<std::size_t>(g)]; }

  [[nodiscard]] PoseSE3 pose(int s) const;
  void set_pose(int s, const PoseSE3& p);
  [[nodiscard]] Grid<double> depth_param() const;
  [[nodiscard]] MotionMap motion_map() const;
  [[nodiscard]] Grid<double> log_sigma() const;
  [[nodiscard]] BrightnessParams brightness(int s) const;

  /// Zero-valued container of the same shape.
  [[nodiscard]] ParamSet zeros_like() const;
};

/// Quantities that the loss treats as constants during differentiation. Passing a
/// previously captured state back in freezes them, which is what finite-difference
/// checks of the analytic gradient need.
struct DetachedState {
  bool filled = false;
  std::vector<Grid<double>> dw_weights;          ///< per source
  std::vector<Mask> dc_gates;                    ///< per direction x source
  std::vector<Mask> auto_masks;                  ///< per direction
  std::array<double, 3> motion_means{};
};

struct ComposeOptions {
  bool want_gradients = true;
  bool motion_active = true;
  bool auto_mask_active = true;
  bool want_signature = false;
  const DetachedState* frozen = nullptr;
  DetachedState* detached_out = nullptr;
  Exec exec = default_exec();
};

struct LossRecord {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  ParamSet grad;
  bool variance_collapsed = false;
  std::array<bool, 3> motion_axis_degenerate{};
  /// Hash of every discrete decision (validity, bilinear cells, argmin, |.| signs).
  std::uint64_t signature = 0;
  /// Pixels that contributed to the photometric term in the first direction.
  std::size_t photometric_pixels = 0;

  [[nodiscard]] double term(std::string_view name) const;
};

/// Total loss and gradients for one target frame against its sources.
LossRecord compose(const LossConfig& cfg, const FrameSet& frames, const ParamSet& params,
                   const ComposeOptions& options = {});

/// Per-source error maps and masks as seen by the photometric handlers; exposed for analysis.
struct PhotometricBreakdown {
  std::vector<ErrorMap> per_source;      ///< pe with warp validity
  std::vector<Mask> dc_excluded;         ///< per source, pixels dropped by either DC direction
  ErrorMap reduced;                      ///< min or mean over sources
  Mask auto_mask;                        ///< empty unless auto-masking is enabled
};

PhotometricBreakdown photometric_breakdown(const LossConfig& cfg, const FrameSet& frames, const ParamSet& params,
                                           bool motion_active = true, Exec exec = default_exec());

}  // namespace photocon
