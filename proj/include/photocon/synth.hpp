#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "photocon/losses.hpp"

namespace photocon {

class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fronto-parallel rectangle at z = depth (target camera frame, meters).
struct PlaneSpec {
  double depth = 20.0;
  double x_min = -100.0, x_max = 100.0;
  double y_min = -100.0, y_max = 100.0;
  double cell = 1.0;                ///< coarsest texture octave, meters
  Vec3 velocity = Vec3::Zero();     ///< meters per frame
  double flat = -1.0;               ///< >= 0: constant intensity instead of texture
};

/// Axis-aligned box in the target camera frame.
struct BoxSpec {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  double cell = 0.5;
  Vec3 velocity = Vec3::Zero();
  double flat = -1.0;
};

struct SceneSpec {
  std::string name = "custom";
  int width = 320;
  int height = 96;
  double focal = 100.0;
  /// Pose of the frame at offset +1 relative to the target (p_src = R p_tgt + t);
  /// offset k uses this increment k times, negative offsets its inverse.
  PoseSE3 step_pose;
  std::vector<int> offsets{-1, 1};
  std::vector<PlaneSpec> planes;
  std::vector<BoxSpec> boxes;
  /// Applied to every non-target frame: I' = a I + b.
  BrightnessParams drift;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] CameraModel camera() const;
  [[nodiscard]] PoseSE3 pose_at(int offset) const;
};

struct SourceTruth {
  int offset = 0;
  PoseSE3 pose;
  MotionMap motion;     ///< exact per-pixel motion for this source (target grid)
  Grid<double> u, v;    ///< where each target pixel's surface point lands in the source
  Grid<double> z;       ///< its depth in the source camera
  Mask out_of_view;     ///< projects outside [0, W-1] x [0, H-1] or behind the camera
  Mask occluded;        ///< in view but hidden by a nearer surface
  Mask visible;         ///< in view and not occluded
};

struct GroundTruth {
  DepthMap depth;                     ///< target depth
  std::vector<DepthMap> source_depth;
  Mask dynamic;                       ///< target pixels on moving surfaces
  std::vector<SourceTruth> sources;
  /// Shared map T with source s seeing offset * T; exact whenever poses carry no rotation.
  MotionMap motion;
};

struct RenderedScene {
  SceneSpec spec;
  FrameSet frames;  ///< prepared
  GroundTruth gt;
};

/// Ray-casts target and source frames with procedural value-noise textures.
RenderedScene render(const SceneSpec& spec);

struct VerifyReport {
  /// max |warp(gt) - bilinear(source, gt correspondence)| on jointly visible pixels
  double max_residual = 0.0;
  /// max |warp(gt) - I_t| on the same pixels (interpolation error of the point-sampled render)
  double max_photometric = 0.0;
  std::size_t visible_pixels = 0;
  /// Per-source |warp(gt) - reference|, zero where not jointly visible.
  std::vector<Grid<double>> residual;
};

/// Re-synthesizes the target from every source with gt depth, pose and (optionally) motion.
VerifyReport verify(const RenderedScene& scene, bool use_motion = true);

/// Names of the built-in presets.
const std::vector<std::string>& preset_names();
/// Throws InvalidInput listing the valid names.
SceneSpec preset(const std::string& name, std::uint64_t seed = 0);

/// Line-based scene description; see README for the grammar.
SceneSpec parse_scene(std::istream& is);
void write_scene(const SceneSpec& spec, std::ostream& os);

}  // namespace photocon
