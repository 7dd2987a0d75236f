#pragma once

#include "photocon/geometry.hpp"

namespace photocon {

/// Inverse-warp view synthesis: I_{s->t}(p) = I_s(project(R backproject(p) + t + motion(p))).
struct WarpResult {
  Image image;              ///< reconstructed target, zero where invalid
  Mask valid;               ///< sample in [0, W-1] x [0, H-1] and positive projected depth
  Grid<double> u, v;        ///< sample coordinates in the source image
  Grid<double> grad_u;      ///< dI_s/du at the sample
  Grid<double> grad_v;      ///< dI_s/dv at the sample
  Grid<Vec3> source_points; ///< backprojected target points before the rigid transform
  Grid<Vec3> warped_points; ///< points in the source camera frame
};

struct WarpGradients {
  Grid<double> d_depth;     ///< dL/dd_tgt
  Vec3 d_rotation = Vec3::Zero();
  Vec3 d_translation = Vec3::Zero();
  MotionMap d_motion;       ///< dL/dmotion
};

/// Bilinear lookup with zero padding; `inside` is false outside [0, W-1] x [0, H-1].
struct BilinearSample {
  double value = 0.0;
  double du = 0.0;
  double dv = 0.0;
  bool inside = false;
};
BilinearSample sample_bilinear(const Image& image, double u, double v);

WarpResult synthesize(const Image& source, const DepthMap& target_depth, const PoseSE3& pose, const MotionMap* motion,
                      const CameraModel& cam, Exec exec = default_exec());

/// Chain rule from dL/dI_{s->t} (per target pixel) to target depth, pose and motion.
WarpGradients synthesize_backward(const WarpResult& warp, const PoseSE3& pose, const CameraModel& cam,
                                  const Grid<double>& upstream, Exec exec = default_exec());

/// Depth pairs for the depth-consistency test, on the target grid.
struct ReprojectedDepth {
  DepthMap transformed;       ///< z': source surface at the warped location, as target-frame depth
  DepthMap target;            ///< target's own depth (reference for `transformed`)
  DepthMap target_in_source;  ///< depth of the target point in the source camera
  DepthMap source_sampled;    ///< source depth bilinearly sampled at the warped location
  Mask valid;                 ///< warped location in view and all four source taps usable
};

/// Uses the same inverse-warp lookup as synthesize, so no scatter is involved. Source
/// depth entries that are non-positive or non-finite are treated as holes.
ReprojectedDepth reproject_depth(const DepthMap& source_depth, const DepthMap& target_depth, const PoseSE3& pose,
                                 const MotionMap* motion, const CameraModel& cam, Exec exec = default_exec());

/// Forward z-buffer of the target depth into the source view over each point's four
/// neighbouring pixels. Holes are 0. Not differentiable; used to stand in for a source
/// depth estimate.
DepthMap splat_depth(const DepthMap& target_depth, const PoseSE3& pose, const MotionMap* motion,
                     const CameraModel& cam);

}  // namespace photocon
