#pragma once

#include "photocon/grid.hpp"
#include "photocon/parallel.hpp"

namespace photocon {

/// Minimum camera-frame depth (meters) for a projected point to count as valid.
inline constexpr double kProjectionMinDepth = 1e-6;

/// Pinhole intrinsics shared by every frame.
struct CameraModel {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws InvalidInput unless fx, fy > 0 and the principal point lies inside the image.
  void validate() const;

  /// Camera for an image downsampled by an integer box factor (pixel centers re-mapped).
  [[nodiscard]] CameraModel downsampled(int factor) const;

  /// Intrinsics centered on an image of the given size.
  static CameraModel centered(int width, int height, double focal);
};

/// Rigid motion mapping target-camera coordinates to source-camera coordinates:
/// p_src = R(r) p_tgt + t. Rotation is an axis-angle vector.
struct PoseSE3 {
  Vec3 r = Vec3::Zero();
  Vec3 t = Vec3::Zero();

  [[nodiscard]] Mat3 rotation() const;
  [[nodiscard]] Vec3 apply(const Vec3& p) const;
  static PoseSE3 identity() { return {}; }
};

/// `first` then `second`.
PoseSE3 compose(const PoseSE3& second, const PoseSE3& first);
PoseSE3 inverse(const PoseSE3& pose);

Mat3 skew(const Vec3& v);
/// Rodrigues' formula.
Mat3 rodrigues(const Vec3& r);
/// Inverse of rodrigues with ||r|| <= pi.
Vec3 rotation_log(const Mat3& rotation);
/// Right Jacobian of SO(3): R(r + d) ~ R(r) Exp(J_r(r) d).
Mat3 right_jacobian(const Vec3& r);
/// d(R(r) p)/dr.
Mat3 rotated_point_jacobian(const Vec3& r, const Vec3& p);

struct PointCloud {
  Grid<Vec3> points;
  Mask valid;
};

/// Projected pixel coordinates (u along columns, v along rows) and camera depth.
struct PixelGrid {
  Grid<double> u;
  Grid<double> v;
  Grid<double> z;
  Mask valid;
};

/// Point at pixel (i, j) is ((j - cx)/fx * d, (i - cy)/fy * d, d).
/// `valid`, when given, selects the pixels that must carry positive depth.
PointCloud backproject(const DepthMap& depth, const CameraModel& cam, const Mask* valid = nullptr,
                       Exec exec = default_exec());

/// p' = R(r) p + t + motion(i, j).
PointCloud transform(const PointCloud& points, const PoseSE3& pose, const MotionMap* motion = nullptr,
                     Exec exec = default_exec());

/// Pixels with z <= kProjectionMinDepth are flagged invalid; this is data, not failure.
PixelGrid project(const PointCloud& points, const CameraModel& cam, Exec exec = default_exec());

struct PoseJacobians {
  Grid<Mat3> d_rotation;                            ///< dp'/dr per point
  Mat3 d_translation = Mat3::Identity();            ///< dp'/dt
  Mat3 d_motion = Mat3::Identity();                 ///< dp'/dT_motion at the owning pixel
};

PoseJacobians pose_jacobians(const PointCloud& points, const PoseSE3& pose, Exec exec = default_exec());

}  // namespace photocon
