#include "photocon/geometry.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

namespace photocon {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidInput("camera: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw InvalidInput("camera: principal point outside the image");
  }
}

CameraModel CameraModel::downsampled(int factor) const {
  if (factor < 1 || width % factor != 0 || height % factor != 0) {
    throw InvalidInput("camera: downsampling factor must divide the image size");
  }
  const double s = factor;
  CameraModel c;
  c.fx = fx / s;
  c.fy = fy / s;
  c.cx = (cx + 0.5) / s - 0.5;
  c.cy = (cy + 0.5) / s - 0.5;
  c.width = width / factor;
  c.height = height / factor;
  return c;
}

CameraModel CameraModel::centered(int width, int height, double focal) {
  CameraModel c;
  c.fx = focal;
  c.fy = focal;
  c.cx = (width - 1) / 2.0;
  c.cy = (height - 1) / 2.0;
  c.width = width;
  c.height = height;
  return c;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

namespace {

// sin(x)/x, (1 - cos x)/x^2, (x - sin x)/x^3 with series near zero.
struct RotationCoeffs {
  double a, b, c;
};

RotationCoeffs rotation_coeffs(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-4) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0};
  }
  return {std::sin(theta) / theta, (1.0 - std::cos(theta)) / t2, (theta - std::sin(theta)) / (t2 * theta)};
}

}  // namespace

Mat3 rodrigues(const Vec3& r) {
  const auto k = rotation_coeffs(r.norm());
  const Mat3 s = skew(r);
  return Mat3::Identity() + k.a * s + k.b * s * s;
}

Vec3 rotation_log(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle > std::numbers::pi) {
    angle = 2.0 * std::numbers::pi - angle;
    axis = -axis;
  }
  return axis * angle;
}

Mat3 right_jacobian(const Vec3& r) {
  const auto k = rotation_coeffs(r.norm());
  const Mat3 s = skew(r);
  return Mat3::Identity() - k.b * s + k.c * s * s;
}

Mat3 rotated_point_jacobian(const Vec3& r, const Vec3& p) {
  return -rodrigues(r) * skew(p) * right_jacobian(r);
}

Mat3 PoseSE3::rotation() const { return rodrigues(r); }

Vec3 PoseSE3::apply(const Vec3& p) const { return rotation() * p + t; }

PoseSE3 compose(const PoseSE3& second, const PoseSE3& first) {
  const Mat3 r2 = second.rotation();
  PoseSE3 out;
  out.r = rotation_log(r2 * first.rotation());
  out.t = r2 * first.t + second.t;
  return out;
}

PoseSE3 inverse(const PoseSE3& pose) {
  const Mat3 rt = pose.rotation().transpose();
  PoseSE3 out;
  out.r = -pose.r;
  out.t = -(rt * pose.t);
  return out;
}

PointCloud backproject(const DepthMap& depth, const CameraModel& cam, const Mask* valid, Exec exec) {
  if (valid) require_same_shape(depth, *valid, "backproject");
  PointCloud pc{Grid<Vec3>(depth.height, depth.width, Vec3::Zero()), Mask(depth.height, depth.width, 0)};
  for (std::size_t k = 0; k < depth.size(); ++k) {
    const bool want = valid ? (*valid)[k] != 0 : true;
    if (want && !(depth[k] > 0.0)) {
      const int i = static_cast<int>(k / depth.width);
      const int j = static_cast<int>(k % depth.width);
      throw InvalidInput("backproject: non-positive depth " + std::to_string(depth[k]) + " at pixel (" +
                         std::to_string(i) + ", " + std::to_string(j) + ")");
    }
  }
  for_rows(depth.height, exec, [&](int i) {
    for (int j = 0; j < depth.width; ++j) {
      const std::size_t k = depth.index(i, j);
      if (valid && !(*valid)[k]) continue;
      const double d = depth[k];
      pc.points[k] = Vec3((j - cam.cx) / cam.fx * d, (i - cam.cy) / cam.fy * d, d);
      pc.valid[k] = 1;
    }
  });
  return pc;
}

PointCloud transform(const PointCloud& points, const PoseSE3& pose, const MotionMap* motion, Exec exec) {
  if (motion) require_same_shape(points.points, *motion, "transform");
  const Mat3 rot = pose.rotation();
  PointCloud out{Grid<Vec3>(points.points.height, points.points.width, Vec3::Zero()), points.valid};
  for_rows(points.points.height, exec, [&](int i) {
    for (int j = 0; j < points.points.width; ++j) {
      const std::size_t k = points.points.index(i, j);
      Vec3 p = rot * points.points[k] + pose.t;
      if (motion) p += (*motion)[k];
      out.points[k] = p;
    }
  });
  return out;
}

PixelGrid project(const PointCloud& points, const CameraModel& cam, Exec exec) {
  const int h = points.points.height;
  const int w = points.points.width;
  PixelGrid g{Grid<double>(h, w, 0.0), Grid<double>(h, w, 0.0), Grid<double>(h, w, 0.0), Mask(h, w, 0)};
  for_rows(h, exec, [&](int i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t k = g.u.index(i, j);
      const Vec3& p = points.points[k];
      g.z[k] = p.z();
      if (!points.valid[k] || !(p.z() > kProjectionMinDepth)) continue;
      g.u[k] = cam.fx * p.x() / p.z() + cam.cx;
      g.v[k] = cam.fy * p.y() / p.z() + cam.cy;
      g.valid[k] = 1;
    }
  });
  return g;
}

PoseJacobians pose_jacobians(const PointCloud& points, const PoseSE3& pose, Exec exec) {
  PoseJacobians jac;
  jac.d_rotation = Grid<Mat3>(points.points.height, points.points.width, Mat3::Zero());
  const Mat3 rot = pose.rotation();
  const Mat3 jr = right_jacobian(pose.r);
  for_rows(points.points.height, exec, [&](int i) {
    for (int j = 0; j < points.points.width; ++j) {
      const std::size_t k = points.points.index(i, j);
      jac.d_rotation[k] = -rot * skew(points.points[k]) * jr;
    }
  });
  return jac;
}

}  // namespace photocon
