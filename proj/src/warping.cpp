#include "photocon/warping.hpp"

#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

namespace photocon {

BilinearSample sample_bilinear(const Image& image, double u, double v) {
  BilinearSample s;
  const int w = image.width;
  const int h = image.height;
  if (!(u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1)) return s;
  int u0 = static_cast<int>(std::floor(u));
  int v0 = static_cast<int>(std::floor(v));
  if (u0 > w - 2) u0 = std::max(w - 2, 0);
  if (v0 > h - 2) v0 = std::max(h - 2, 0);
  const double fu = u - u0;
  const double fv = v - v0;
  const int u1 = std::min(u0 + 1, w - 1);
  const int v1 = std::min(v0 + 1, h - 1);
  const double i00 = image(v0, u0), i01 = image(v0, u1), i10 = image(v1, u0), i11 = image(v1, u1);
  s.value = (1 - fu) * (1 - fv) * i00 + fu * (1 - fv) * i01 + (1 - fu) * fv * i10 + fu * fv * i11;
  s.du = (1 - fv) * (i01 - i00) + fv * (i11 - i10);
  s.dv = (1 - fu) * (i10 - i00) + fu * (i11 - i01);
  s.inside = true;
  return s;
}

WarpResult synthesize(const Image& source, const DepthMap& target_depth, const PoseSE3& pose, const MotionMap* motion,
                      const CameraModel& cam, Exec exec) {
  require_same_shape(source, target_depth, "synthesize");
  if (motion) require_same_shape(target_depth, *motion, "synthesize motion");
  const int h = target_depth.height;
  const int w = target_depth.width;
  WarpResult r;
  r.image = Image(h, w, 0.0);
  r.valid = Mask(h, w, 0);
  r.u = Grid<double>(h, w, 0.0);
  r.v = Grid<double>(h, w, 0.0);
  r.grad_u = Grid<double>(h, w, 0.0);
  r.grad_v = Grid<double>(h, w, 0.0);
  r.source_points = Grid<Vec3>(h, w, Vec3::Zero());
  r.warped_points = Grid<Vec3>(h, w, Vec3::Zero());
  const Mat3 rot = pose.rotation();
  for_rows(h, exec, [&](int i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t k = target_depth.index(i, j);
      const double d = target_depth[k];
      if (!(d > 0.0)) continue;
      const Vec3 p((j - cam.cx) / cam.fx * d, (i - cam.cy) / cam.fy * d, d);
      Vec3 q = rot * p + pose.t;
      if (motion) q += (*motion)[k];
      r.source_points[k] = p;
      r.warped_points[k] = q;
      if (!(q.z() > kProjectionMinDepth)) continue;
      const double u = cam.fx * q.x() / q.z() + cam.cx;
      const double v = cam.fy * q.y() / q.z() + cam.cy;
      r.u[k] = u;
      r.v[k] = v;
      const BilinearSample s = sample_bilinear(source, u, v);
      if (!s.inside) continue;
      r.image[k] = s.value;
      r.grad_u[k] = s.du;
      r.grad_v[k] = s.dv;
      r.valid[k] = 1;
    }
  });
  return r;
}

WarpGradients synthesize_backward(const WarpResult& warp, const PoseSE3& pose, const CameraModel& cam,
                                  const Grid<double>& upstream, Exec exec) {
  const int h = warp.image.height;
  const int w = warp.image.width;
  WarpGradients g;
  g.d_depth = Grid<double>(h, w, 0.0);
  g.d_motion = MotionMap(h, w, Vec3::Zero());
  const Mat3 rot = pose.rotation();
  const Mat3 rot_t = rot.transpose();
  // Row partials: [translation(3), sum of (R^T g) x P (3)].
  std::vector<std::array<double, 6>> partial(static_cast<std::size_t>(h), std::array<double, 6>{});
  for_rows(h, exec, [&](int i) {
    std::array<double, 6> acc{};
    for (int j = 0; j < w; ++j) {
      const std::size_t k = warp.image.index(i, j);
      if (!warp.valid[k]) continue;
      const double up = upstream[k];
      if (up == 0.0) continue;
      const Vec3& q = warp.warped_points[k];
      const double iz = 1.0 / q.z();
      const double gu = up * warp.grad_u[k];
      const double gv = up * warp.grad_v[k];
      // dL/dq via u = fx x/z + cx, v = fy y/z + cy.
      const Vec3 dq(gu * cam.fx * iz, gv * cam.fy * iz, -(gu * cam.fx * q.x() + gv * cam.fy * q.y()) * iz * iz);
      const Vec3& p = warp.source_points[k];
      const Vec3 ray = p / p.z();
      const Vec3 wr = rot_t * dq;
      g.d_depth[k] = wr.dot(ray);
      g.d_motion[k] = dq;
      const Vec3 c = wr.cross(p);
      acc[0] += dq.x();
      acc[1] += dq.y();
      acc[2] += dq.z();
      acc[3] += c.x();
      acc[4] += c.y();
      acc[5] += c.z();
    }
    partial[static_cast<std::size_t>(i)] = acc;
  });
  Vec3 cross_sum = Vec3::Zero();
  for (const auto& a : partial) {
    g.d_translation += Vec3(a[0], a[1], a[2]);
    cross_sum += Vec3(a[3], a[4], a[5]);
  }
  // d(R p)/dr = -R [p]x J_r  =>  g^T d(Rp)/dr = -(R^T g x p)^T J_r.
  g.d_rotation = -(right_jacobian(pose.r).transpose() * cross_sum);
  return g;
}

ReprojectedDepth reproject_depth(const DepthMap& source_depth, const DepthMap& target_depth, const PoseSE3& pose,
                                 const MotionMap* motion, const CameraModel& cam, Exec exec) {
  require_same_shape(source_depth, target_depth, "reproject_depth");
  if (motion) require_same_shape(target_depth, *motion, "reproject_depth motion");
  const int h = target_depth.height;
  const int w = target_depth.width;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ReprojectedDepth r{DepthMap(h, w, nan), target_depth, DepthMap(h, w, nan), DepthMap(h, w, nan), Mask(h, w, 0)};
  const Mat3 rot = pose.rotation();
  const Mat3 rot_t = rot.transpose();
  auto usable = [](double z) { return std::isfinite(z) && z > 0.0; };
  for_rows(h, exec, [&](int i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t k = target_depth.index(i, j);
      const double d = target_depth[k];
      if (!(d > 0.0)) continue;
      const Vec3 p((j - cam.cx) / cam.fx * d, (i - cam.cy) / cam.fy * d, d);
      Vec3 offset = pose.t;
      if (motion) offset += (*motion)[k];
      const Vec3 q = rot * p + offset;
      if (!(q.z() > kProjectionMinDepth)) continue;
      const double u = cam.fx * q.x() / q.z() + cam.cx;
      const double v = cam.fy * q.y() / q.z() + cam.cy;
      if (!(u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1)) continue;
      int u0 = std::min(static_cast<int>(std::floor(u)), std::max(w - 2, 0));
      int v0 = std::min(static_cast<int>(std::floor(v)), std::max(h - 2, 0));
      const int u1 = std::min(u0 + 1, w - 1);
      const int v1 = std::min(v0 + 1, h - 1);
      if (!usable(source_depth(v0, u0)) || !usable(source_depth(v0, u1)) || !usable(source_depth(v1, u0)) ||
          !usable(source_depth(v1, u1))) {
        continue;
      }
      const double s = sample_bilinear(source_depth, u, v).value;
      const Vec3 src_point((u - cam.cx) / cam.fx * s, (v - cam.cy) / cam.fy * s, s);
      const Vec3 back = rot_t * (src_point - offset);
      r.transformed[k] = back.z();
      r.target_in_source[k] = q.z();
      r.source_sampled[k] = s;
      r.valid[k] = 1;
    }
  });
  return r;
}

DepthMap splat_depth(const DepthMap& target_depth, const PoseSE3& pose, const MotionMap* motion,
                     const CameraModel& cam) {
  const int h = target_depth.height;
  const int w = target_depth.width;
  DepthMap out(h, w, 0.0);
  const Mat3 rot = pose.rotation();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t k = target_depth.index(i, j);
      const double d = target_depth[k];
      if (!(d > 0.0)) continue;
      const Vec3 p((j - cam.cx) / cam.fx * d, (i - cam.cy) / cam.fy * d, d);
      Vec3 q = rot * p + pose.t;
      if (motion) q += (*motion)[k];
      if (!(q.z() > kProjectionMinDepth)) continue;
      const double u = cam.fx * q.x() / q.z() + cam.cx;
      const double v = cam.fy * q.y() / q.z() + cam.cy;
      const int u0 = static_cast<int>(std::floor(u));
      const int v0 = static_cast<int>(std::floor(v));
      for (int vi = v0; vi <= v0 + 1; ++vi) {
        for (int uj = u0; uj <= u0 + 1; ++uj) {
          if (vi < 0 || vi >= h || uj < 0 || uj >= w) continue;
          double& slot = out(vi, uj);
          if (slot == 0.0 || q.z() < slot) slot = q.z();
        }
      }
    }
  }
  return out;
}

}  // namespace photocon
