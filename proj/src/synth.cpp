#include "photocon/synth.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "photocon/warping.hpp"

namespace photocon {

void SceneSpec::validate() const {
  if (width < 2 || height < 2) throw InvalidSpec("scene '" + name + "': image must be at least 2x2");
  if (!(focal > 0.0)) throw InvalidSpec("scene '" + name + "': focal must be positive");
  if (planes.empty() && boxes.empty()) throw InvalidSpec("scene '" + name + "': empty scene");
  if (offsets.empty()) throw InvalidSpec("scene '" + name + "': need at least one source offset");
  for (int o : offsets) {
    if (o == 0) throw InvalidSpec("scene '" + name + "': offset 0 is the target itself");
  }
  for (const auto& p : planes) {
    if (!(p.depth > 0.0) || !(p.x_min < p.x_max) || !(p.y_min < p.y_max) || !(p.cell > 0.0)) {
      throw InvalidSpec("scene '" + name + "': bad plane");
    }
  }
  for (const auto& b : boxes) {
    if (!(b.lo.array() < b.hi.array()).all() || !(b.cell > 0.0)) throw InvalidSpec("scene '" + name + "': bad box");
  }
  if (!(drift.a > 0.0)) throw InvalidSpec("scene '" + name + "': drift gain must be positive");
}

CameraModel SceneSpec::camera() const { return CameraModel::centered(width, height, focal); }

PoseSE3 SceneSpec::pose_at(int offset) const {
  const PoseSE3 inc = offset >= 0 ? step_pose : inverse(step_pose);
  PoseSE3 p;
  for (int k = 0; k < std::abs(offset); ++k) p = compose(inc, p);
  return p;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t key, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = splitmix(key ^ splitmix(static_cast<std::uint64_t>(ix) ^ splitmix(static_cast<std::uint64_t>(iy) + 0x51ed27ull)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(std::uint64_t key, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double sx = fade(x - fx), sy = fade(y - fy);
  const double a = lattice(key, ix, iy), b = lattice(key, ix + 1, iy);
  const double c = lattice(key, ix, iy + 1), d = lattice(key, ix + 1, iy + 1);
  return (1 - sy) * ((1 - sx) * a + sx * b) + sy * ((1 - sx) * c + sx * d);
}

// Three octaves, coarsest at `cell` meters; output in [0.1, 0.9].
double texture(std::uint64_t key, double x, double y, double cell) {
  double sum = 0.0, norm = 0.0, amp = 1.0, scale = 1.0 / cell;
  for (int o = 0; o < 3; ++o) {
    sum += amp * value_noise(splitmix(key + static_cast<std::uint64_t>(o)), x * scale, y * scale);
    norm += amp;
    amp *= 0.5;
    scale *= 2.0;
  }
  return 0.1 + 0.8 * (sum / norm);
}

struct Hit {
  double lambda = std::numeric_limits<double>::infinity();
  int surface = -1;
  int face = 0;
  Vec3 local = Vec3::Zero();
};

constexpr double kHitEps = 1e-9;

class Caster {
 public:
  explicit Caster(const SceneSpec& spec) : spec_(spec) {}

  // Nearest surface along o + lambda d at frame offset tau.
  Hit cast(const Vec3& o, const Vec3& d, int tau) const {
    Hit best;
    const int np = static_cast<int>(spec_.planes.size());
    for (int s = 0; s < np; ++s) {
      const auto& p = spec_.planes[static_cast<std::size_t>(s)];
      if (std::abs(d.z()) < 1e-15) continue;
      const Vec3 shift = tau * p.velocity;
      const double lam = (p.depth + shift.z() - o.z()) / d.z();
      if (!(lam > kHitEps) || lam >= best.lambda) continue;
      const Vec3 local = o + lam * d - shift;
      if (local.x() < p.x_min || local.x() > p.x_max || local.y() < p.y_min || local.y() > p.y_max) continue;
      best = {lam, s, 0, local};
    }
    for (int s = 0; s < static_cast<int>(spec_.boxes.size()); ++s) {
      const auto& b = spec_.boxes[static_cast<std::size_t>(s)];
      const Vec3 shift = tau * b.velocity;
      const Vec3 lo = b.lo + shift, hi = b.hi + shift;
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int face = -1;
      bool miss = false;
      for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
          if (o[a] < lo[a] || o[a] > hi[a]) miss = true;
          continue;
        }
        double t1 = (lo[a] - o[a]) / d[a];
        double t2 = (hi[a] - o[a]) / d[a];
        int f = 2 * a;  // entering through the lo face
        if (t1 > t2) {
          std::swap(t1, t2);
          f = 2 * a + 1;
        }
        if (t1 > t_near) {
          t_near = t1;
          face = f;
        }
        t_far = std::min(t_far, t2);
      }
      if (miss || face < 0 || t_near > t_far || !(t_near > kHitEps) || t_near >= best.lambda) continue;
      best = {t_near, np + s, face, o + t_near * d - shift};
    }
    return best;
  }

  double shade(const Hit& h) const {
    const int np = static_cast<int>(spec_.planes.size());
    const std::uint64_t key = splitmix(spec_.seed * 0x100000001b3ull + static_cast<std::uint64_t>(h.surface) * 8 +
                                       static_cast<std::uint64_t>(h.face));
    if (h.surface < np) {
      const auto& p = spec_.planes[static_cast<std::size_t>(h.surface)];
      return p.flat >= 0.0 ? p.flat : texture(key, h.local.x(), h.local.y(), p.cell);
    }
    const auto& b = spec_.boxes[static_cast<std::size_t>(h.surface - np)];
    if (b.flat >= 0.0) return b.flat;
    const int axis = h.face / 2;
    const double c0 = h.local[(axis + 1) % 3];
    const double c1 = h.local[(axis + 2) % 3];
    return texture(key, c0, c1, b.cell);
  }

  Vec3 velocity(int surface) const {
    const int np = static_cast<int>(spec_.planes.size());
    return surface < np ? spec_.planes[static_cast<std::size_t>(surface)].velocity
                        : spec_.boxes[static_cast<std::size_t>(surface - np)].velocity;
  }

 private:
  const SceneSpec& spec_;
};

struct Ray {
  Vec3 origin;
  Vec3 dir;
};

// Ray through continuous pixel (u, v) of the camera at `pose`, in target coordinates.
Ray pixel_ray(const PoseSE3& pose, const CameraModel& cam, double u, double v) {
  const Mat3 rt = pose.rotation().transpose();
  const Vec3 d_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
  return {-(rt * pose.t), rt * d_cam};
}

struct Frame {
  Image image;
  DepthMap depth;
  Grid<Hit> hits;
};

Frame render_frame(const SceneSpec& spec, const Caster& caster, int tau) {
  const CameraModel cam = spec.camera();
  const PoseSE3 pose = spec.pose_at(tau);
  Frame f{Image(spec.height, spec.width), DepthMap(spec.height, spec.width), Grid<Hit>(spec.height, spec.width)};
  for_rows(spec.height, Exec::parallel, [&](int i) {
    for (int j = 0; j < spec.width; ++j) {
      const Ray r = pixel_ray(pose, cam, j, i);
      const Hit h = caster.cast(r.origin, r.dir, tau);
      f.hits(i, j) = h;
      if (h.surface < 0) continue;
      f.depth(i, j) = h.lambda;
      double val = caster.shade(h);
      if (tau != 0) val = spec.drift.a * val + spec.drift.b;
      f.image(i, j) = val;
    }
  });
  for (int i = 0; i < spec.height; ++i) {
    for (int j = 0; j < spec.width; ++j) {
      if (f.hits(i, j).surface < 0) {
        throw InvalidSpec("scene '" + spec.name + "': pixel (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") of frame " + std::to_string(tau) + " hits no surface");
      }
    }
  }
  return f;
}

}  // namespace

RenderedScene render(const SceneSpec& spec) {
  spec.validate();
  const Caster caster(spec);
  const CameraModel cam = spec.camera();
  const int h = spec.height, w = spec.width;
  RenderedScene out;
  out.spec = spec;
  const Frame target = render_frame(spec, caster, 0);
  out.frames.cam = cam;
  out.frames.target = target.image;
  out.frames.offsets = spec.offsets;
  out.gt.depth = target.depth;
  out.gt.dynamic = Mask(h, w, 0);
  out.gt.motion = MotionMap(h, w, Vec3::Zero());
  for (std::size_t k = 0; k < target.hits.size(); ++k) {
    const Vec3 vel = caster.velocity(target.hits[k].surface);
    out.gt.motion[k] = vel;
    out.gt.dynamic[k] = vel.squaredNorm() > 0.0 ? 1 : 0;
  }
  for (int tau : spec.offsets) {
    const Frame src = render_frame(spec, caster, tau);
    out.frames.sources.push_back(src.image);
    out.gt.source_depth.push_back(src.depth);
    SourceTruth st;
    st.offset = tau;
    st.pose = spec.pose_at(tau);
    const Mat3 rot = st.pose.rotation();
    st.motion = MotionMap(h, w, Vec3::Zero());
    st.u = Grid<double>(h, w, 0.0);
    st.v = Grid<double>(h, w, 0.0);
    st.z = Grid<double>(h, w, 0.0);
    st.out_of_view = Mask(h, w, 0);
    st.occluded = Mask(h, w, 0);
    st.visible = Mask(h, w, 0);
    for_rows(h, Exec::parallel, [&](int i) {
      for (int j = 0; j < w; ++j) {
        const std::size_t k = target.hits.index(i, j);
        const Hit& hit = target.hits[k];
        const Vec3 vel = caster.velocity(hit.surface);
        st.motion[k] = tau * (rot * vel);
        const Vec3 world = hit.local + tau * vel;  // surface point at time tau, target coordinates
        const Vec3 q = rot * world + st.pose.t;
        if (!(q.z() > kProjectionMinDepth)) {
          st.out_of_view[k] = 1;
          continue;
        }
        const double u = cam.fx * q.x() / q.z() + cam.cx;
        const double v = cam.fy * q.y() / q.z() + cam.cy;
        st.u[k] = u;
        st.v[k] = v;
        st.z[k] = q.z();
        if (!(u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1)) {
          st.out_of_view[k] = 1;
          continue;
        }
        const Ray r = pixel_ray(st.pose, cam, u, v);
        const Hit seen = caster.cast(r.origin, r.dir, tau);
        if (seen.surface >= 0 && seen.lambda < q.z() * (1.0 - 1e-9)) {
          st.occluded[k] = 1;
        } else {
          st.visible[k] = 1;
        }
      }
    });
    out.gt.sources.push_back(std::move(st));
  }
  out.frames.prepare();
  return out;
}

VerifyReport verify(const RenderedScene& scene, bool use_motion) {
  VerifyReport rep;
  const auto& fr = scene.frames;
  const int h = fr.target.height, w = fr.target.width;
  for (std::size_t s = 0; s < fr.sources.size(); ++s) {
    const SourceTruth& st = scene.gt.sources[s];
    const WarpResult wr =
        synthesize(fr.sources[s], scene.gt.depth, st.pose, use_motion ? &st.motion : nullptr, fr.cam);
    Grid<double> res(h, w, 0.0);
    for (std::size_t k = 0; k < res.size(); ++k) {
      if (!wr.valid[k] || !st.visible[k]) continue;
      const BilinearSample ref = sample_bilinear(fr.sources[s], st.u[k], st.v[k]);
      if (!ref.inside) continue;
      res[k] = std::abs(wr.image[k] - ref.value);
      rep.max_residual = std::max(rep.max_residual, res[k]);
      const double expected = (wr.image[k] - scene.spec.drift.b) / scene.spec.drift.a;
      rep.max_photometric = std::max(rep.max_photometric, std::abs(expected - fr.target[k]));
      ++rep.visible_pixels;
    }
    rep.residual.push_back(std::move(res));
  }
  return rep;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"static",   "illumination-drift", "same-velocity-object",
                                              "fast-lateral-object", "occluder", "textureless-patch",
                                              "distant-scene", "near-object"};
  return names;
}

namespace {

PlaneSpec background(double depth, double cell) {
  PlaneSpec p;
  p.depth = depth;
  p.x_min = p.y_min = -1000.0;
  p.x_max = p.y_max = 1000.0;
  p.cell = cell;
  return p;
}

BoxSpec box(Vec3 lo, Vec3 hi, double cell, Vec3 vel = Vec3::Zero()) {
  BoxSpec b;
  b.lo = lo;
  b.hi = hi;
  b.cell = cell;
  b.velocity = vel;
  return b;
}

// Shared static layout: a textured wall at 20 m and four boxes between 6 and 16 m.
void static_layout(SceneSpec& s) {
  s.planes.push_back(background(20.0, 2.0));
  s.boxes.push_back(box({-6.0, -2.0, 8.0}, {-3.0, 1.6, 10.0}, 1.0));
  s.boxes.push_back(box({1.5, -1.0, 6.0}, {4.0, 1.6, 7.0}, 0.8));
  s.boxes.push_back(box({7.0, -3.0, 12.0}, {11.0, 1.6, 14.0}, 1.2));
  s.boxes.push_back(box({-13.0, -4.0, 14.0}, {-9.0, 1.6, 16.0}, 1.5));
}

PoseSE3 camera_step(const Vec3& center_shift, const Vec3& r = Vec3::Zero()) {
  PoseSE3 p;
  p.r = r;
  p.t = -(p.rotation() * center_shift);
  return p;
}

}  // namespace

SceneSpec preset(const std::string& name, std::uint64_t seed) {
  SceneSpec s;
  s.name = name;
  s.seed = seed;
  if (name == "static" || name == "illumination-drift" || name == "textureless-patch" || name == "near-object") {
    static_layout(s);
    s.step_pose = camera_step({0.4, 0.0, 0.4}, {0.0, 0.004, 0.0});
    if (name == "illumination-drift") s.drift = {1.2, 0.05};
    if (name == "textureless-patch") s.boxes[1].flat = 0.5;
    if (name == "near-object") s.boxes.push_back(box({-0.6, -0.4, 2.0}, {0.4, 1.0, 2.5}, 0.3));
  } else if (name == "same-velocity-object") {
    static_layout(s);
    const Vec3 c(0.4, 0.0, 0.4);
    s.step_pose = camera_step(c);
    s.boxes.push_back(box({-1.0, -0.5, 7.0}, {1.0, 1.2, 8.0}, 0.6, c));
  } else if (name == "fast-lateral-object") {
    static_layout(s);
    s.boxes.erase(s.boxes.begin() + 1);  // keep the centre clear for the moving objects
    const Vec3 c(0.1, 0.0, 0.6);
    s.step_pose = camera_step(c);
    // Crossing object above the focus of expansion: its lateral motion runs across the
    // epipolar lines, so no depth can explain it. Plus a lead object at camera speed.
    s.boxes.push_back(box({-0.8, -3.4, 8.0}, {1.6, -1.0, 9.0}, 0.6, {0.5, 0.0, 0.0}));
    s.boxes.push_back(box({2.4, -0.6, 10.0}, {4.4, 1.4, 11.0}, 0.6, c));
  } else if (name == "occluder") {
    s.planes.push_back(background(15.0, 1.5));
    s.boxes.push_back(box({-1.0, -1.2, 4.0}, {1.0, 1.2, 5.0}, 0.4));
    s.step_pose = camera_step({0.5, 0.0, 0.0});
  } else if (name == "distant-scene") {
    s.planes.push_back(background(80.0, 8.0));
    s.boxes.push_back(box({-20.0, -8.0, 40.0}, {-10.0, 6.0, 45.0}, 4.0));
    s.boxes.push_back(box({8.0, -6.0, 50.0}, {20.0, 6.0, 55.0}, 4.0));
    s.step_pose = camera_step({0.4, 0.0, 0.4}, {0.0, 0.004, 0.0});
  } else {
    std::string msg = "unknown scene preset '" + name + "'; valid presets:";
    for (const auto& n : preset_names()) msg += " " + n;
    throw InvalidInput(msg);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Text format: one directive per line, '#' starts a comment.
//   name <id> | size <width> <height> | focal <f> | seed <n> | offsets <k>...
//   pose <rx> <ry> <rz> <tx> <ty> <tz>        (frame +1 relative to the target)
//   drift <a> <b>
//   plane depth=<z> [xmin= xmax= ymin= ymax=] [cell=] [vel=x,y,z] [flat=]
//   box lo=x,y,z hi=x,y,z [cell=] [vel=x,y,z] [flat=]

namespace {

Vec3 parse_vec(const std::string& s, int line) {
  Vec3 v;
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> v.x() >> c1 >> v.y() >> c2 >> v.z()) || c1 != ',' || c2 != ',') {
    throw InvalidSpec("scene line " + std::to_string(line) + ": expected x,y,z but got '" + s + "'");
  }
  return v;
}

double parse_num(const std::string& s, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw InvalidSpec("scene line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

SceneSpec parse_scene(std::istream& is) {
  SceneSpec s;
  s.planes.clear();
  s.boxes.clear();
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<std::string> args;
    for (std::string a; ls >> a;) args.push_back(a);
    auto need = [&](std::size_t n) {
      if (args.size() != n) {
        throw InvalidSpec("scene line " + std::to_string(line) + ": '" + key + "' takes " + std::to_string(n) +
                          " values");
      }
    };
    if (key == "name") {
      need(1);
      s.name = args[0];
    } else if (key == "size") {
      need(2);
      s.width = static_cast<int>(parse_num(args[0], line));
      s.height = static_cast<int>(parse_num(args[1], line));
    } else if (key == "focal") {
      need(1);
      s.focal = parse_num(args[0], line);
    } else if (key == "seed") {
      need(1);
      s.seed = std::stoull(args[0]);
    } else if (key == "offsets") {
      s.offsets.clear();
      for (const auto& a : args) s.offsets.push_back(static_cast<int>(parse_num(a, line)));
    } else if (key == "pose") {
      need(6);
      s.step_pose.r = Vec3(parse_num(args[0], line), parse_num(args[1], line), parse_num(args[2], line));
      s.step_pose.t = Vec3(parse_num(args[3], line), parse_num(args[4], line), parse_num(args[5], line));
    } else if (key == "drift") {
      need(2);
      s.drift = {parse_num(args[0], line), parse_num(args[1], line)};
    } else if (key == "plane" || key == "box") {
      PlaneSpec p;
      BoxSpec b;
      bool has_depth = false, has_lo = false, has_hi = false;
      for (const auto& a : args) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw InvalidSpec("scene line " + std::to_string(line) + ": expected key=value");
        const std::string k = a.substr(0, eq), v = a.substr(eq + 1);
        if (k == "cell") {
          p.cell = b.cell = parse_num(v, line);
        } else if (k == "vel") {
          p.velocity = b.velocity = parse_vec(v, line);
        } else if (k == "flat") {
          p.flat = b.flat = parse_num(v, line);
        } else if (key == "plane" && k == "depth") {
          p.depth = parse_num(v, line);
          has_depth = true;
        } else if (key == "plane" && k == "xmin") {
          p.x_min = parse_num(v, line);
        } else if (key == "plane" && k == "xmax") {
          p.x_max = parse_num(v, line);
        } else if (key == "plane" && k == "ymin") {
          p.y_min = parse_num(v, line);
        } else if (key == "plane" && k == "ymax") {
          p.y_max = parse_num(v, line);
        } else if (key == "box" && k == "lo") {
          b.lo = parse_vec(v, line);
          has_lo = true;
        } else if (key == "box" && k == "hi") {
          b.hi = parse_vec(v, line);
          has_hi = true;
        } else {
          throw InvalidSpec("scene line " + std::to_string(line) + ": unknown " + key + " key '" + k + "'");
        }
      }
      if (key == "plane") {
        if (!has_depth) throw InvalidSpec("scene line " + std::to_string(line) + ": plane needs depth=");
        s.planes.push_back(p);
      } else {
        if (!has_lo || !has_hi) throw InvalidSpec("scene line " + std::to_string(line) + ": box needs lo= and hi=");
        s.boxes.push_back(b);
      }
    } else {
      throw InvalidSpec("scene line " + std::to_string(line) + ": unknown directive '" + key + "'");
    }
  }
  s.validate();
  return s;
}

void write_scene(const SceneSpec& s, std::ostream& os) {
  os.precision(17);
  auto vec = [](const Vec3& v) {
    std::ostringstream o;
    o.precision(17);
    o << v.x() << ',' << v.y() << ',' << v.z();
    return o.str();
  };
  os << "name " << s.name << "\nsize " << s.width << ' ' << s.height << "\nfocal " << s.focal << "\nseed " << s.seed
     << "\noffsets";
  for (int o : s.offsets) os << ' ' << o;
  os << "\npose " << s.step_pose.r.x() << ' ' << s.step_pose.r.y() << ' ' << s.step_pose.r.z() << ' '
     << s.step_pose.t.x() << ' ' << s.step_pose.t.y() << ' ' << s.step_pose.t.z() << "\ndrift " << s.drift.a << ' '
     << s.drift.b << '\n';
  for (const auto& p : s.planes) {
    os << "plane depth=" << p.depth << " xmin=" << p.x_min << " xmax=" << p.x_max << " ymin=" << p.y_min
       << " ymax=" << p.y_max << " cell=" << p.cell << " vel=" << vec(p.velocity) << " flat=" << p.flat << '\n';
  }
  for (const auto& b : s.boxes) {
    os << "box lo=" << vec(b.lo) << " hi=" << vec(b.hi) << " cell=" << b.cell << " vel=" << vec(b.velocity)
       << " flat=" << b.flat << '\n';
  }
}

}  // namespace photocon
