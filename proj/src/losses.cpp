#include "photocon/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "photocon/warping.hpp"

namespace photocon {

std::string_view to_string(Occlusion occ) {
  switch (occ) {
    case Occlusion::none: return "none";
    case Occlusion::min_reprojection: return "MR";
    case Occlusion::depth_consistency: return "DC";
    case Occlusion::combined: return "MR+DC";
  }
  return "?";
}

Occlusion parse_occlusion(std::string_view name) {
  if (name == "none" || name == "-") return Occlusion::none;
  if (name == "MR" || name == "mr") return Occlusion::min_reprojection;
  if (name == "DC" || name == "dc") return Occlusion::depth_consistency;
  if (name == "MR+DC" || name == "mr+dc" || name == "M+D") return Occlusion::combined;
  throw InvalidInput("unknown occlusion handler '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  repr.validate();
  if (auto_mask && brightness) {
    throw ConfigError("auto_mask cannot be combined with brightness: the weighting learns a unary mask");
  }
  if (auto_mask && uncertainty) {
    throw ConfigError("auto_mask cannot be combined with uncertainty: the weighting learns a unary mask");
  }
  if (dw_ssim && !ssim) throw ConfigError("dw_ssim requires ssim");
  if (warm_up_steps < 0) throw ConfigError("warm_up_steps must be non-negative");
}

std::string LossConfig::describe() const {
  std::ostringstream os;
  os << "repr=" << to_string(repr.kind);
  if (repr.kind == ReprKind::scaled_disparity) os << "(" << repr.sigma_min << "," << repr.sigma_max << ")";
  os << " illum=";
  bool first = true;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    os << (first ? "" : ",") << name;
    first = false;
  };
  add(brightness, "brightness");
  add(ssim, "ssim");
  add(dw_ssim, "dw_ssim");
  if (first) os << "l1";
  os << " occ=" << to_string(occlusion) << " dyn=";
  first = true;
  add(auto_mask, "auto_mask");
  add(uncertainty, "uncertainty");
  add(motion_map, "motion_map");
  if (first) os << "none";
  return os.str();
}

// ---------------------------------------------------------------------------

MinReprojection min_reprojection(std::span<const ErrorMap> errors) {
  if (errors.empty()) throw InvalidInput("min_reprojection: need at least one error map");
  const int h = errors[0].height();
  const int w = errors[0].width();
  for (const auto& e : errors) require_same_shape(e.value, errors[0].value, "min_reprojection");
  MinReprojection out{ErrorMap(h, w), Grid<int>(h, w, -1)};
  for (std::size_t k = 0; k < out.argmin.size(); ++k) {
    for (std::size_t s = 0; s < errors.size(); ++s) {
      if (!errors[s].valid[k]) continue;
      if (out.argmin[k] < 0 || errors[s].value[k] < out.error.value[k]) {
        out.error.value[k] = errors[s].value[k];
        out.argmin[k] = static_cast<int>(s);
      }
    }
    out.error.valid[k] = out.argmin[k] >= 0 ? 1 : 0;
  }
  return out;
}

Mask auto_mask(const ErrorMap& warped, const ErrorMap& raw) {
  require_same_shape(warped.value, raw.value, "auto_mask");
  Mask mu(warped.height(), warped.width(), 0);
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double r = raw.valid[k] ? raw.value[k] : std::numeric_limits<double>::infinity();
    mu[k] = (warped.valid[k] && warped.value[k] < r) ? 1 : 0;
  }
  return mu;
}

Mask auto_mask(const Image& target, std::span<const Image> warped, std::span<const Mask> warped_valid,
               std::span<const Image> raw_sources, const PeOptions& options) {
  if (warped.empty() || warped.size() != raw_sources.size() || warped.size() != warped_valid.size()) {
    throw InvalidInput("auto_mask: warped and raw lists must be non-empty and of equal length");
  }
  std::vector<ErrorMap> w_err, r_err;
  for (std::size_t s = 0; s < warped.size(); ++s) {
    ErrorMap e = pe(target, warped[s], options);
    e.valid = warped_valid[s];
    w_err.push_back(std::move(e));
    r_err.push_back(pe(target, raw_sources[s], options));
  }
  return auto_mask(min_reprojection(w_err).error, min_reprojection(r_err).error);
}

UncertaintyLoss uncertainty_weighted(const ErrorMap& err, const Grid<double>& log_sigma) {
  require_same_shape(err.value, log_sigma, "uncertainty_weighted");
  UncertaintyLoss out{0.0, Grid<double>(log_sigma.height, log_sigma.width, 0.0),
                      Grid<double>(log_sigma.height, log_sigma.width, 0.0)};
  const std::size_t n = err.valid_count();
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < log_sigma.size(); ++k) {
    if (!err.valid[k]) continue;
    const double inv_sigma = std::exp(-log_sigma[k]);
    sum += err.value[k] * inv_sigma + log_sigma[k];
    out.d_error[k] = inv_sigma * inv_n;
    out.d_log_sigma[k] = (1.0 - err.value[k] * inv_sigma) * inv_n;
  }
  out.loss = sum * inv_n;
  return out;
}

SparsityLoss motion_sparsity(const MotionMap& motion, const std::array<double, 3>* frozen_means) {
  SparsityLoss out;
  out.grad = MotionMap(motion.height, motion.width, Vec3::Zero());
  const std::size_t n = motion.size();
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    if (frozen_means) {
      mean = (*frozen_means)[static_cast<std::size_t>(c)];
    } else {
      for (std::size_t k = 0; k < n; ++k) mean += std::abs(motion[k][c]);
      mean *= inv_n;
    }
    out.means[static_cast<std::size_t>(c)] = mean;
    if (mean < 1e-12) {
      out.degenerate[static_cast<std::size_t>(c)] = true;
      continue;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = std::abs(motion[k][c]);
      const double root = std::sqrt(1.0 + a / mean);
      acc += root;
      const double v = motion[k][c];
      const double sg = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      out.grad[k][c] = sg * inv_n / root;
    }
    out.loss += 2.0 * mean * acc * inv_n;
  }
  return out;
}

ErrorMap depth_consistency_gate(const DepthMap& z_transformed, const DepthMap& z_target, const ErrorMap& err,
                                double tolerance) {
  require_same_shape(z_transformed, z_target, "depth_consistency_gate");
  require_same_shape(z_transformed, err.value, "depth_consistency_gate");
  ErrorMap out = err;
  for (std::size_t k = 0; k < out.value.size(); ++k) {
    const double zt = z_transformed[k];
    const double zr = z_target[k];
    if (!std::isfinite(zt) || !std::isfinite(zr)) continue;
    if (!(zt <= zr * (1.0 + tolerance))) out.valid[k] = 0;
  }
  return out;
}

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Accumulates smoothness of one channel, reading f(i, j) through `get`.
template <typename Get, typename Add>
double smoothness_channel(int h, int w, const Image& image, Get get, Add add) {
  double su = 0.0, sv = 0.0;
  const double nu = static_cast<double>(h) * (w - 1);
  const double nv = static_cast<double>(h - 1) * w;
  if (w > 1) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j + 1 < w; ++j) {
        const double wt = std::exp(-std::abs(image(i, j + 1) - image(i, j)));
        const double df = get(i, j + 1) - get(i, j);
        su += std::abs(df) * wt;
        const double g = sgn(df) * wt / nu;
        add(i, j + 1, g);
        add(i, j, -g);
      }
    }
  }
  if (h > 1) {
    for (int i = 0; i + 1 < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double wt = std::exp(-std::abs(image(i + 1, j) - image(i, j)));
        const double df = get(i + 1, j) - get(i, j);
        sv += std::abs(df) * wt;
        const double g = sgn(df) * wt / nv;
        add(i + 1, j, g);
        add(i, j, -g);
      }
    }
  }
  return (w > 1 ? su / nu : 0.0) + (h > 1 ? sv / nv : 0.0);
}

}  // namespace

ScalarLoss smoothness(const Grid<double>& field, const Image& image) {
  require_same_shape(field, image, "smoothness");
  ScalarLoss out{0.0, Grid<double>(field.height, field.width, 0.0)};
  out.loss = smoothness_channel(
      field.height, field.width, image, [&](int i, int j) { return field(i, j); },
      [&](int i, int j, double g) { out.grad(i, j) += g; });
  return out;
}

ScalarLoss smoothness(const MotionMap& field, const Image& image) {
  require_same_shape(field, image, "smoothness");
  ScalarLoss out{0.0, Grid<double>()};
  // grad is stored channel-interleaved: 3 entries per pixel.
  out.grad = Grid<double>(field.height, field.width * 3, 0.0);
  for (int c = 0; c < 3; ++c) {
    out.loss += smoothness_channel(
        field.height, field.width, image, [&](int i, int j) { return field(i, j)[c]; },
        [&](int i, int j, double g) { out.grad(i, j * 3 + c) += g; });
  }
  return out;
}

ScalarLoss normalized_depth_smoothness(const DepthMap& depth, const Image& image) {
  const std::size_t n = depth.size();
  double mean = 0.0;
  for (double d : depth.data) mean += d;
  mean /= static_cast<double>(n);
  Grid<double> normalized(depth.height, depth.width);
  for (std::size_t k = 0; k < n; ++k) normalized[k] = depth[k] / mean;
  ScalarLoss s = smoothness(normalized, image);
  double dot = 0.0;
  for (std::size_t k = 0; k < n; ++k) dot += s.grad[k] * depth[k];
  const double corr = dot / (static_cast<double>(n) * mean * mean);
  for (std::size_t k = 0; k < n; ++k) s.grad[k] = s.grad[k] / mean - corr;
  return s;
}

// ---------------------------------------------------------------------------

void FrameSet::prepare(Exec exec) {
  cam.validate();
  if (sources.empty()) throw InvalidInput("frames: at least one source frame required");
  if (offsets.size() != sources.size()) throw InvalidInput("frames: one time offset per source required");
  std::vector<ErrorMap> raw;
  for (const auto& s : sources) {
    require_same_shape(target, s, "frames");
    raw.push_back(pe(target, s, {}, exec));
  }
  if (target.height != cam.height || target.width != cam.width) throw InvalidInput("frames: camera/image size mismatch");
  raw_min = min_reprojection(raw).error;
}

std::string_view to_string(Group g) {
  switch (g) {
    case Group::depth: return "x";
    case Group::pose: return "pose";
    case Group::motion: return "motion";
    case Group::log_sigma: return "log_sigma";
    case Group::gain: return "a";
    case Group::bias: return "b";
  }
  return "?";
}

Group parse_group(std::string_view name) {
  for (Group g : kAllGroups) {
    if (to_string(g) == name) return g;
  }
  if (name == "depth") return Group::depth;
  if (name == "logSigma" || name == "log_Sigma") return Group::log_sigma;
  throw InvalidInput("unknown parameter group '" + std::string(name) + "'");
}

ParamSet::ParamSet(int h, int w, int n_sources) : height(h), width(w), sources(n_sources) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  group(Group::depth).assign(n, 0.0);
  group(Group::pose).assign(static_cast<std::size_t>(6 * n_sources), 0.0);
  group(Group::motion).assign(3 * n, 0.0);
  group(Group::log_sigma).assign(n, 0.0);
  group(Group::gain).assign(static_cast<std::size_t>(n_sources), 1.0);
  group(Group::bias).assign(static_cast<std::size_t>(n_sources), 0.0);
}

PoseSE3 ParamSet::pose(int s) const {
  const auto& p = group(Group::pose);
  const std::size_t o = static_cast<std::size_t>(6 * s);
  PoseSE3 out;
  out.r = Vec3(p[o], p[o + 1], p[o + 2]);
  out.t = Vec3(p[o + 3], p[o + 4], p[o + 5]);
  return out;
}

void ParamSet::set_pose(int s, const PoseSE3& pose) {
  auto& p = group(Group::pose);
  const std::size_t o = static_cast<std::size_t>(6 * s);
  for (int c = 0; c < 3; ++c) {
    p[o + c] = pose.r[c];
    p[o + 3 + c] = pose.t[c];
  }
}

Grid<double> ParamSet::depth_param() const {
  Grid<double> g(height, width);
  g.data = group(Group::depth);
  return g;
}

MotionMap ParamSet::motion_map() const {
  MotionMap m(height, width, Vec3::Zero());
  const auto& v = group(Group::motion);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = Vec3(v[3 * k], v[3 * k + 1], v[3 * k + 2]);
  return m;
}

Grid<double> ParamSet::log_sigma() const {
  Grid<double> g(height, width);
  g.data = group(Group::log_sigma);
  return g;
}

BrightnessParams ParamSet::brightness(int s) const {
  return {group(Group::gain)[static_cast<std::size_t>(s)], group(Group::bias)[static_cast<std::size_t>(s)]};
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z = *this;
  for (auto& v : z.values) std::fill(v.begin(), v.end(), 0.0);
  return z;
}

double LossRecord::term(std::string_view name) const {
  for (const auto& [k, v] : terms) {
    if (k == name) return v;
  }
  return 0.0;
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void add(std::int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
      h *= 1099511628211ull;
    }
  }
};

struct Evaluation {
  LossRecord record;
  PhotometricBreakdown breakdown;
};

Evaluation evaluate(const LossConfig& cfg, const FrameSet& frames, const ParamSet& params, const ComposeOptions& opt,
                    bool want_breakdown) {
  cfg.validate();
  const int h = frames.target.height;
  const int w = frames.target.width;
  const int n_src = frames.source_count();
  if (params.height != h || params.width != w || params.sources != n_src) {
    throw InvalidInput("compose: parameter shape does not match the frames");
  }
  if (frames.raw_min.value.size() != frames.target.size()) {
    throw InvalidInput("compose: frames not prepared (call FrameSet::prepare)");
  }
  const Exec ex = opt.exec;
  const CameraModel& cam = frames.cam;
  const std::size_t npx = frames.target.size();
  const bool grads = opt.want_gradients;
  const bool motion_on = cfg.motion_map && opt.motion_active;
  const bool dc = cfg.uses_dc();
  const bool am = cfg.auto_mask && opt.auto_mask_active;

  Evaluation ev;
  LossRecord& rec = ev.record;
  if (grads) rec.grad = params.zeros_like();

  const DecodedDepth dec = decode(params.depth_param(), cfg.repr, ex);
  const DepthMap& depth = dec.depth;
  Grid<double> d_depth(h, w, 0.0);

  MotionMap shared_motion;
  std::vector<MotionMap> motions(static_cast<std::size_t>(n_src));
  if (motion_on) {
    shared_motion = params.motion_map();
    for (int s = 0; s < n_src; ++s) {
      auto& m = motions[static_cast<std::size_t>(s)];
      m = shared_motion;
      const double tau = frames.offsets[static_cast<std::size_t>(s)];
      for (auto& v : m.data) v *= tau;
    }
  }
  auto motion_of = [&](int s) -> const MotionMap* { return motion_on ? &motions[static_cast<std::size_t>(s)] : nullptr; };

  std::vector<WarpResult> warps;
  std::vector<PoseSE3> poses;
  for (int s = 0; s < n_src; ++s) {
    poses.push_back(params.pose(s));
    warps.push_back(synthesize(frames.sources[static_cast<std::size_t>(s)], depth, poses.back(), motion_of(s), cam, ex));
  }

  std::vector<Image> appearance;
  for (int s = 0; s < n_src; ++s) {
    appearance.push_back(cfg.brightness ? brightness_transform(frames.target, params.brightness(s), ex).image
                                        : frames.target);
  }

  // Detached quantities.
  DetachedState local;
  const DetachedState* det = opt.frozen;
  const int directions = dc ? 2 : 1;
  if (!det) {
    local.filled = true;
    if (dc || cfg.dw_ssim) {
      for (int s = 0; s < n_src; ++s) {
        const DepthMap src_depth = splat_depth(depth, poses[static_cast<std::size_t>(s)], motion_of(s), cam);
        const ReprojectedDepth rp =
            reproject_depth(src_depth, depth, poses[static_cast<std::size_t>(s)], motion_of(s), cam, ex);
        if (cfg.dw_ssim) {
          const bool any = std::any_of(rp.valid.data.begin(), rp.valid.data.end(), [](auto v) { return v != 0; });
          local.dw_weights.push_back(any ? dw_ssim_weights(depth, rp.transformed, &rp.valid) : Grid<double>(h, w, 1.0));
        }
        if (dc) {
          const double tol = cfg.weights.dc_tolerance;
          Mask fwd(h, w, 1), bwd(h, w, 1);
          for (std::size_t k = 0; k < npx; ++k) {
            if (!rp.valid[k]) continue;
            fwd[k] = rp.transformed[k] <= rp.target[k] * (1.0 + tol) ? 1 : 0;
            bwd[k] = rp.target_in_source[k] <= rp.source_sampled[k] * (1.0 + tol) ? 1 : 0;
          }
          local.dc_gates.resize(static_cast<std::size_t>(2 * n_src));
          local.dc_gates[static_cast<std::size_t>(s)] = std::move(fwd);
          local.dc_gates[static_cast<std::size_t>(n_src + s)] = std::move(bwd);
        }
      }
    }
    det = &local;
  }

  std::vector<PeMap> pes;
  for (int s = 0; s < n_src; ++s) {
    PeOptions po;
    po.use_ssim = cfg.ssim;
    if (cfg.dw_ssim) po.ssim_weight = &det->dw_weights[static_cast<std::size_t>(s)];
    pes.push_back(pe_full(appearance[static_cast<std::size_t>(s)], warps[static_cast<std::size_t>(s)].image, po, ex));
  }

  std::vector<Grid<double>> upstream(static_cast<std::size_t>(n_src), Grid<double>(grads ? h : 0, grads ? w : 0));
  Grid<double> log_sigma = cfg.uncertainty ? params.log_sigma() : Grid<double>();
  Grid<double> d_log_sigma(cfg.uncertainty && grads ? h : 0, cfg.uncertainty && grads ? w : 0, 0.0);

  Fnv sig;
  double photometric = 0.0;
  std::vector<Mask> masks_out;
  for (int dir = 0; dir < directions; ++dir) {
    auto candidate = [&](int s, std::size_t k) {
      if (!warps[static_cast<std::size_t>(s)].valid[k]) return false;
      if (dc && !det->dc_gates[static_cast<std::size_t>(dir * n_src + s)][k]) return false;
      return true;
    };
    ErrorMap reduced(h, w);
    Grid<int> argmin(h, w, -1);
    Grid<int> count(h, w, 0);
    for_rows(h, ex, [&](int i) {
      for (int j = 0; j < w; ++j) {
        const std::size_t k = reduced.value.index(i, j);
        double best = 0.0, sum = 0.0;
        int arg = -1, cnt = 0;
        for (int s = 0; s < n_src; ++s) {
          if (!candidate(s, k)) continue;
          const double e = pes[static_cast<std::size_t>(s)].error.value[k];
          if (arg < 0 || e < best) {
            best = e;
            arg = s;
          }
          sum += e;
          ++cnt;
        }
        if (cnt == 0) continue;
        reduced.valid[k] = 1;
        reduced.value[k] = cfg.uses_mr() ? best : sum / cnt;
        argmin[k] = arg;
        count[k] = cnt;
      }
    });

    Mask mu;
    if (am) {
      if (opt.frozen) {
        mu = det->auto_masks[static_cast<std::size_t>(dir)];
      } else {
        mu = auto_mask(reduced, frames.raw_min);
      }
      masks_out.push_back(mu);
    }

    std::vector<double> row_sum(static_cast<std::size_t>(h), 0.0);
    std::vector<std::size_t> row_cnt(static_cast<std::size_t>(h), 0);
    for_rows(h, ex, [&](int i) {
      double acc = 0.0;
      std::size_t cnt = 0;
      for (int j = 0; j < w; ++j) {
        const std::size_t k = reduced.value.index(i, j);
        if (!reduced.valid[k]) continue;
        ++cnt;
        if (am && !mu[k]) continue;
        const double e = reduced.value[k];
        acc += cfg.uncertainty ? e * std::exp(-log_sigma[k]) + log_sigma[k] : e;
      }
      row_sum[static_cast<std::size_t>(i)] = acc;
      row_cnt[static_cast<std::size_t>(i)] = cnt;
    });
    double total = 0.0;
    std::size_t n_valid = 0;
    for (int i = 0; i < h; ++i) {
      total += row_sum[static_cast<std::size_t>(i)];
      n_valid += row_cnt[static_cast<std::size_t>(i)];
    }
    if (dir == 0) rec.photometric_pixels = n_valid;
    if (n_valid > 0) photometric += total / static_cast<double>(n_valid) / directions;

    if (opt.want_signature) {
      for (std::size_t k = 0; k < npx; ++k) sig.add(argmin[k]);
    }

    if (grads && n_valid > 0) {
      const double scale = 1.0 / (static_cast<double>(n_valid) * directions);
      for_rows(h, ex, [&](int i) {
        for (int j = 0; j < w; ++j) {
          const std::size_t k = reduced.value.index(i, j);
          if (!reduced.valid[k] || (am && !mu[k])) continue;
          double g = scale;
          if (cfg.uncertainty) {
            const double inv_sigma = std::exp(-log_sigma[k]);
            d_log_sigma[k] += scale * (1.0 - reduced.value[k] * inv_sigma);
            g *= inv_sigma;
          }
          if (cfg.uses_mr()) {
            upstream[static_cast<std::size_t>(argmin[k])][k] += g;
          } else {
            const double share = g / count[k];
            for (int s = 0; s < n_src; ++s) {
              if (candidate(s, k)) upstream[static_cast<std::size_t>(s)][k] += share;
            }
          }
        }
      });
    }
  }
  rec.terms.emplace_back("photometric", photometric);
  if (!opt.frozen) local.auto_masks = masks_out;

  if (want_breakdown) {
    auto& bd = ev.breakdown;
    for (int s = 0; s < n_src; ++s) {
      ErrorMap e = pes[static_cast<std::size_t>(s)].error;
      e.valid = warps[static_cast<std::size_t>(s)].valid;
      bd.per_source.push_back(e);
      Mask ex_mask(h, w, 0);
      if (dc) {
        for (std::size_t k = 0; k < npx; ++k) {
          if (!warps[static_cast<std::size_t>(s)].valid[k]) continue;
          const bool keep = det->dc_gates[static_cast<std::size_t>(s)][k] &&
                            det->dc_gates[static_cast<std::size_t>(n_src + s)][k];
          ex_mask[k] = keep ? 0 : 1;
        }
      }
      bd.dc_excluded.push_back(std::move(ex_mask));
    }
    std::vector<ErrorMap> cand = bd.per_source;
    if (cfg.uses_mr()) {
      bd.reduced = min_reprojection(cand).error;
    } else {
      bd.reduced = ErrorMap(h, w);
      for (std::size_t k = 0; k < npx; ++k) {
        double sum = 0.0;
        int cnt = 0;
        for (const auto& c : cand) {
          if (!c.valid[k]) continue;
          sum += c.value[k];
          ++cnt;
        }
        if (cnt) {
          bd.reduced.valid[k] = 1;
          bd.reduced.value[k] = sum / cnt;
        }
      }
    }
    if (am && !masks_out.empty()) bd.auto_mask = masks_out.front();
  }

  // Backward through pe, brightness and the warp.
  if (grads) {
    for (int s = 0; s < n_src; ++s) {
      const auto su = static_cast<std::size_t>(s);
      Grid<double> g_warp(h, w, 0.0);
      Grid<double> g_app(cfg.brightness ? h : 0, cfg.brightness ? w : 0, 0.0);
      pe_backward(pes[su], appearance[su], warps[su].image, upstream[su], cfg.brightness ? &g_app : nullptr, &g_warp,
                  ex);
      const WarpGradients wg = synthesize_backward(warps[su], poses[su], cam, g_warp, ex);
      for (std::size_t k = 0; k < npx; ++k) d_depth[k] += wg.d_depth[k];
      auto& gp = rec.grad.group(Group::pose);
      for (int c = 0; c < 3; ++c) {
        gp[su * 6 + c] += wg.d_rotation[c];
        gp[su * 6 + 3 + c] += wg.d_translation[c];
      }
      if (motion_on) {
        const double tau = frames.offsets[su];
        auto& gm = rec.grad.group(Group::motion);
        for (std::size_t k = 0; k < npx; ++k) {
          for (int c = 0; c < 3; ++c) gm[3 * k + c] += tau * wg.d_motion[k][c];
        }
      }
      if (cfg.brightness) {
        double ga = 0.0, gb = 0.0;
        for (std::size_t k = 0; k < npx; ++k) {
          ga += g_app[k] * frames.target[k];
          gb += g_app[k];
        }
        rec.grad.group(Group::gain)[su] += ga;
        rec.grad.group(Group::bias)[su] += gb;
      }
    }
    if (cfg.uncertainty) rec.grad.group(Group::log_sigma) = d_log_sigma.data;
  }

  if (opt.want_signature) {
    for (int s = 0; s < n_src; ++s) {
      const auto& wr = warps[static_cast<std::size_t>(s)];
      const auto& app = appearance[static_cast<std::size_t>(s)];
      for (std::size_t k = 0; k < npx; ++k) {
        sig.add(wr.valid[k]);
        if (wr.valid[k]) {
          sig.add(static_cast<std::int64_t>(std::floor(wr.u[k])));
          sig.add(static_cast<std::int64_t>(std::floor(wr.v[k])));
        }
        sig.add(static_cast<std::int64_t>(sgn(app[k] - wr.image[k])));
      }
    }
  }

  // Regularizers.
  const ScalarLoss sd = normalized_depth_smoothness(depth, frames.target);
  rec.terms.emplace_back("smooth_depth", cfg.weights.smooth_depth * sd.loss);
  if (grads) {
    for (std::size_t k = 0; k < npx; ++k) d_depth[k] += cfg.weights.smooth_depth * sd.grad[k];
  }
  if (opt.want_signature) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        if (j + 1 < w) sig.add(static_cast<std::int64_t>(sgn(depth(i, j + 1) - depth(i, j))));
        if (i + 1 < h) sig.add(static_cast<std::int64_t>(sgn(depth(i + 1, j) - depth(i, j))));
      }
    }
  }

  if (motion_on) {
    const ScalarLoss sm = smoothness(shared_motion, frames.target);
    const SparsityLoss sp = motion_sparsity(shared_motion, opt.frozen ? &det->motion_means : nullptr);
    local.motion_means = sp.means;
    rec.motion_axis_degenerate = sp.degenerate;
    rec.terms.emplace_back("smooth_motion", cfg.weights.smooth_motion * sm.loss);
    rec.terms.emplace_back("motion_sparsity", cfg.weights.motion_sparsity * sp.loss);
    if (grads) {
      auto& gm = rec.grad.group(Group::motion);
      for (std::size_t k = 0; k < npx; ++k) {
        for (int c = 0; c < 3; ++c) {
          gm[3 * k + c] += cfg.weights.smooth_motion * sm.grad[3 * k + c] + cfg.weights.motion_sparsity * sp.grad[k][c];
        }
      }
    }
    if (opt.want_signature) {
      for (std::size_t k = 0; k < npx; ++k) {
        for (int c = 0; c < 3; ++c) sig.add(static_cast<std::int64_t>(sgn(shared_motion[k][c])));
      }
      for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) {
            if (j + 1 < w) sig.add(static_cast<std::int64_t>(sgn(shared_motion(i, j + 1)[c] - shared_motion(i, j)[c])));
            if (i + 1 < h) sig.add(static_cast<std::int64_t>(sgn(shared_motion(i + 1, j)[c] - shared_motion(i, j)[c])));
          }
        }
      }
    }
  }

  if (cfg.variance_active()) {
    const VarianceLoss vl = variance_regularizer(depth, nullptr, cfg.weights.variance);
    rec.terms.emplace_back("variance", vl.loss);
    rec.variance_collapsed = vl.collapsed;
    if (grads) {
      for (std::size_t k = 0; k < npx; ++k) d_depth[k] += vl.grad[k];
    }
    if (opt.want_signature) sig.add(vl.collapsed ? 1 : 0);
  }

  if (grads) {
    auto& gx = rec.grad.group(Group::depth);
    for (std::size_t k = 0; k < npx; ++k) gx[k] = d_depth[k] * dec.d_depth[k];
  }

  rec.total = 0.0;
  for (const auto& [name, v] : rec.terms) rec.total += v;
  rec.signature = sig.h;
  if (opt.detached_out) *opt.detached_out = opt.frozen ? *opt.frozen : local;
  return ev;
}

}  // namespace

LossRecord compose(const LossConfig& cfg, const FrameSet& frames, const ParamSet& params, const ComposeOptions& options) {
  return evaluate(cfg, frames, params, options, false).record;
}

PhotometricBreakdown photometric_breakdown(const LossConfig& cfg, const FrameSet& frames, const ParamSet& params,
                                           bool motion_active, Exec exec) {
  ComposeOptions o;
  o.want_gradients = false;
  o.motion_active = motion_active;
  o.exec = exec;
  return evaluate(cfg, frames, params, o, true).breakdown;
}

}  // namespace photocon
