#include "photocon/direct_opt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <random>

namespace photocon {

DivergenceError::DivergenceError(std::string term_name, long at_step)
    : std::runtime_error("diverged at step " + std::to_string(at_step) + ": non-finite " + term_name),
      term(std::move(term_name)),
      step(at_step) {}

void OptimState::reset_moments() {
  m = params.zeros_like();
  v = params.zeros_like();
  adam_step = 0;
}

OptimState init_state(const LossConfig& cfg, int height, int width, int n_sources, std::uint64_t seed,
                      double init_depth, double init_noise) {
  OptimState s;
  s.params = ParamSet(height, width, n_sources);
  s.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (double& x : s.params.group(Group::depth)) {
    const double d = init_noise > 0.0 ? init_depth * (1.0 + init_noise * uni(rng)) : init_depth;
    x = encode_value(d, cfg.repr);
  }
  s.reset_moments();
  return s;
}

void Schedule::validate() const {
  if (max_steps < 1) throw ConfigError("schedule: max_steps must be >= 1");
  if (warm_up_steps < 0 || warm_up_steps > max_steps) throw ConfigError("schedule: need 0 <= warm_up_steps <= max_steps");
  if (levels < 1) throw ConfigError("schedule: levels must be >= 1");
  if (window < 1 || !(tolerance >= 0.0)) throw ConfigError("schedule: bad convergence window/tolerance");
}

std::array<bool, 6> active_groups(const LossConfig& cfg) {
  std::array<bool, 6> a{};
  a[static_cast<std::size_t>(Group::depth)] = true;
  a[static_cast<std::size_t>(Group::pose)] = true;
  a[static_cast<std::size_t>(Group::motion)] = cfg.motion_map;
  a[static_cast<std::size_t>(Group::log_sigma)] = cfg.uncertainty;
  a[static_cast<std::size_t>(Group::gain)] = cfg.brightness;
  a[static_cast<std::size_t>(Group::bias)] = cfg.brightness;
  return a;
}

namespace {

void project_params(ParamSet& p, const LossConfig& cfg) {
  auto& x = p.group(Group::depth);
  if (cfg.repr.kind == ReprKind::scaled_disparity) {
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
  } else if (cfg.repr.kind == ReprKind::disparity) {
    // Keeps decoded depth finite (<= 1e4 m).
    for (double& v : x) v = std::max(v, 1e-4);
  }
}

}  // namespace

void adam_update(std::vector<double>& params, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& grad, double lr, const AdamSettings& adam, long t) {
  if (t < 1) throw InvalidInput("adam_update: step must be >= 1");
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m[k] = adam.beta1 * m[k] + (1.0 - adam.beta1) * grad[k];
    v[k] = adam.beta2 * v[k] + (1.0 - adam.beta2) * grad[k] * grad[k];
    params[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + adam.eps);
  }
}

LossRecord step(OptimState& state, const LossConfig& cfg, const FrameSet& frames, const Schedule& sched,
                const AdamSettings& adam, Exec exec) {
  ComposeOptions co;
  co.want_gradients = true;
  co.motion_active = state.step >= sched.warm_up_steps;
  co.auto_mask_active = state.step >= sched.auto_mask_warm_up;
  co.exec = exec;
  LossRecord rec = compose(cfg, frames, state.params, co);
  for (const auto& [name, value] : rec.terms) {
    if (!std::isfinite(value)) throw DivergenceError(name, state.step);
  }
  if (!std::isfinite(rec.total)) throw DivergenceError("total", state.step);

  const auto active = active_groups(cfg);
  for (Group g : kAllGroups) {
    for (double v : rec.grad.group(g)) {
      if (!std::isfinite(v)) throw DivergenceError("grad:" + std::string(to_string(g)), state.step);
    }
  }

  ++state.adam_step;
  for (Group g : kAllGroups) {
    if (!active[static_cast<std::size_t>(g)]) continue;
    if (g == Group::motion && !co.motion_active) continue;
    adam_update(state.params.group(g), state.m.group(g), state.v.group(g), rec.grad.group(g), adam.rate(g), adam,
                state.adam_step);
  }
  project_params(state.params, cfg);
  ++state.step;
  return rec;
}

Grid<double> resample(const Grid<double>& in, int height, int width) {
  Grid<double> out(height, width, 0.0);
  const double sy = static_cast<double>(in.height) / height;
  const double sx = static_cast<double>(in.width) / width;
  for (int i = 0; i < height; ++i) {
    const double y = std::clamp((i + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    const int y0 = std::min(static_cast<int>(y), std::max(in.height - 2, 0));
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double fy = y - y0;
    for (int j = 0; j < width; ++j) {
      const double x = std::clamp((j + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      const int x0 = std::min(static_cast<int>(x), std::max(in.width - 2, 0));
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double fx = x - x0;
      out(i, j) = (1 - fy) * ((1 - fx) * in(y0, x0) + fx * in(y0, x1)) + fy * ((1 - fx) * in(y1, x0) + fx * in(y1, x1));
    }
  }
  return out;
}

namespace {

Image box_down(const Image& in, int f) {
  const int h = in.height / f;
  const int w = in.width / f;
  Image out(h, w, 0.0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int a = 0; a < f; ++a) {
        for (int b = 0; b < f; ++b) s += in(i * f + a, j * f + b);
      }
      out(i, j) = s / (f * f);
    }
  }
  return out;
}

// Carries every per-pixel group to a new resolution; global groups are copied.
ParamSet resample_params(const ParamSet& p, int height, int width) {
  ParamSet out(height, width, p.sources);
  out.group(Group::pose) = p.group(Group::pose);
  out.group(Group::gain) = p.group(Group::gain);
  out.group(Group::bias) = p.group(Group::bias);
  out.group(Group::depth) = resample(p.depth_param(), height, width).data;
  out.group(Group::log_sigma) = resample(p.log_sigma(), height, width).data;
  const MotionMap mm = p.motion_map();
  auto& dst = out.group(Group::motion);
  for (int c = 0; c < 3; ++c) {
    Grid<double> ch(p.height, p.width);
    for (std::size_t k = 0; k < ch.size(); ++k) ch[k] = mm[k][c];
    const Grid<double> up = resample(ch, height, width);
    for (std::size_t k = 0; k < up.size(); ++k) dst[3 * k + c] = up[k];
  }
  return out;
}

}  // namespace

FrameSet downsample(const FrameSet& frames, int factor) {
  if (factor < 1) throw InvalidInput("downsample: factor must be >= 1");
  if (factor == 1) return frames;
  FrameSet out;
  out.cam = frames.cam.downsampled(factor);
  out.target = box_down(frames.target, factor);
  for (const auto& s : frames.sources) out.sources.push_back(box_down(s, factor));
  out.offsets = frames.offsets;
  out.prepare();
  return out;
}

FitReport run(const LossConfig& cfg, const Schedule& sched, const FrameSet& frames, std::uint64_t seed,
              const AdamSettings& adam, double init_depth, Exec exec) {
  cfg.validate();
  sched.validate();
  FitReport rep;
  const int levels = sched.levels;
  std::vector<long> budget(static_cast<std::size_t>(levels), sched.max_steps);
  if (levels > 1) {
    const long coarse = sched.max_steps / (2 * (levels - 1));
    for (int l = 0; l + 1 < levels; ++l) budget[static_cast<std::size_t>(l)] = coarse;
    budget.back() = sched.max_steps - coarse * (levels - 1);
  }

  OptimState state;
  LossRecord last;
  for (int level = 0; level < levels; ++level) {
    const int factor = 1 << (levels - 1 - level);
    const FrameSet lf = downsample(frames, factor);
    const int h = lf.target.height;
    const int w = lf.target.width;
    if (level == 0) {
      state = init_state(cfg, h, w, lf.source_count(), seed, init_depth);
    } else {
      state.params = resample_params(state.params, h, w);
      state.reset_moments();
    }
    state.level = level;
    std::vector<double> history;
    bool level_converged = false;
    for (long k = 0; k < budget[static_cast<std::size_t>(level)]; ++k) {
      const long global = state.step;
      last = step(state, cfg, lf, sched, adam, exec);
      rep.curve.push_back({global, level, last.total, last.terms});
      history.push_back(last.total);
      // Convergence is only meaningful once every warm-up has elapsed.
      const bool warm = global >= std::max(sched.auto_mask_warm_up, cfg.motion_map ? sched.warm_up_steps : 0L);
      if (warm && static_cast<long>(history.size()) > sched.window) {
        const double prev = history[history.size() - 1 - static_cast<std::size_t>(sched.window)];
        const double rel = std::abs(last.total - prev) / std::max(std::abs(prev), 1e-300);
        if (rel < sched.tolerance) {
          level_converged = true;
          break;
        }
      }
    }
    if (level + 1 == levels) rep.converged = level_converged;
  }
  // Final evaluation at the reached state for reporting.
  ComposeOptions co;
  co.want_gradients = false;
  co.motion_active = state.step >= sched.warm_up_steps;
  co.auto_mask_active = state.step >= sched.auto_mask_warm_up;
  co.exec = exec;
  rep.final_record = compose(cfg, frames, state.params, co);
  rep.steps = state.step;
  rep.depth = decode(state.params.depth_param(), cfg.repr, exec).depth;
  // Judged on the final depth whether or not the regularizer is part of the objective;
  // a constant initialization passes through zero variance on the first step.
  rep.variance_collapsed = variance_regularizer(rep.depth).collapsed;
  rep.state = std::move(state);
  return rep;
}

GradCheckReport grad_check(const LossConfig& cfg, const FrameSet& frames, const ParamSet& params, Group group,
                           double h, int n_probes, std::uint64_t seed, const GradCheckOptions& options) {
  if (!(h > 0.0)) throw InvalidInput("grad_check: h must be positive");
  if (n_probes < 1) throw InvalidInput("grad_check: n_probes must be >= 1");
  GradCheckReport rep;
  rep.group = group;
  ComposeOptions base;
  base.want_gradients = true;
  base.motion_active = options.motion_active;
  base.auto_mask_active = options.auto_mask_active;
  base.want_signature = true;
  base.exec = options.exec;
  DetachedState frozen;
  base.detached_out = &frozen;
  const LossRecord ref = compose(cfg, frames, params, base);
  const auto& grad = ref.grad.group(group);
  if (grad.empty()) return rep;

  std::vector<std::size_t> pool;
  for (std::size_t k = 0; k < grad.size(); ++k) {
    if (grad[k] != 0.0) pool.push_back(k);
  }
  if (static_cast<int>(pool.size()) < n_probes) {
    pool.resize(grad.size());
    for (std::size_t k = 0; k < grad.size(); ++k) pool[k] = k;
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const std::size_t n = std::min(pool.size(), static_cast<std::size_t>(n_probes));

  ComposeOptions probe = base;
  probe.want_gradients = false;
  probe.detached_out = nullptr;
  probe.frozen = &frozen;
  ParamSet work = params;
  auto total_at = [&](std::size_t k, double x, std::uint64_t* sig) {
    work.group(group)[k] = x;
    const LossRecord r = compose(cfg, frames, work, probe);
    *sig = r.signature;
    return r.total;
  };
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t k = pool[p];
    GradProbe gp;
    gp.index = k;
    gp.analytic = grad[k];
    const double x0 = work.group(group)[k];
    // Depth steps are relative to the decoded depth so every representation sees the
    // same geometric perturbation.
    double step = h;
    if (group == Group::depth) {
      const double d = decode_value(x0, cfg.repr);
      step = h * d / std::abs(decode_derivative(x0, cfg.repr));
    }
    // Fourth-order central stencil; all four evaluations must keep the reference decisions.
    std::uint64_t s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    const double f1 = total_at(k, x0 + step, &s1);
    const double f2 = total_at(k, x0 - step, &s2);
    const double f3 = total_at(k, x0 + 2.0 * step, &s3);
    const double f4 = total_at(k, x0 - 2.0 * step, &s4);
    work.group(group)[k] = x0;
    gp.numeric = (8.0 * (f1 - f2) - (f3 - f4)) / (12.0 * step);
    gp.kink_excluded = s1 != ref.signature || s2 != ref.signature || s3 != ref.signature || s4 != ref.signature;
    const double denom = std::max({std::abs(gp.analytic), std::abs(gp.numeric), options.atol});
    gp.rel_err = std::abs(gp.analytic - gp.numeric) / denom;
    if (gp.kink_excluded) {
      ++rep.excluded;
    } else {
      ++rep.checked;
      rep.max_rel_err = std::max(rep.max_rel_err, gp.rel_err);
    }
    rep.probes.push_back(gp);
  }
  return rep;
}

namespace {

constexpr char kMagic[4] = {'P', 'C', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InvalidInput("checkpoint: truncated file");
  return v;
}

void put_set(std::ostream& os, const ParamSet& p) {
  for (Group g : kAllGroups) {
    const auto& v = p.group(g);
    put<std::uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
}

void get_set(std::istream& is, ParamSet& p) {
  for (Group g : kAllGroups) {
    auto& v = p.group(g);
    const auto n = get<std::uint64_t>(is);
    if (n != v.size()) throw InvalidInput("checkpoint: group '" + std::string(to_string(g)) + "' has wrong size");
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw InvalidInput("checkpoint: truncated file");
  }
}

}  // namespace

void save_checkpoint(const OptimState& state, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  os.write(kMagic, 4);
  put(os, kVersion);
  put<std::int32_t>(os, state.params.height);
  put<std::int32_t>(os, state.params.width);
  put<std::int32_t>(os, state.params.sources);
  put<std::int64_t>(os, state.step);
  put<std::int64_t>(os, state.adam_step);
  put<std::uint64_t>(os, state.seed);
  put<std::int32_t>(os, state.level);
  put_set(os, state.params);
  put_set(os, state.m);
  put_set(os, state.v);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

OptimState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw InvalidInput("checkpoint: bad magic in " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw InvalidInput("checkpoint: unsupported version " + std::to_string(version));
  const int h = get<std::int32_t>(is);
  const int w = get<std::int32_t>(is);
  const int n = get<std::int32_t>(is);
  if (h <= 0 || w <= 0 || n <= 0) throw InvalidInput("checkpoint: bad dimensions");
  OptimState s;
  s.step = get<std::int64_t>(is);
  s.adam_step = get<std::int64_t>(is);
  s.seed = get<std::uint64_t>(is);
  s.level = get<std::int32_t>(is);
  s.params = ParamSet(h, w, n);
  s.m = ParamSet(h, w, n);
  s.v = ParamSet(h, w, n);
  get_set(is, s.params);
  get_set(is, s.m);
  get_set(is, s.v);
  return s;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& os) {
  static const char* kTerms[] = {"photometric", "smooth_depth", "smooth_motion", "motion_sparsity", "variance"};
  os << "step,level,total";
  for (const char* t : kTerms) os << ',' << t;
  os << '\n';
  os.precision(17);
  for (const auto& c : curve) {
    os << c.step << ',' << c.level << ',' << c.total;
    for (const char* t : kTerms) {
      double v = 0.0;
      for (const auto& [k, val] : c.terms) {
        if (k == t) v = val;
      }
      os << ',' << v;
    }
    os << '\n';
  }
}

}  // namespace photocon
