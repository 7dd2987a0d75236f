#include "photocon/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <istream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "photocon/io.hpp"
#include "photocon/synth.hpp"

namespace photocon {

const std::vector<std::string>& grid_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (char p : {'R', 'S', 'L'}) {
      for (int k = 0; k <= 5; ++k) v.push_back(std::string(1, p) + std::to_string(k));
    }
    for (char p : {'M', 'D', 'C'}) {
      for (int k = 0; k <= 4; ++k) v.push_back(std::string(1, p) + std::to_string(k));
    }
    return v;
  }();
  return ids;
}

LossConfig resolve_grid_id(const std::string& id) {
  auto fail = [&]() {
    std::string msg = "unknown grid id '" + id + "'; valid ids:";
    for (const auto& v : grid_ids()) msg += " " + v;
    return InvalidInput(msg);
  };
  if (id.size() != 2 || id[1] < '0' || id[1] > '9') throw fail();
  const char prefix = id[0];
  const int row = id[1] - '0';
  LossConfig c;
  c.grid_id = id;
  c.ssim = true;
  if (prefix == 'R' || prefix == 'S' || prefix == 'L') {
    if (row > 5) throw fail();
    c.repr.kind = prefix == 'R' ? ReprKind::disparity : prefix == 'S' ? ReprKind::scaled_disparity : ReprKind::softplus;
    if (prefix == 'S') c.repr = ReprConfig::scaled(0.1, 100.0);
    c.occlusion = row == 0 ? Occlusion::none : Occlusion::min_reprojection;
    c.auto_mask = row == 2 || row == 4;
    c.brightness = row == 3 || row == 5;
    c.dw_ssim = row == 4 || row == 5;
  } else if (prefix == 'M' || prefix == 'D' || prefix == 'C') {
    if (row > 4) throw fail();
    c.repr.kind = ReprKind::softplus;
    c.occlusion = prefix == 'M'   ? Occlusion::min_reprojection
                  : prefix == 'D' ? Occlusion::depth_consistency
                                  : Occlusion::combined;
    c.auto_mask = row == 1 || row == 3;
    c.uncertainty = row == 2 || row == 4;
    c.motion_map = row == 3 || row == 4;
  } else {
    throw fail();
  }
  c.validate();
  return c;
}

bool is_prior_sota(const std::string& id) { return id == "S2"; }

AdamSettings tuned_adam(const LossConfig& cfg) {
  AdamSettings a;
  switch (cfg.repr.kind) {
    case ReprKind::scaled_disparity: a.rate(Group::depth) = 1e-4; break;
    case ReprKind::disparity: a.rate(Group::depth) = 1e-3; break;
    case ReprKind::softplus: a.rate(Group::depth) = 5e-2; break;
  }
  a.rate(Group::pose) = 3e-3;
  a.rate(Group::motion) = 1e-2;
  a.rate(Group::log_sigma) = 1e-2;
  a.rate(Group::gain) = 1e-3;
  a.rate(Group::bias) = 1e-3;
  return a;
}

void RunManifest::validate() const {
  if (runs.empty()) throw InvalidInput("manifest: no runs");
  if (jobs < 1) throw InvalidInput("manifest: jobs must be >= 1");
  std::set<std::tuple<std::string, std::string, std::uint64_t>> seen;
  for (const auto& r : runs) {
    r.config.validate();
    r.schedule.validate();
    if (!seen.emplace(r.config.describe(), r.scene, r.seed).second) {
      throw InvalidInput("manifest: duplicate run (" + r.label + ", " + r.scene + ", seed " + std::to_string(r.seed) +
                         ")");
    }
  }
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

long to_long(const std::string& v, int line) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw InvalidInput("manifest line " + std::to_string(line) + ": expected an integer, got '" + v + "'");
  }
  return out;
}

}  // namespace

RunManifest parse_manifest(std::istream& is) {
  RunManifest m;
  Schedule defaults;
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
    auto one = [&]() -> const std::string& {
      if (args.size() != 1) throw InvalidInput("manifest line " + std::to_string(line) + ": '" + key + "' takes one value");
      return args[0];
    };
    if (key == "out") {
      m.out_dir = one();
    } else if (key == "jobs") {
      m.jobs = static_cast<int>(to_long(one(), line));
    } else if (key == "max_steps") {
      defaults.max_steps = to_long(one(), line);
    } else if (key == "levels") {
      defaults.levels = static_cast<int>(to_long(one(), line));
    } else if (key == "warm_up") {
      defaults.warm_up_steps = to_long(one(), line);
    } else if (key == "run") {
      RunSpec r;
      r.schedule = defaults;
      bool has_grid = false, has_explicit = false, has_scene = false, has_seed = false;
      std::string name, repr = "softplus", illum = "ssim", occ = "none", dyn;
      std::string variance;
      for (const auto& a : args) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) {
          throw InvalidInput("manifest line " + std::to_string(line) + ": expected key=value, got '" + a + "'");
        }
        const std::string k = a.substr(0, eq), v = a.substr(eq + 1);
        if (k == "grid") {
          r.config = resolve_grid_id(v);
          r.label = v;
          has_grid = true;
        } else if (k == "scene") {
          r.scene = v;
          has_scene = true;
        } else if (k == "seed") {
          r.seed = static_cast<std::uint64_t>(to_long(v, line));
          has_seed = true;
        } else if (k == "max_steps") {
          r.schedule.max_steps = to_long(v, line);
        } else if (k == "levels") {
          r.schedule.levels = static_cast<int>(to_long(v, line));
        } else if (k == "warm_up") {
          r.schedule.warm_up_steps = to_long(v, line);
        } else if (k == "variance") {
          variance = v;
        } else if (k == "name") {
          name = v;
        } else if (k == "repr") {
          repr = v;
          has_explicit = true;
        } else if (k == "illum") {
          illum = v;
          has_explicit = true;
        } else if (k == "occ") {
          occ = v;
          has_explicit = true;
        } else if (k == "dyn") {
          dyn = v;
          has_explicit = true;
        } else {
          throw InvalidInput("manifest line " + std::to_string(line) + ": unknown run key '" + k + "'");
        }
      }
      if (has_grid && has_explicit) {
        throw InvalidInput("manifest line " + std::to_string(line) + ": give either grid= or an explicit configuration");
      }
      if (!has_grid) {
        if (!has_explicit) throw InvalidInput("manifest line " + std::to_string(line) + ": run needs grid= or repr=");
        LossConfig c;
        c.repr.kind = parse_repr_kind(repr);
        if (c.repr.kind == ReprKind::scaled_disparity) c.repr = ReprConfig::scaled(0.1, 100.0);
        c.ssim = false;
        for (const auto& f : split(illum, ',')) {
          if (f == "ssim") c.ssim = true;
          else if (f == "brightness") c.brightness = true;
          else if (f == "dw_ssim") c.dw_ssim = true;
          else if (f != "l1") throw InvalidInput("manifest line " + std::to_string(line) + ": unknown illum '" + f + "'");
        }
        c.occlusion = parse_occlusion(occ);
        for (const auto& f : split(dyn, ',')) {
          if (f == "auto_mask") c.auto_mask = true;
          else if (f == "uncertainty") c.uncertainty = true;
          else if (f == "motion_map") c.motion_map = true;
          else throw InvalidInput("manifest line " + std::to_string(line) + ": unknown dyn '" + f + "'");
        }
        c.grid_id = name;
        r.label = name.empty() ? "custom" : name;
        r.config = c;
      }
      if (!variance.empty()) {
        if (variance != "on" && variance != "off") {
          throw InvalidInput("manifest line " + std::to_string(line) + ": variance must be on or off");
        }
        r.config.variance_regularizer = variance == "on";
        if (variance == "off") r.label += "-novar";
      }
      if (!has_scene || !has_seed) {
        throw InvalidInput("manifest line " + std::to_string(line) + ": run needs scene= and seed=");
      }
      r.config.warm_up_steps = static_cast<int>(r.schedule.warm_up_steps);
      r.config.validate();
      m.runs.push_back(std::move(r));
    } else {
      throw InvalidInput("manifest line " + std::to_string(line) + ": unknown directive '" + key + "'");
    }
  }
  m.validate();
  return m;
}

std::string scene_label(const std::string& scene) {
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), scene) != names.end()) return scene;
  return std::filesystem::path(scene).stem().string();
}

namespace {

SceneSpec load_scene(const std::string& scene, std::uint64_t seed) {
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), scene) != names.end()) return preset(scene, seed);
  std::ifstream is(scene);
  if (!is) return preset(scene, seed);  // reports the valid preset names
  SceneSpec s = parse_scene(is);
  s.seed = seed;
  return s;
}

}  // namespace

RunResult execute_run(const RunSpec& spec, const std::filesystem::path& dir, Exec exec) {
  RunResult r;
  r.spec = spec;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const RenderedScene scene = render(load_scene(spec.scene, spec.seed));
    FitReport fit;
    try {
      fit = run(spec.config, spec.schedule, scene.frames, spec.seed, tuned_adam(spec.config), 10.0, exec);
    } catch (const DivergenceError& e) {
      r.status = "diverged";
      r.detail = e.what();
      r.steps = e.step;
    }
    if (r.status.empty()) {
      r.steps = fit.steps;
      r.terms = fit.final_record.terms;
      for (int s = 0; s < fit.state.params.sources; ++s) {
        r.poses.push_back(fit.state.params.pose(s));
        r.brightness.push_back(fit.state.params.brightness(s));
      }
      if (fit.variance_collapsed) {
        r.status = "collapsed";
        r.detail = "depth variance fell below the degeneracy threshold";
      } else {
        r.status = fit.converged ? "converged" : "max_steps";
      }
      try {
        r.metrics = evaluate(fit.depth, scene.gt.depth);
        r.has_metrics = true;
      } catch (const InvalidInput& e) {
        r.detail = e.what();
      }
      if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        write_pfm(fit.depth, dir / "depth.pfm");
        save_checkpoint(fit.state, dir / "checkpoint.bin");
        std::ofstream curve(dir / "curve.csv");
        write_curve_csv(fit.curve, curve);
      }
    }
  } catch (const std::exception& e) {
    r.status = "error";
    r.detail = e.what();
  }
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "metrics.json") << metrics_json(r) << '\n';
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string metrics_json(const RunResult& r) {
  nlohmann::ordered_json j;
  j["label"] = r.spec.label;
  j["grid_id"] = r.spec.config.grid_id;
  j["config"] = r.spec.config.describe();
  j["variance_regularizer"] = r.spec.config.variance_active();
  j["prior_sota"] = is_prior_sota(r.spec.config.grid_id);
  j["scene"] = r.spec.scene;
  j["seed"] = r.spec.seed;
  j["max_steps"] = r.spec.schedule.max_steps;
  j["status"] = r.status;
  j["detail"] = r.detail;
  j["steps"] = r.steps;
  if (r.has_metrics) {
    const auto& m = r.metrics;
    j["metrics"] = {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel},   {"rmse", m.rmse},     {"rmse_log", m.rmse_log},
                    {"delta1", m.delta1},   {"delta2", m.delta2},   {"delta3", m.delta3}, {"pixels", m.pixels}};
    j["scale_ratio"] = m.scale;
  } else {
    j["metrics"] = nullptr;
    j["scale_ratio"] = nullptr;
  }
  nlohmann::ordered_json terms = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.terms) terms[k] = v;
  j["terms"] = terms;
  nlohmann::ordered_json poses = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < r.poses.size(); ++s) {
    const auto& p = r.poses[s];
    poses.push_back({{"r", {p.r.x(), p.r.y(), p.r.z()}},
                     {"t", {p.t.x(), p.t.y(), p.t.z()}},
                     {"a", r.brightness[s].a},
                     {"b", r.brightness[s].b}});
  }
  j["sources"] = poses;
  return j.dump(2);
}

namespace {

std::string csv_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const char* const kTermColumns[] = {"photometric", "smooth_depth", "smooth_motion", "motion_sparsity", "variance"};

}  // namespace

void write_results_csv(const std::vector<RunResult>& rows, std::ostream& os) {
  os << "label,grid_id,scene,seed,status,steps,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,scale_ratio";
  for (const char* t : kTermColumns) os << ',' << t;
  os << ",wall_seconds\n";
  for (const auto& r : rows) {
    os << r.spec.label << ',' << r.spec.config.grid_id << ',' << r.spec.scene << ',' << r.spec.seed << ',' << r.status
       << ',' << r.steps;
    if (r.has_metrics) {
      const auto& m = r.metrics;
      for (double v : {m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3, m.scale}) {
        os << ',' << csv_num(v);
      }
    } else {
      for (int k = 0; k < 8; ++k) os << ',';
    }
    for (const char* t : kTermColumns) {
      os << ',';
      for (const auto& [k, v] : r.terms) {
        if (k == t) os << csv_num(v);
      }
    }
    os << ',' << csv_num(r.wall_seconds) << '\n';
  }
}

ManifestResult run_manifest(const RunManifest& m, std::ostream* progress) {
  m.validate();
  ManifestResult out;
  out.rows.resize(m.runs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  // Nested OpenMP would oversubscribe the pool; workers run their kernels serially.
  const Exec exec = m.jobs > 1 ? Exec::serial : default_exec();
  auto worker = [&]() {
    for (std::size_t k = next++; k < m.runs.size(); k = next++) {
      const RunSpec& spec = m.runs[k];
      const auto dir = m.out_dir / spec.label / scene_label(spec.scene) / std::to_string(spec.seed);
      out.rows[k] = execute_run(spec, dir, exec);
      if (progress) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *progress << spec.label << ' ' << spec.scene << ' ' << spec.seed << ": " << out.rows[k].status << '\n';
      }
    }
  };
  const int n = std::min<int>(m.jobs, static_cast<int>(m.runs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::filesystem::create_directories(m.out_dir);
  {
    std::ofstream csv(m.out_dir / "results.csv");
    write_results_csv(out.rows, csv);
  }
  // Scale consistency per configuration, across scenes and seeds.
  nlohmann::ordered_json report = nlohmann::ordered_json::object();
  std::vector<std::string> labels;
  for (const auto& r : out.rows) {
    if (std::find(labels.begin(), labels.end(), r.spec.label) == labels.end()) labels.push_back(r.spec.label);
  }
  for (const auto& label : labels) {
    std::vector<double> ratios;
    for (const auto& r : out.rows) {
      if (r.spec.label == label && r.has_metrics) ratios.push_back(r.metrics.scale);
    }
    if (ratios.empty()) continue;
    const ScaleReport sr = scale_report(ratios);
    report[label] = {{"ratios", sr.ratios}, {"mean", sr.mean}, {"stddev", sr.stddev}};
  }
  std::ofstream(m.out_dir / "scale_report.json") << report.dump(2) << '\n';
  out.all_converged = std::all_of(out.rows.begin(), out.rows.end(), [](const RunResult& r) { return r.status == "converged"; });
  return out;
}

}  // namespace photocon
