// Command-line front end: ablation sweeps, scene rendering, grid-id lookup, evaluation.
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "photocon/io.hpp"
#include "photocon/runner.hpp"
#include "photocon/synth.hpp"

using namespace photocon;

namespace {

int cmd_run(const std::string& manifest_path, const std::string& out, int jobs, const std::optional<long>& seed,
            const std::string& grid, const std::string& scene, const std::optional<long>& max_steps, bool json) {
  RunManifest m;
  if (!manifest_path.empty()) {
    std::ifstream is(manifest_path);
    if (!is) throw InvalidInput("cannot open manifest " + manifest_path);
    m = parse_manifest(is);
  } else {
    if (grid.empty() || scene.empty()) throw InvalidInput("run: give --manifest, or both --grid and --scene");
    std::istringstream one("run grid=" + grid + " scene=" + scene + " seed=" + std::to_string(seed.value_or(0)));
    m = parse_manifest(one);
  }
  // Flag overrides apply to every run in the manifest.
  for (auto& r : m.runs) {
    if (seed) r.seed = static_cast<std::uint64_t>(*seed);
    if (max_steps) r.schedule.max_steps = *max_steps;
    if (!manifest_path.empty() && !grid.empty()) {
      const bool novar = !r.config.variance_regularizer;
      r.config = resolve_grid_id(grid);
      r.config.variance_regularizer = !novar;
      r.label = grid + (novar ? "-novar" : "");
    }
    if (!manifest_path.empty() && !scene.empty()) r.scene = scene;
  }
  if (!out.empty()) m.out_dir = out;
  if (jobs > 0) m.jobs = jobs;
  const ManifestResult res = run_manifest(m, json ? nullptr : &std::cerr);
  if (json) {
    nlohmann::ordered_json summary;
    summary["out"] = m.out_dir.string();
    summary["all_converged"] = res.all_converged;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& r : res.rows) {
      auto rec = nlohmann::ordered_json::parse(metrics_json(r));
      rec["wall_seconds"] = r.wall_seconds;
      runs.push_back(rec);
    }
    summary["runs"] = runs;
    std::cout << summary.dump(2) << '\n';
  } else {
    std::cout << "wrote " << (m.out_dir / "results.csv").string() << '\n';
  }
  return res.all_converged ? 0 : 1;
}

int cmd_render(const std::string& scene, long seed, const std::string& out) {
  SceneSpec spec;
  if (std::ifstream is(scene); is) {
    spec = parse_scene(is);
    spec.seed = static_cast<std::uint64_t>(seed);
  } else {
    spec = preset(scene, static_cast<std::uint64_t>(seed));
  }
  const RenderedScene rs = render(spec);
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  write_pgm(rs.frames.target, dir / "target.pgm");
  write_pfm(rs.gt.depth, dir / "depth.pfm");
  Image dyn(rs.gt.dynamic.height, rs.gt.dynamic.width);
  for (std::size_t k = 0; k < dyn.size(); ++k) dyn[k] = rs.gt.dynamic[k];
  write_pgm(dyn, dir / "dynamic.pgm");
  for (std::size_t s = 0; s < rs.frames.sources.size(); ++s) {
    const std::string tag = "source" + std::to_string(rs.spec.offsets[s]);
    write_pgm(rs.frames.sources[s], dir / (tag + ".pgm"));
    write_pfm(rs.gt.source_depth[s], dir / (tag + "_depth.pfm"));
    Image occ(dyn.height, dyn.width);
    for (std::size_t k = 0; k < occ.size(); ++k) occ[k] = rs.gt.sources[s].occluded[k];
    write_pgm(occ, dir / (tag + "_occluded.pgm"));
  }
  std::ofstream(dir / "scene.txt") << [&] {
    std::ostringstream os;
    write_scene(rs.spec, os);
    return os.str();
  }();
  const VerifyReport v = verify(rs);
  std::cout << "rendered " << rs.spec.name << " to " << dir.string() << "\nverify: max residual " << v.max_residual
            << " over " << v.visible_pixels << " jointly visible pixels (interpolation error vs target "
            << v.max_photometric << ")\n";
  return 0;
}

int cmd_resolve(const std::string& id) {
  const LossConfig c = resolve_grid_id(id);
  std::cout << id << ": " << c.describe() << (is_prior_sota(id) ? "  [prior state of the art]" : "") << '\n';
  return 0;
}

int cmd_evaluate(const std::string& pred, const std::string& gt, double cap, bool no_median) {
  const DepthMetrics m = evaluate(read_pfm(pred), read_pfm(gt), cap, !no_median);
  nlohmann::ordered_json j = {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rmse", m.rmse},
                              {"rmse_log", m.rmse_log}, {"delta1", m.delta1}, {"delta2", m.delta2},
                              {"delta3", m.delta3},     {"scale_ratio", m.scale}, {"pixels", m.pixels}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photometric depth/pose direct optimization and ablation runner"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an ablation manifest (or a single grid/scene/seed)");
  std::string manifest, out, grid, scene;
  int jobs = 0;
  std::optional<long> seed, max_steps;
  bool json = false;
  run->add_option("--manifest", manifest, "Manifest file");
  run->add_option("--out", out, "Output directory (overrides the manifest)");
  run->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Seed for every run");
  run->add_option("--grid", grid, "Grid id (R0..C4)");
  run->add_option("--scene", scene, "Scene preset or scene file");
  run->add_option("--max-steps", max_steps, "Step budget per run");
  run->add_flag("--json", json, "Print a JSON summary on stdout");

  auto* render = app.add_subcommand("render", "Render a scene and its ground truth");
  std::string r_scene = "static", r_out = "scene_out";
  long r_seed = 0;
  render->add_option("--scene", r_scene, "Scene preset or scene file");
  render->add_option("--seed", r_seed, "Texture seed");
  render->add_option("--out", r_out, "Output directory");

  auto* resolve = app.add_subcommand("resolve", "Print the loss configuration of a grid id");
  std::string id;
  resolve->add_option("id", id, "Grid id")->required();

  auto* eval = app.add_subcommand("evaluate", "Depth metrics of a PFM prediction against PFM ground truth");
  std::string pred, gt;
  double cap = kDepthCap;
  bool no_median = false;
  eval->add_option("--pred", pred)->required();
  eval->add_option("--gt", gt)->required();
  eval->add_option("--cap", cap, "Depth cap in meters");
  eval->add_flag("--no-median", no_median, "Disable median scaling");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(manifest, out, jobs, seed, grid, scene, max_steps, json);
    if (*render) return cmd_render(r_scene, r_seed, r_out);
    if (*resolve) return cmd_resolve(id);
    if (*eval) return cmd_evaluate(pred, gt, cap, no_median);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
