#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "photocon/direct_opt.hpp"
#include "photocon/metrics.hpp"

namespace photocon {

/// All ids in table order: R0..R5, S0..S5, L0..L5, M0..M4, D0..D4, C0..C4.
const std::vector<std::string>& grid_ids();

/// Loss configuration of a named ablation row. Throws InvalidInput listing the valid ids.
LossConfig resolve_grid_id(const std::string& id);

/// True for the row marked as the earlier state of the art (S2).
bool is_prior_sota(const std::string& id);

/// Per-group Adam rates used by the runner. The base rate is 1e-4; groups whose
/// parameterization makes that impractically slow for per-pixel optimization are raised.
AdamSettings tuned_adam(const LossConfig& cfg);

struct RunSpec {
  std::string label;   ///< grid id, or the name given to an explicit configuration
  LossConfig config;
  std::string scene;   ///< preset name or path to a scene file
  std::uint64_t seed = 0;
  Schedule schedule;
};

struct RunManifest {
  std::vector<RunSpec> runs;
  std::filesystem::path out_dir = "runs";
  int jobs = 1;

  /// Throws InvalidInput on an empty manifest or a repeated (config, scene, seed) triple.
  void validate() const;
};

/// Manifest text: one directive per line, '#' starts a comment.
///   out <dir> | jobs <n> | max_steps <n> | levels <n> | warm_up <n>   (defaults for later runs)
///   run grid=<id> scene=<preset|file> seed=<n> [max_steps=] [levels=] [warm_up=] [variance=on|off]
///   run name=<label> repr=<disparity|scaled|softplus> [illum=ssim,brightness,dw_ssim|l1]
///       [occ=none|MR|DC|MR+DC] [dyn=auto_mask,uncertainty,motion_map] scene=... seed=...
RunManifest parse_manifest(std::istream& is);

struct RunResult {
  RunSpec spec;
  std::string status;  ///< converged | max_steps | collapsed | diverged | error
  std::string detail;
  bool has_metrics = false;
  DepthMetrics metrics;
  std::vector<std::pair<std::string, double>> terms;
  long steps = 0;
  std::vector<PoseSE3> poses;
  std::vector<BrightnessParams> brightness;
  double wall_seconds = 0.0;
};

/// Renders the scene, optimizes, evaluates and writes metrics.json, curve.csv, depth.pfm
/// and checkpoint.bin into `dir` (skipped when empty). Never throws for run failures.
RunResult execute_run(const RunSpec& spec, const std::filesystem::path& dir, Exec exec = default_exec());

/// Deterministic JSON record of a run (no timing).
std::string metrics_json(const RunResult& r);

/// Aggregate table, one row per run; the last column is wall time.
void write_results_csv(const std::vector<RunResult>& rows, std::ostream& os);

struct ManifestResult {
  std::vector<RunResult> rows;  ///< manifest order
  bool all_converged = false;
};

/// Runs on a pool of `jobs` workers; results do not depend on the pool size. Writes
/// <out>/<label>/<scene>/<seed>/..., <out>/results.csv and <out>/scale_report.json.
ManifestResult run_manifest(const RunManifest& m, std::ostream* progress = nullptr);

/// Path component for a run's scene (preset name or file stem).
std::string scene_label(const std::string& scene);

}  // namespace photocon
