#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "photocon/runner.hpp"

using namespace photocon;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunManifest parse(const std::string& text) {
  std::istringstream is(text);
  return parse_manifest(is);
}

}  // namespace

TEST_CASE("grid ids resolve to valid configurations") {
  CHECK(grid_ids().size() == 33);
  for (const std::string& id : grid_ids()) {
    INFO(id);
    const LossConfig c = resolve_grid_id(id);
    CHECK_NOTHROW(c.validate());
    CHECK(c.grid_id == id);
  }
  CHECK(is_prior_sota("S2"));
  CHECK_FALSE(is_prior_sota("M3"));
  CHECK_THROWS_WITH_AS(resolve_grid_id("Z9"), doctest::Contains("M3"), InvalidInput);
}

TEST_CASE("grid rows select the documented handlers") {
  const LossConfig m0 = resolve_grid_id("M0"), m1 = resolve_grid_id("M1"), m3 = resolve_grid_id("M3");
  CHECK_FALSE(m0.auto_mask);
  CHECK_FALSE(m0.motion_map);
  CHECK(m1.auto_mask);
  CHECK_FALSE(m1.motion_map);
  CHECK(m3.auto_mask);
  CHECK(m3.motion_map);
  CHECK(resolve_grid_id("S2").repr.kind == ReprKind::scaled_disparity);
  CHECK(resolve_grid_id("L0").repr.kind == ReprKind::softplus);
  CHECK(resolve_grid_id("L0").occlusion == Occlusion::none);
  CHECK_FALSE(resolve_grid_id("L0").auto_mask);
}

TEST_CASE("manifest parsing") {
  const RunManifest m = parse(
      "# comment\n"
      "out /tmp/x\n"
      "jobs 3\n"
      "max_steps 500\n"
      "run grid=M3 scene=fast-lateral-object seed=1\n"
      "run grid=L0 scene=static seed=2 variance=off levels=1   # trailing\n"
      "run name=mine repr=scaled illum=ssim,brightness occ=MR dyn=motion_map scene=static seed=3\n");
  CHECK(m.out_dir == "/tmp/x");
  CHECK(m.jobs == 3);
  REQUIRE(m.runs.size() == 3);
  CHECK(m.runs[0].schedule.max_steps == 500);
  CHECK(m.runs[1].label == "L0-novar");
  CHECK_FALSE(m.runs[1].config.variance_regularizer);
  CHECK(m.runs[1].schedule.levels == 1);
  CHECK(m.runs[2].config.brightness);
  CHECK(m.runs[2].config.motion_map);
  CHECK(m.runs[2].config.occlusion == Occlusion::min_reprojection);
  CHECK(m.runs[2].config.repr.kind == ReprKind::scaled_disparity);
}

TEST_CASE("manifest errors name the line") {
  CHECK_THROWS_WITH_AS(parse("run grid=M3 seed=1\n"), doctest::Contains("line 1"), InvalidInput);
  CHECK_THROWS_WITH_AS(parse("\nrun grid=M3 scene=static seed=x\n"), doctest::Contains("line 2"), InvalidInput);
  CHECK_THROWS_AS(parse("frobnicate 1\n"), InvalidInput);
  CHECK_THROWS_AS(parse(""), InvalidInput);
  CHECK_THROWS_WITH_AS(parse("run grid=M3 scene=static seed=1\nrun grid=M3 scene=static seed=1\n"),
                       doctest::Contains("duplicate"), InvalidInput);
  CHECK_THROWS_AS(parse("run name=x repr=softplus dyn=auto_mask,uncertainty scene=static seed=1\n"), ConfigError);
  CHECK_THROWS_AS(parse("run grid=M3 repr=softplus scene=static seed=1\n"), InvalidInput);
}

TEST_CASE("manifest results do not depend on the worker count") {
  const fs::path root = fs::temp_directory_path() / ("photocon_runner_" + std::to_string(::getpid()));
  const std::string body =
      "max_steps 12\nlevels 2\nwarm_up 4\n"
      "run grid=M3 scene=fast-lateral-object seed=1\n"
      "run grid=S2 scene=static seed=2\n"
      "run grid=C4 scene=occluder seed=3\n";
  RunManifest a = parse(body), b = parse(body);
  a.out_dir = root / "a";
  a.jobs = 1;
  b.out_dir = root / "b";
  b.jobs = 2;
  const ManifestResult ra = run_manifest(a);
  const ManifestResult rb = run_manifest(b);
  REQUIRE(ra.rows.size() == 3);
  CHECK_FALSE(ra.all_converged);
  for (std::size_t k = 0; k < 3; ++k) {
    const RunSpec& s = ra.rows[k].spec;
    const fs::path rel = fs::path(s.label) / scene_label(s.scene) / std::to_string(s.seed);
    const std::string ja = slurp(a.out_dir / rel / "metrics.json");
    CHECK_FALSE(ja.empty());
    CHECK(ja == slurp(b.out_dir / rel / "metrics.json"));
    CHECK(ra.rows[k].status == "max_steps");
    CHECK(fs::exists(a.out_dir / rel / "depth.pfm"));
    CHECK(fs::exists(a.out_dir / rel / "curve.csv"));
    CHECK(fs::exists(a.out_dir / rel / "checkpoint.bin"));
    const auto j = nlohmann::json::parse(ja);
    CHECK(j.contains("metrics"));
  }
  CHECK(fs::exists(a.out_dir / "results.csv"));
  CHECK(fs::exists(a.out_dir / "scale_report.json"));
  fs::remove_all(root);
}

TEST_CASE("a failing run is reported, not thrown") {
  RunSpec s;
  s.label = "bad";
  s.config = resolve_grid_id("M0");
  s.scene = "/nonexistent/scene.txt";
  s.seed = 1;
  s.schedule.max_steps = 5;
  s.schedule.warm_up_steps = 0;
  const RunResult r = execute_run(s, {});
  CHECK(r.status == "error");
  CHECK_FALSE(r.detail.empty());
}
