// Serial reference vs OpenMP kernels on a full-size rendered frame triplet.

#include <benchmark/benchmark.h>

#include "photocon/losses.hpp"
#include "photocon/synth.hpp"
#include "photocon/warping.hpp"

using namespace photocon;

namespace {

const RenderedScene& scene() {
  static const RenderedScene sc = render(preset("fast-lateral-object", 1));
  return sc;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& state) { state.SetLabel(state.range(0) ? "parallel" : "serial"); }

void BM_Synthesize(benchmark::State& state) {
  const RenderedScene& sc = scene();
  const auto& src = sc.gt.sources[1];
  for (auto _ : state) {
    benchmark::DoNotOptimize(synthesize(sc.frames.sources[1], sc.gt.depth, src.pose, nullptr, sc.frames.cam, exec_of(state)));
  }
  label(state);
}

void BM_SynthesizeBackward(benchmark::State& state) {
  const RenderedScene& sc = scene();
  const auto& src = sc.gt.sources[1];
  const WarpResult w = synthesize(sc.frames.sources[1], sc.gt.depth, src.pose, nullptr, sc.frames.cam);
  const Grid<double> up(w.image.height, w.image.width, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(synthesize_backward(w, src.pose, sc.frames.cam, up, exec_of(state)));
  label(state);
}

void BM_Pe(benchmark::State& state) {
  const RenderedScene& sc = scene();
  for (auto _ : state) benchmark::DoNotOptimize(pe_full(sc.frames.target, sc.frames.sources[0], {}, exec_of(state)));
  label(state);
}

void BM_Compose(benchmark::State& state) {
  const RenderedScene& sc = scene();
  LossConfig cfg;
  cfg.occlusion = Occlusion::combined;
  cfg.auto_mask = true;
  cfg.motion_map = true;
  ParamSet p(sc.gt.depth.height, sc.gt.depth.width, 2);
  for (std::size_t k = 0; k < sc.gt.depth.size(); ++k) p.group(Group::depth)[k] = encode_value(sc.gt.depth[k], cfg.repr);
  for (int s = 0; s < 2; ++s) p.set_pose(s, sc.gt.sources[static_cast<std::size_t>(s)].pose);
  ComposeOptions opt;
  opt.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(compose(cfg, sc.frames, p, opt));
  label(state);
}

}  // namespace

BENCHMARK(BM_Synthesize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SynthesizeBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pe)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Compose)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
