#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "photocon/losses.hpp"

namespace photocon {

/// Non-finite loss or gradient. `term` names the loss term (or "grad:<group>").
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string term, long step);
  std::string term;
  long step;
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Per parameter group, indexed by Group.
  std::array<double, 6> lr{1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4};

  double& rate(Group g) { return lr[static_cast<std::size_t>(g)]; }
  [[nodiscard]] double rate(Group g) const { return lr[static_cast<std::size_t>(g)]; }
};

/// In-place Adam update of one parameter vector; `t` is the 1-based bias-correction step.
void adam_update(std::vector<double>& params, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& grad, double lr, const AdamSettings& adam, long t);

struct OptimState {
  ParamSet params;
  ParamSet m;
  ParamSet v;
  long step = 0;       ///< global step counter (drives warm-ups)
  long adam_step = 0;  ///< bias-correction counter, reset when moments reset
  std::uint64_t seed = 0;
  int level = 0;       ///< coarse-to-fine level index, 0 = coarsest

  /// Zeroes the moments and the bias-correction counter.
  void reset_moments();
};

/// x decodes to `init_depth` everywhere, perturbed by `init_noise` (relative, seeded);
/// identity poses, log sigma 0, a = 1, b = 0.
OptimState init_state(const LossConfig& cfg, int height, int width, int n_sources, std::uint64_t seed,
                      double init_depth = 10.0, double init_noise = 0.0);

struct Schedule {
  long max_steps = 20000;
  /// Motion map stays frozen at zero before this many steps.
  long warm_up_steps = 200;
  /// Auto-mask is held at 1 before this many steps (breaks the identity-pose tie).
  long auto_mask_warm_up = 50;
  int levels = 3;
  double tolerance = 1e-7;
  long window = 100;

  void validate() const;
};

/// Groups the config actually uses (x and pose always; motion, log sigma, a/b on demand).
std::array<bool, 6> active_groups(const LossConfig& cfg);

/// One Adam update. Throws DivergenceError on a non-finite loss term or gradient.
LossRecord step(OptimState& state, const LossConfig& cfg, const FrameSet& frames, const Schedule& sched,
                const AdamSettings& adam, Exec exec = default_exec());

struct CurvePoint {
  long step = 0;
  int level = 0;
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};

struct FitReport {
  OptimState state;           ///< full-resolution final state
  std::vector<CurvePoint> curve;
  LossRecord final_record;
  bool converged = false;
  long steps = 0;
  bool variance_collapsed = false;  ///< final depth variance below kVarianceEps
  DepthMap depth;             ///< decoded final depth
};

/// Box-averages images by an integer factor and adapts the intrinsics.
FrameSet downsample(const FrameSet& frames, int factor);

/// Bilinear resampling with pixel-center alignment.
Grid<double> resample(const Grid<double>& in, int height, int width);

/// Coarse-to-fine optimization. Each level gets an equal share of the first half of
/// `max_steps`; the finest level gets the rest. Levels end early on convergence.
FitReport run(const LossConfig& cfg, const Schedule& sched, const FrameSet& frames, std::uint64_t seed,
              const AdamSettings& adam = {}, double init_depth = 10.0, Exec exec = default_exec());

struct GradProbe {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool kink_excluded = false;
};

struct GradCheckReport {
  Group group = Group::depth;
  std::vector<GradProbe> probes;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
};

struct GradCheckOptions {
  bool motion_active = true;
  bool auto_mask_active = true;
  /// Floor on the denominator of the relative error.
  double atol = 1e-10;
  Exec exec = default_exec();
};

/// Fourth-order central differences on `n_probes` coordinates of `group` with all detached
/// quantities frozen at `params`. For the depth group `h` is a relative depth change; for
/// the others an absolute step. Probes whose evaluations change a discrete decision
/// (argmin, validity, bilinear cell, |.| sign) are reported as kink-excluded. Coordinates
/// with a non-zero analytic gradient are preferred when enough exist.
GradCheckReport grad_check(const LossConfig& cfg, const FrameSet& frames, const ParamSet& params, Group group,
                           double h, int n_probes, std::uint64_t seed, const GradCheckOptions& options = {});

void save_checkpoint(const OptimState& state, const std::filesystem::path& path);
OptimState load_checkpoint(const std::filesystem::path& path);

/// step,level,total,<term columns>
void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& os);

}  // namespace photocon
