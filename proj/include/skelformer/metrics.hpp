#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "skelformer/body_model.hpp"
#include "skelformer/dataset.hpp"

namespace skelformer {

/// Standard pose-estimation metrics; distances in millimeters, rotation
/// error in degrees, PCK/AUC as fractions in [0, 1].
struct EvalResult {
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double mpvpe = 0.0;
  double pa_mpvpe = 0.0;
  double pck150 = 0.0;
  double auc = 0.0;
  double rot_error_deg = 0.0;

  EvalResult& operator+=(const EvalResult& o);
  EvalResult& operator/=(double d);
};

/// Root-centered MPJPE/MPVPE, Procrustes-aligned variants, PCK@150mm, AUC
/// over thresholds 0..150mm in 5mm steps, and mean local geodesic rotation
/// error.
EvalResult evaluate(const MatXd& pred_joints, const MatXd& pred_vertices,
                    const PoseParams& pred_pose, const MatXd& gt_joints,
                    const MatXd& gt_vertices, const PoseParams& gt_pose,
                    int root_index = 0);

struct SolverOutput {
  PoseParams pose;
  ShapeParams shape;
};
using Solver = std::function<SolverOutput(const KeypointFrame&)>;

enum class SweepAxis { noise_sigma_mm, occlusion_frac, endpoints };

std::string to_string(SweepAxis axis);

struct SweepPoint {
  double value = 0.0;
  double gt_noise_mm = 0.0;  // mean input displacement caused by corruption
  std::map<std::string, EvalResult> per_solver;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::noise_sigma_mm;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  std::string config_snapshot;
  std::vector<SweepPoint> points;
};

struct SweepConfig {
  SweepAxis axis = SweepAxis::noise_sigma_mm;
  std::vector<double> values;  // strictly increasing
  std::vector<std::uint64_t> seeds = {1};
  int max_frames = 128;  // evaluation frames drawn from the test split
  int threads = 0;       // 0 = library default

  static std::vector<double> default_noise_grid() {
    return {0.0, 10.0, 20.0, 30.0, 40.0, 50.0};
  }
  static std::vector<double> default_occlusion_grid() {
    return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  }
};

/// Corrupts the test frames per axis value and seed, runs every solver, and
/// aggregates metrics (mean over frames, then over seeds). Also records the
/// corruption magnitude itself as the GT-noise curve.
SweepReport run_sweep(
    const std::vector<std::pair<std::string, Solver>>& solvers,
    const BodyModel& model, const Dataset& dataset, const SweepConfig& cfg);

/// The corruption applied by the sweep harness, exposed for tests: returns
/// the corrupted frame for (axis, value) under the given stream.
KeypointFrame corrupt_frame(const KeypointFrame& clean,
                            const KeypointLayout& layout, SweepAxis axis,
                            double value, Rng& rng);

}  // namespace skelformer
