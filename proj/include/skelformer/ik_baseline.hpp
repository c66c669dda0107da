#pragma once

#include "skelformer/body_model.hpp"
#include "skelformer/keypoints.hpp"
#include "skelformer/mean_pose.hpp"

namespace skelformer {

/// Iterative IK fit settings: adaptive first-order steps (previous accepted
/// step, doubled) with Armijo backtracking, tangent-space rotation updates
/// retracted onto SO(3), and a quadratic geodesic pull toward the mean pose.
struct FitConfig {
  int max_iters = 300;
  double lambda_prior = 1e-3;
  double tolerance = 1e-6;     // infinity-norm gradient stop
  double smooth_l1_delta = 0.01;
  double init_step = 1e-2;
  double armijo_c = 1e-4;
  int max_backtracks = 30;

  void validate() const {
    if (max_iters < 1 || lambda_prior < 0.0) {
      throw DegenerateInput("FitConfig: invalid settings");
    }
  }
};

struct FitResult {
  PoseParams pose;
  ShapeParams shape;
  double residual = 0.0;   // final keypoint term (visible smooth-L1 mean)
  double objective = 0.0;  // residual + prior
  int iterations = 0;
};

/// Fits pose/shape/translation to visible keypoints from a T-pose start.
/// Requires at least 4 visible keypoints.
FitResult fit_frame(const BodyModel& model, const MatXd& realized_regressor,
                    const MeanPose& mean, const KeypointFrame& keypoints,
                    const FitConfig& cfg);

/// T-pose initialization used by fit_frame: identity limb rotations with the
/// root frame rigidly pre-aligned (Kabsch) to the visible keypoints.
std::pair<PoseParams, ShapeParams> tpose_init(const BodyModel& model,
                                              const MatXd& realized_regressor,
                                              const KeypointFrame& keypoints);

/// Same objective, warm-started from a given prediction (e.g. the network).
FitResult fit_frame_initialized(const BodyModel& model,
                                const MatXd& realized_regressor,
                                const MeanPose& mean,
                                const KeypointFrame& keypoints,
                                const PoseParams& init_pose,
                                const ShapeParams& init_shape,
                                const FitConfig& cfg);

}  // namespace skelformer
