#pragma once

#include <vector>

#include "skelformer/body_model.hpp"
#include "skelformer/common.hpp"

namespace skelformer {

/// Temperature-softmax joint regressor K = softmax_rows(phi / T) * V. The
/// realized weights are row-stochastic in [0,1] by construction.
struct JointRegressor {
  MatXd phi;  // J x V trainable logits
  double temperature = 10.0;

  int joint_count() const { return static_cast<int>(phi.rows()); }
  int vertex_count() const { return static_cast<int>(phi.cols()); }

  /// Row-softmax of phi / T.
  MatXd realized() const;
};

/// K = realized(reg) * vertices. Each output joint is a convex combination of
/// vertices.
MatXd regress_keypoints(const JointRegressor& reg, const MatXd& vertices);

/// exp(row entropy) of the realized weights: the effective number of
/// vertices contributing to each keypoint.
VecXd effective_support(const JointRegressor& reg);

struct RegressorFitSample {
  PoseParams pose;
  ShapeParams shape;
  MatXd target_keypoints;  // J x 3
};

struct RegressorFitReport {
  JointRegressor regressor;
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Fits phi by minimizing mean squared keypoint error with L-BFGS
/// (memory 10, strong Wolfe, gradient tolerance 1e-6, <= 500 iterations).
/// The temperature is held fixed.
RegressorFitReport fit_regressor(const BodyModel& model,
                                 const std::vector<RegressorFitSample>& samples,
                                 double temperature = 10.0,
                                 int max_iters = 500);

/// Ground-truth regressor for the toy body: each keypoint is a sparse convex
/// combination of 4-8 vertices near its anchor joint, mediolaterally
/// symmetric so that mirrored poses produce mirrored keypoints exactly.
JointRegressor plant_toy_regressor(const ToyBodyModel& toy,
                                   const KeypointLayout& layout,
                                   std::uint64_t seed,
                                   double temperature = 10.0);

}  // namespace skelformer
