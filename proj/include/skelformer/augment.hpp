#pragma once

#include "skelformer/dataset.hpp"
#include "skelformer/rng.hpp"

namespace skelformer {

/// Online augmentation knobs. Noise scales are meters; sigma_table is a
/// per-joint multiplier (keypoint noise stddev = noise_scale * sigma_table).
struct AugmentConfig {
  double mask_prob = 0.20;
  double yaw_range = kPi;  // yaw drawn uniformly in [-yaw_range, yaw_range]
  double lie_down_prob = 0.05;
  double noise_scale = 0.05;
  double mirror_prob = 0.50;
  VecXd shape_noise_std;  // per coefficient
  double outlier_prob = 0.01;
  double outlier_std = 1.0;
  VecXd sigma_table;  // per keypoint

  static AugmentConfig defaults(int shape_dim, int keypoints) {
    AugmentConfig cfg;
    cfg.shape_noise_std = VecXd::Ones(shape_dim);
    cfg.sigma_table = VecXd::Ones(keypoints);
    return cfg;
  }

  /// Everything off: output equals input exactly.
  static AugmentConfig disabled(int shape_dim, int keypoints) {
    AugmentConfig cfg = defaults(shape_dim, keypoints);
    cfg.mask_prob = 0.0;
    cfg.yaw_range = 0.0;
    cfg.lie_down_prob = 0.0;
    cfg.noise_scale = 0.0;
    cfg.mirror_prob = 0.0;
    cfg.shape_noise_std.setZero();
    cfg.outlier_prob = 0.0;
    return cfg;
  }

  void validate() const {
    for (double p : {mask_prob, lie_down_prob, mirror_prob, outlier_prob}) {
      if (p < 0.0 || p > 1.0) {
        throw DegenerateInput("AugmentConfig: probability outside [0,1]");
      }
    }
  }
};

/// Corrupted inputs plus the transformed targets that stay consistent with
/// the geometric part of the augmentation.
struct AugmentedSample {
  KeypointFrame corrupted;
  PoseParams pose;
  ShapeParams shape;
};

/// Applies, in order: shape resampling (clean keypoints recomputed), mirror,
/// yaw about the root joint, occasional 90-degree pitch (lying posture),
/// per-joint Gaussian noise, outlier injection, and attention masking.
/// Masked joints keep their (noised) positions; only `visible` flips.
AugmentedSample augment(const AugmentConfig& cfg, const BodyModel& model,
                        const MatXd& realized_regressor,
                        const KeypointLayout& layout,
                        const MotionSample& sample, Rng& rng);

}  // namespace skelformer
