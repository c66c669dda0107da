#include "skelformer/augment.hpp"

#include "skelformer/rotmath.hpp"

namespace skelformer {

AugmentedSample augment(const AugmentConfig& cfg, const BodyModel& model,
                        const MatXd& realized_regressor,
                        const KeypointLayout& layout,
                        const MotionSample& sample, Rng& rng) {
  cfg.validate();
  const int jk = layout.joint_count();

  AugmentedSample out;
  out.pose = sample.pose;
  out.shape = sample.shape;
  MatXd clean = sample.keypoints.positions;

  // 1. Shape augmentation, before keypoint corruption; clean keypoints are
  // recomputed from the reshaped body.
  if (cfg.shape_noise_std.size() > 0 && cfg.shape_noise_std.maxCoeff() > 0.0) {
    VecXd beta = out.shape.beta;
    for (Eigen::Index b = 0; b < beta.size(); ++b) {
      beta[b] += rng.normal(0.0, cfg.shape_noise_std[b]);
    }
    out.shape = ShapeParams::clamped(beta);
    const auto fk = forward_kinematics(model, out.pose, out.shape);
    clean = realized_regressor * fk.vertices;
  }

  // 2. Mirroring: keypoints reflect across YZ with left/right identity swap;
  // targets mirror jointly.
  if (rng.bernoulli(cfg.mirror_prob)) {
    MatXd mirrored(jk, 3);
    for (int i = 0; i < jk; ++i) {
      const int src = layout.mirror_map[i];
      mirrored(i, 0) = -clean(src, 0);
      mirrored(i, 1) = clean(src, 1);
      mirrored(i, 2) = clean(src, 2);
    }
    clean = std::move(mirrored);
    out.pose = mirror_pose(model.skeleton, out.pose);
  }

  // 3. Yaw about the vertical axis through the root joint. The root joint
  // coincides with the pose translation, so rotating the pose root about it
  // reproduces the keypoint transform exactly.
  auto rotate_about_root = [&](const Mat3d& r) {
    const Vec3d c = out.pose.root_translation;
    clean = ((clean.rowwise() - c.transpose()) * r.transpose()).rowwise() +
            c.transpose();
    out.pose.local_rotations[0] = r * out.pose.local_rotations[0];
  };
  if (cfg.yaw_range > 0.0) {
    rotate_about_root(rot_y(rng.uniform(-cfg.yaw_range, cfg.yaw_range)));
  }

  // 4. Occasional 90-degree pitch: lying/sleeping posture.
  if (rng.bernoulli(cfg.lie_down_prob)) {
    rotate_about_root(rot_x(rng.bernoulli(0.5) ? kPi / 2 : -kPi / 2));
  }

  // 5. Per-joint Gaussian noise scaled by the confidence sigma table.
  MatXd corrupted = clean;
  if (cfg.noise_scale > 0.0) {
    for (int i = 0; i < jk; ++i) {
      corrupted.row(i) +=
          rng.normal_vec3(cfg.noise_scale * cfg.sigma_table[i]).transpose();
    }
  }

  // 6. Outlier injection: rare large shifts that masking did not catch.
  if (cfg.outlier_prob > 0.0) {
    for (int i = 0; i < jk; ++i) {
      if (rng.bernoulli(cfg.outlier_prob)) {
        corrupted.row(i) += rng.normal_vec3(cfg.outlier_std).transpose();
      }
    }
  }

  // 7. Masking: visibility flips, positions stay as corrupted.
  out.corrupted.positions = std::move(corrupted);
  out.corrupted.visible.assign(static_cast<size_t>(jk), true);
  if (cfg.mask_prob > 0.0) {
    for (int i = 0; i < jk; ++i) {
      if (rng.bernoulli(cfg.mask_prob)) {
        out.corrupted.visible[static_cast<size_t>(i)] = false;
      }
    }
  }
  return out;
}

}  // namespace skelformer
