#include "skelformer/training.hpp"

#include "skelformer/rotmath.hpp"

namespace skelformer {

namespace {

double smooth_l1_mean(const MatXd& pred, const MatXd& target, double delta) {
  double acc = 0.0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double d = std::abs(pred(r, c) - target(r, c));
      acc += d < delta ? 0.5 * d * d / delta : d - 0.5 * delta;
    }
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace

LossBreakdown loss_total(const BodyModel& model, const MatXd& realized_reg,
                         const PoseParams& pred_pose,
                         const ShapeParams& pred_shape,
                         const MotionSample& target, double delta, double w_rot,
                         double w_pos, double w_shape) {
  const int jb = model.joint_count();
  if (static_cast<int>(pred_pose.local_rotations.size()) != jb ||
      static_cast<int>(target.pose.local_rotations.size()) != jb) {
    throw ShapeMismatch("loss_total: joint count mismatch");
  }
  const auto pred_fk = forward_kinematics(model, pred_pose, pred_shape);
  const auto gt_fk = forward_kinematics(model, target.pose, target.shape);

  LossBreakdown lb;
  for (int j = 0; j < jb; ++j) {
    lb.rot_local +=
        geodesic_distance(pred_pose.local_rotations[static_cast<size_t>(j)],
                          target.pose.local_rotations[static_cast<size_t>(j)]);
    lb.rot_global += geodesic_distance(pred_fk.globals[static_cast<size_t>(j)],
                                       gt_fk.globals[static_cast<size_t>(j)]);
  }
  lb.rot_local /= jb;
  lb.rot_global /= jb;

  const MatXd pred_kp = realized_reg * pred_fk.vertices;
  const MatXd gt_kp = realized_reg * gt_fk.vertices;
  lb.pos_keypoints = smooth_l1_mean(pred_kp, gt_kp, delta);
  lb.pos_vertices = smooth_l1_mean(pred_fk.vertices, gt_fk.vertices, delta);
  lb.shape = (pred_shape.beta - target.shape.beta).squaredNorm();
  lb.total = w_rot * (lb.rot_local + lb.rot_global) +
             w_pos * (lb.pos_keypoints + lb.pos_vertices) + w_shape * lb.shape;
  return lb;
}

}  // namespace skelformer
