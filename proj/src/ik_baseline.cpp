#include "skelformer/ik_baseline.hpp"

#include <cmath>

#include "skelformer/body_ops.hpp"
#include "skelformer/graph.hpp"
#include "skelformer/lbfgs.hpp"
#include "skelformer/rotmath.hpp"

namespace skelformer {

namespace {

// so(3) generators.
const Mat3d& generator(int k) {
  static const Mat3d gx = (Mat3d() << 0, 0, 0, 0, 0, -1, 0, 1, 0).finished();
  static const Mat3d gy = (Mat3d() << 0, 0, 1, 0, 0, 0, -1, 0, 0).finished();
  static const Mat3d gz = (Mat3d() << 0, -1, 0, 1, 0, 0, 0, 0, 0).finished();
  switch (k) {
    case 0:
      return gx;
    case 1:
      return gy;
    default:
      return gz;
  }
}

struct State_t {
  PoseParams pose;
  VecXd beta;
};

// Right Jacobian of the SO(3) exponential: exp(w + d) ~ exp(w) exp(Jr(w) d).
Mat3d right_jacobian(const Vec3d& w) {
  const double theta = w.norm();
  const Mat3d k = skew<double>(w);
  if (theta < 1e-4) {
    return Mat3d::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double t2 = theta * theta;
  return Mat3d::Identity() - (1.0 - std::cos(theta)) / t2 * k +
         (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

}  // namespace

FitResult fit_frame_initialized(const BodyModel& model,
                                const MatXd& realized_regressor,
                                const MeanPose& mean,
                                const KeypointFrame& keypoints,
                                const PoseParams& init_pose,
                                const ShapeParams& init_shape,
                                const FitConfig& cfg) {
  cfg.validate();
  if (keypoints.visible_count() < 4) {
    throw InsufficientConstraints(
        "fit_frame: need at least 4 visible keypoints");
  }
  const int joints = model.joint_count();
  const int shape_dim = model.shape_dim();
  if (static_cast<int>(mean.theta_m.size()) != joints) {
    throw ShapeMismatch("fit_frame: mean pose joint count mismatch");
  }

  auto mc = ad::ModelConsts<double>::make(model, realized_regressor);
  auto parent = std::make_shared<const std::vector<int>>(model.skeleton.parent);
  auto vis = std::make_shared<ad::Vec<double>>(keypoints.joint_count());
  for (Eigen::Index i = 0; i < keypoints.joint_count(); ++i) {
    (*vis)[i] = keypoints.visible[static_cast<size_t>(i)] ? 1.0 : 0.0;
  }

  // Optimization variables: per-joint tangent increments from the initial
  // rotations, shape coefficients, and root translation, as one flat vector.
  const Eigen::Index dim = 3 * joints + shape_dim + 3;
  auto decode = [&](const VecXd& x) {
    State_t state;
    state.pose = init_pose;
    for (int j = 0; j < joints; ++j) {
      state.pose.local_rotations[static_cast<size_t>(j)] =
          init_pose.local_rotations[static_cast<size_t>(j)] *
          expmap<double>(Vec3d(x.segment<3>(3 * j)));
    }
    state.beta = x.segment(3 * joints, shape_dim);
    state.pose.root_translation = x.tail<3>();
    return state;
  };

  double last_residual = 0.0;
  auto objective = [&](const VecXd& x, VecXd& grad) -> double {
    const State_t state = decode(x);

    ad::Mat<double> thetas(joints, 9);
    for (int j = 0; j < joints; ++j) {
      ad::row_from_mat3(thetas, j,
                        state.pose.local_rotations[static_cast<size_t>(j)]);
    }
    ad::Mat<double> g_thetas = ad::Mat<double>::Zero(joints, 9);
    ad::Mat<double> g_beta = ad::Mat<double>::Zero(1, shape_dim);
    ad::Mat<double> g_trans = ad::Mat<double>::Zero(1, 3);
    double residual = 0.0;
    {
      ad::Graph<double> g;
      auto th = g.param(thetas, &g_thetas);
      auto be = g.param(ad::Mat<double>(state.beta.transpose()), &g_beta);
      auto tr = g.param(
          ad::Mat<double>(state.pose.root_translation.transpose()), &g_trans);
      auto globals = chain_products9(th, parent, 1);
      auto pos = fk_positions(globals, be, mc, 1);
      auto verts = slice_rows(pos, joints, model.vertex_count());
      auto kp = regress_batch(verts, mc, 1);
      auto kp_t = add_batch_rows(kp, tr);
      auto target = g.input(ad::Mat<double>(keypoints.positions));
      // The residual is the SUM of the smooth-L1 over visible entries so the
      // joint-summed prior keeps a consistent scale.
      auto loss = scale(
          smooth_l1_loss(kp_t, target, cfg.smooth_l1_delta, vis),
          static_cast<double>(keypoints.visible_count() * 3));
      residual = loss.value()(0, 0);
      g.backward(loss);
    }
    last_residual = residual;

    double prior = 0.0;
    for (int j = 0; j < joints; ++j) {
      const Mat3d& rj = state.pose.local_rotations[static_cast<size_t>(j)];
      const Mat3d gbar = ad::mat3_from_row(g_thetas, j);
      Vec3d g_local;
      Mat3d prior_part = Mat3d::Zero();
      if (cfg.lambda_prior > 0.0) {
        const Mat3d& mj = mean.theta_m[static_cast<size_t>(j)];
        const double c = std::clamp(
            ((mj.transpose() * rj).trace() - 1.0) / 2.0, -1.0, 1.0);
        const double theta = std::acos(c);
        prior += cfg.lambda_prior * theta * theta;
        const double factor =
            -cfg.lambda_prior * theta / std::max(std::sin(theta), 1e-6);
        prior_part = factor * (mj.transpose() * rj);
      }
      for (int k = 0; k < 3; ++k) {
        g_local[k] = (gbar.transpose() * rj * generator(k)).trace() +
                     (prior_part * generator(k)).trace();
      }
      // Chain through the right Jacobian of the chart.
      const Vec3d w = x.segment<3>(3 * j);
      grad.segment<3>(3 * j) = right_jacobian(w).transpose() * g_local;
    }
    grad.segment(3 * joints, shape_dim) = g_beta.row(0).transpose();
    grad.tail<3>() = g_trans.row(0).transpose();
    return residual + prior;
  };

  LbfgsOptions opt;
  opt.memory = 60;
  opt.max_iters = cfg.max_iters;
  opt.grad_tol = cfg.tolerance;
  opt.wolfe_c1 = cfg.armijo_c;
  opt.wolfe_c2 = 0.1;
  opt.max_line_iters = cfg.max_backtracks;

  VecXd x0 = VecXd::Zero(dim);
  x0.segment(3 * joints, shape_dim) = init_shape.beta;
  x0.tail<3>() = init_pose.root_translation;
  const LbfgsResult res = lbfgs_minimize(objective, x0, opt);

  // Evaluate once more at the solution so the reported residual matches it.
  VecXd grad_dummy(dim);
  const double f_final = objective(res.x, grad_dummy);

  const State_t state = decode(res.x);
  FitResult out;
  out.pose = state.pose;
  out.shape = ShapeParams::clamped(state.beta);
  // Report the residual as a per-entry mean for interpretability.
  out.residual =
      last_residual / static_cast<double>(keypoints.visible_count() * 3);
  out.objective = f_final;
  out.iterations = res.iterations;
  return out;
}

std::pair<PoseParams, ShapeParams> tpose_init(const BodyModel& model,
                                              const MatXd& realized_regressor,
                                              const KeypointFrame& keypoints) {
  // The global spin is the worst nonconvexity and has a closed-form
  // estimate, so the root frame is pre-aligned rigidly (Kabsch).
  PoseParams pose = PoseParams::identity(model.joint_count());
  ShapeParams shape = ShapeParams::zero(model.shape_dim());
  const auto fk = forward_kinematics(model, pose, shape);
  const MatXd kp0 = realized_regressor * fk.vertices;
  Vec3d target_c = Vec3d::Zero(), rest_c = Vec3d::Zero();
  int n = 0;
  for (Eigen::Index i = 0; i < keypoints.joint_count(); ++i) {
    if (!keypoints.visible[static_cast<size_t>(i)]) continue;
    target_c += keypoints.positions.row(i).transpose();
    rest_c += kp0.row(i).transpose();
    ++n;
  }
  target_c /= n;
  rest_c /= n;
  Mat3d cov = Mat3d::Zero();
  for (Eigen::Index i = 0; i < keypoints.joint_count(); ++i) {
    if (!keypoints.visible[static_cast<size_t>(i)]) continue;
    cov += (keypoints.positions.row(i).transpose() - target_c) *
           (kp0.row(i).transpose() - rest_c).transpose();
  }
  bool degenerate = true;
  const Mat3d root = detail::orthogonalize_svd(cov, &degenerate);
  if (!degenerate) {
    pose.local_rotations[0] = root;
  }
  pose.root_translation = target_c - pose.local_rotations[0] * rest_c;
  return {pose, shape};
}

FitResult fit_frame(const BodyModel& model, const MatXd& realized_regressor,
                    const MeanPose& mean, const KeypointFrame& keypoints,
                    const FitConfig& cfg) {
  if (keypoints.visible_count() < 4) {
    throw InsufficientConstraints(
        "fit_frame: need at least 4 visible keypoints");
  }
  const auto [pose, shape] = tpose_init(model, realized_regressor, keypoints);
  return fit_frame_initialized(model, realized_regressor, mean, keypoints,
                               pose, shape, cfg);
}

}  // namespace skelformer
