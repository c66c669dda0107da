#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "skelformer/joint_regressor.hpp"
#include "skelformer/rng.hpp"

using namespace skelformer;

namespace {

PoseParams random_pose(const Skeleton& skel, Rng& rng, double max_angle = 1.2) {
  PoseParams pose = PoseParams::identity(skel.joint_count());
  for (auto& r : pose.local_rotations) {
    r = expmap<double>(rng.uniform(0.0, max_angle) * rng.unit_vec3());
  }
  pose.root_translation = rng.normal_vec3(0.2);
  return pose;
}

std::vector<RegressorFitSample> make_samples(const ToyBodyModel& toy,
                                             const JointRegressor& gt, int n,
                                             std::uint64_t seed) {
  const MatXd realized = gt.realized();
  std::vector<RegressorFitSample> samples;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "regressor_sample", i));
    RegressorFitSample s;
    s.pose = random_pose(toy.model.skeleton, rng);
    VecXd beta(toy.model.shape_dim());
    for (int b = 0; b < beta.size(); ++b) beta[b] = rng.normal();
    s.shape = ShapeParams::clamped(beta);
    const auto fk = forward_kinematics(toy.model, s.pose, s.shape);
    s.target_keypoints = realized * fk.vertices;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

TEST_CASE("uniform logits regress every joint to the vertex centroid") {
  JointRegressor reg;
  reg.phi = MatXd::Zero(5, 40);
  reg.temperature = 10.0;
  const MatXd verts = MatXd::Random(40, 3);
  const MatXd k = regress_keypoints(reg, verts);
  const Eigen::RowVector3d centroid = verts.colwise().mean();
  for (int i = 0; i < 5; ++i) {
    CHECK((k.row(i) - centroid).norm() < 1e-12);
  }
}

TEST_CASE("a saturated logit pins the joint to that vertex") {
  JointRegressor reg;
  reg.phi = MatXd::Zero(1, 30);
  reg.phi(0, 17) = 1000.0;
  reg.temperature = 10.0;
  const MatXd verts = MatXd::Random(30, 3);
  const MatXd k = regress_keypoints(reg, verts);
  CHECK((k.row(0) - verts.row(17)).norm() < 1e-9);
}

TEST_CASE("regressed joints lie inside the vertex hull (support test)") {
  Rng rng(313);
  const MatXd verts = MatXd::Random(60, 3);
  for (int trial = 0; trial < 100; ++trial) {
    JointRegressor reg;
    reg.phi = MatXd::Random(8, 60) * rng.uniform(1.0, 30.0);
    reg.temperature = 10.0;
    const MatXd k = regress_keypoints(reg, verts);
    // A hull member never beats the support function in any direction.
    for (int d = 0; d < 20; ++d) {
      const Vec3d dir = rng.unit_vec3();
      const double hull_max = (verts * dir).maxCoeff();
      CHECK((k * dir).maxCoeff() <= hull_max + 1e-12);
    }
    // Realized weights are row-stochastic by construction.
    const MatXd w = reg.realized();
    for (int r = 0; r < w.rows(); ++r) {
      CHECK(w.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(w.row(r).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("centroid targets make zero logits a global optimum") {
  const auto toy = build_toy_body_model(7);
  Rng rng(317);
  RegressorFitSample s;
  s.pose = random_pose(toy.model.skeleton, rng);
  s.shape = ShapeParams::zero(toy.model.shape_dim());
  const auto fk = forward_kinematics(toy.model, s.pose, s.shape);
  s.target_keypoints = MatXd(24, 3);
  const Eigen::RowVector3d centroid = fk.vertices.colwise().mean();
  for (int i = 0; i < 24; ++i) s.target_keypoints.row(i) = centroid;

  const auto report = fit_regressor(toy.model, {s}, 10.0, 50);
  // phi = 0 realizes the centroid exactly, so the fit cannot do better.
  JointRegressor zero;
  zero.phi = MatXd::Zero(24, toy.model.vertex_count());
  zero.temperature = 10.0;
  const double zero_loss =
      (regress_keypoints(zero, fk.vertices) - s.target_keypoints)
          .squaredNorm() /
      24.0;
  CHECK(report.final_loss <= zero_loss + 1e-12);
}

TEST_CASE("planted regressor is symmetric and sparse") {
  const auto toy = build_toy_body_model(7);
  const auto layout = identity_layout(toy.model.skeleton);
  const auto gt = plant_toy_regressor(toy, layout, 99);
  const MatXd w = gt.realized();
  for (int k = 0; k < layout.joint_count(); ++k) {
    CHECK(w.row(k).sum() == doctest::Approx(1.0).epsilon(1e-9));
    const int mk = layout.mirror_map[k];
    for (int v = 0; v < toy.model.vertex_count(); ++v) {
      CHECK(w(mk, toy.vertex_mirror[static_cast<size_t>(v)]) ==
            doctest::Approx(w(k, v)).epsilon(1e-9));
    }
  }
  const VecXd eff = effective_support(gt);
  for (int k = 0; k < eff.size(); ++k) {
    CHECK(eff[k] >= 3.0);
    CHECK(eff[k] <= 10.0);
  }
}

TEST_CASE("planted regressor recovery below one millimeter") {
  const auto toy = build_toy_body_model(7);
  const auto layout = identity_layout(toy.model.skeleton);
  const auto gt = plant_toy_regressor(toy, layout, 99);
  const auto train = make_samples(toy, gt, 1000, 555);
  const auto heldout = make_samples(toy, gt, 80, 556);

  const auto report = fit_regressor(toy.model, train, 10.0, 500);
  double err_sum = 0.0;
  int count = 0;
  for (const auto& s : heldout) {
    const auto fk = forward_kinematics(toy.model, s.pose, s.shape);
    const MatXd pred = regress_keypoints(report.regressor, fk.vertices);
    for (int k = 0; k < pred.rows(); ++k) {
      err_sum += (pred.row(k) - s.target_keypoints.row(k)).norm();
      ++count;
    }
  }
  const double mean_err = err_sum / count;
  CHECK(mean_err < 0.001);

  // Effective supports at T=10 land in the 3..10 band for >= 90% of joints.
  const VecXd eff = effective_support(report.regressor);
  int in_band = 0;
  for (int k = 0; k < eff.size(); ++k) {
    in_band += (eff[k] >= 3.0 && eff[k] <= 10.0) ? 1 : 0;
  }
  CHECK(in_band * 10 >= 9 * eff.size());

  // A sharp temperature still converges; the comparison condition from the
  // planted experiment.
  const auto sharp = fit_regressor(toy.model, train, 0.1, 120);
  CHECK(std::isfinite(sharp.final_loss));
  CHECK(effective_support(sharp.regressor).allFinite());
}

TEST_CASE("fit_regressor rejects empty input") {
  const auto toy = build_toy_body_model(7);
  CHECK_THROWS_AS((void)fit_regressor(toy.model, {}, 10.0, 10), ShapeMismatch);
}
