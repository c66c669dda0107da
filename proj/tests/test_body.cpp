#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "skelformer/body_model.hpp"
#include "skelformer/joint_regressor.hpp"
#include "skelformer/rng.hpp"

using namespace skelformer;

namespace {

PoseParams random_pose(const Skeleton& skel, Rng& rng, double max_angle = 1.0) {
  PoseParams pose = PoseParams::identity(skel.joint_count());
  for (auto& r : pose.local_rotations) {
    r = expmap<double>(rng.uniform(0.0, max_angle) * rng.unit_vec3());
  }
  pose.root_translation = rng.normal_vec3(0.3);
  return pose;
}

BodyModel chain_model(int joints, const Vec3d& bone) {
  BodyModel m;
  m.skeleton.parent.resize(joints);
  m.skeleton.rest_offsets = MatXd::Zero(joints, 3);
  m.skeleton.names.resize(joints);
  m.skeleton.mirror_map.resize(joints);
  for (int i = 0; i < joints; ++i) {
    m.skeleton.parent[i] = i - 1;
    m.skeleton.names[i] = "j" + std::to_string(i);
    m.skeleton.mirror_map[i] = i;
    if (i > 0) m.skeleton.rest_offsets.row(i) = bone.transpose();
  }
  m.template_vertices.resize(0, 3);
  m.shape_dirs.resize(0, 0);
  m.joint_shape_dirs = MatXd::Zero(3 * joints, 0);
  m.skinning_weights.resize(0, joints);
  return m;
}

}  // namespace

TEST_CASE("toy skeleton and toy model are well formed") {
  const auto toy = build_toy_body_model(7);
  toy.model.validate();
  CHECK(toy.model.joint_count() == 24);
  CHECK(toy.model.vertex_count() == 600);
  CHECK(toy.model.shape_dim() == 16);

  // Skeleton offsets are mediolaterally symmetric.
  const auto& skel = toy.model.skeleton;
  for (int i = 0; i < skel.joint_count(); ++i) {
    const Vec3d o = skel.rest_offsets.row(i).transpose();
    const Vec3d om = skel.rest_offsets.row(skel.mirror_map[i]).transpose();
    CHECK((om - reflect_point_yz(o)).norm() < 1e-12);
  }
  // Mesh symmetry: template, skinning and shape dirs are mirror-consistent.
  for (int v = 0; v < toy.model.vertex_count(); ++v) {
    const int mv = toy.vertex_mirror[static_cast<size_t>(v)];
    CHECK(toy.vertex_mirror[static_cast<size_t>(mv)] == v);
    const Vec3d p = toy.model.template_vertices.row(v).transpose();
    const Vec3d pm = toy.model.template_vertices.row(mv).transpose();
    CHECK((pm - reflect_point_yz(p)).norm() < 1e-12);
    for (int jj = 0; jj < skel.joint_count(); ++jj) {
      CHECK(toy.model.skinning_weights(mv, skel.mirror_map[jj]) ==
            doctest::Approx(toy.model.skinning_weights(v, jj)).epsilon(1e-12));
    }
    for (int b = 0; b < toy.model.shape_dim(); ++b) {
      const Vec3d d = toy.model.shape_dirs.block<3, 1>(3 * v, b);
      const Vec3d dm = toy.model.shape_dirs.block<3, 1>(3 * mv, b);
      CHECK((dm - reflect_point_yz(d)).norm() < 1e-10);
    }
  }
  // Determinism of the builder.
  const auto again = build_toy_body_model(7);
  CHECK((again.model.template_vertices - toy.model.template_vertices).norm() ==
        0.0);
  CHECK((again.model.shape_dirs - toy.model.shape_dirs).norm() == 0.0);
}

TEST_CASE("kinematic distances match the BFS oracle") {
  const auto skel = toy_skeleton();
  const auto dist = kinematic_distances(skel);
  const auto oracle = oracles::bfs_tree_distances(skel.parent);
  CHECK((dist - oracle).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("identity FK equals cumulative rest offsets") {
  const auto toy = build_toy_body_model(7);
  const auto& m = toy.model;
  const auto fk = forward_kinematics(m, PoseParams::identity(m.joint_count()),
                                     ShapeParams::zero(m.shape_dim()));
  MatXd expect(m.joint_count(), 3);
  expect.row(0).setZero();
  for (int i = 1; i < m.joint_count(); ++i) {
    expect.row(i) = expect.row(m.skeleton.parent[i]) +
                    m.skeleton.rest_offsets.row(i);
  }
  CHECK((fk.joints - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((fk.vertices - m.template_vertices).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("global root rotation rotates everything rigidly") {
  const auto toy = build_toy_body_model(7);
  Rng rng(211);
  const auto base_pose = random_pose(toy.model.skeleton, rng);
  auto rotated_pose = base_pose;
  const Mat3d r = random_rotation(rng);
  rotated_pose.local_rotations[0] = r * base_pose.local_rotations[0];
  rotated_pose.root_translation = base_pose.root_translation;

  const auto shape = ShapeParams::clamped(VecXd::Random(16));
  const auto a = forward_kinematics(toy.model, base_pose, shape);
  const auto b = forward_kinematics(toy.model, rotated_pose, shape);
  const Vec3d c = base_pose.root_translation;
  for (int i = 0; i < toy.model.joint_count(); ++i) {
    const Vec3d expect = r * (a.joints.row(i).transpose() - c) + c;
    CHECK((b.joints.row(i).transpose() - expect).norm() < 1e-9);
  }
  for (int v = 0; v < toy.model.vertex_count(); v += 37) {
    const Vec3d expect = r * (a.vertices.row(v).transpose() - c) + c;
    CHECK((b.vertices.row(v).transpose() - expect).norm() < 1e-9);
  }
}

TEST_CASE("two-bone chain bends to the expected corner") {
  auto m = chain_model(3, Vec3d(1, 0, 0));
  PoseParams pose = PoseParams::identity(3);
  pose.local_rotations[1] = rot_z(kPi / 2);
  const auto fk = forward_kinematics(m, pose, ShapeParams::zero(0));
  CHECK((fk.joints.row(1) - Eigen::RowVector3d(1, 0, 0)).norm() < 1e-12);
  CHECK((fk.joints.row(2) - Eigen::RowVector3d(1, 1, 0)).norm() < 1e-12);
}

TEST_CASE("FK matches the transform-stack oracle") {
  const auto toy = build_toy_body_model(7);
  Rng rng(223);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pose = random_pose(toy.model.skeleton, rng);
    const auto shape = ShapeParams::clamped(VecXd::Random(16) * 2.0);
    const auto fk = forward_kinematics(toy.model, pose, shape);
    const MatXd offsets = toy.model.shaped_offsets(shape);
    const MatXd oracle = oracles::transform_stack_fk(
        toy.model.skeleton.parent, offsets, pose.local_rotations,
        pose.root_translation);
    CHECK((fk.joints - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("FK translation equivariance is exact") {
  const auto toy = build_toy_body_model(7);
  Rng rng(227);
  auto pose = random_pose(toy.model.skeleton, rng);
  const auto shape = ShapeParams::clamped(VecXd::Random(16));
  const Vec3d t(0.25, -1.5, 3.0);
  auto centered = pose;
  centered.root_translation = Vec3d::Zero();
  pose.root_translation = t;
  const auto a = forward_kinematics(toy.model, centered, shape);
  const auto b = forward_kinematics(toy.model, pose, shape);
  // Translation is applied as a final rowwise add, so this is bit-exact.
  MatXd expect_joints = a.joints;
  expect_joints.rowwise() += t.transpose();
  MatXd expect_vertices = a.vertices;
  expect_vertices.rowwise() += t.transpose();
  CHECK((b.joints - expect_joints).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.vertices - expect_vertices).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("FK shape blendshapes are linear at identity pose") {
  const auto toy = build_toy_body_model(7);
  const auto pose = PoseParams::identity(toy.model.joint_count());
  Rng rng(229);
  VecXd b1(16), b2(16);
  for (int i = 0; i < 16; ++i) {
    b1[i] = rng.uniform(-1.5, 1.5);
    b2[i] = rng.uniform(-1.5, 1.5);
  }
  ShapeParams s1, s2, s12, s0;
  s1.beta = b1;
  s2.beta = b2;
  s12.beta = b1 + b2;
  s0.beta = VecXd::Zero(16);
  const auto j1 = forward_kinematics(toy.model, pose, s1).joints;
  const auto j2 = forward_kinematics(toy.model, pose, s2).joints;
  const auto j12 = forward_kinematics(toy.model, pose, s12).joints;
  const auto j0 = forward_kinematics(toy.model, pose, s0).joints;
  CHECK((j1 + j2 - j0 - j12).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("regress_keypoints is linear in vertices") {
  const auto toy = build_toy_body_model(7);
  JointRegressor reg;
  Rng rng(233);
  reg.phi = MatXd::Random(24, toy.model.vertex_count()) * 5.0;
  reg.temperature = 10.0;
  const MatXd v1 = MatXd::Random(toy.model.vertex_count(), 3);
  const MatXd v2 = MatXd::Random(toy.model.vertex_count(), 3);
  const MatXd lhs = regress_keypoints(reg, 2.0 * v1 + 3.0 * v2);
  const MatXd rhs =
      2.0 * regress_keypoints(reg, v1) + 3.0 * regress_keypoints(reg, v2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mirror_pose involution and metric preservation") {
  const auto skel = toy_skeleton();
  Rng rng(239);
  const auto pose = random_pose(skel, rng, 1.5);
  const auto twice = mirror_pose(skel, mirror_pose(skel, pose));
  for (int i = 0; i < skel.joint_count(); ++i) {
    CHECK((twice.local_rotations[static_cast<size_t>(i)] -
           pose.local_rotations[static_cast<size_t>(i)])
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }
  CHECK((twice.root_translation - pose.root_translation).norm() < 1e-12);

  const auto mirrored = mirror_pose(skel, pose);
  for (int i = 0; i < skel.joint_count(); ++i) {
    const double a = geodesic_distance(
        pose.local_rotations[static_cast<size_t>(i)], Mat3d::Identity());
    const double b = geodesic_distance(
        mirrored.local_rotations[static_cast<size_t>(skel.mirror_map[i])],
        Mat3d::Identity());
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
  }
  // The identity pose is a fixed point.
  const auto id = PoseParams::identity(skel.joint_count());
  const auto mid = mirror_pose(skel, id);
  for (int i = 0; i < skel.joint_count(); ++i) {
    CHECK((mid.local_rotations[static_cast<size_t>(i)] - Mat3d::Identity())
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("FK commutes with mediolateral reflection on the toy model") {
  const auto toy = build_toy_body_model(7);
  Rng rng(241);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pose = random_pose(toy.model.skeleton, rng, 1.2);
    const auto shape = ShapeParams::clamped(VecXd::Random(16) * 1.5);
    const auto fk = forward_kinematics(toy.model, pose, shape);
    const auto mfk = forward_kinematics(
        toy.model, mirror_pose(toy.model.skeleton, pose), shape);
    for (int i = 0; i < toy.model.joint_count(); ++i) {
      const Vec3d expect =
          reflect_point_yz(Vec3d(fk.joints.row(i).transpose()));
      const int mi = toy.model.skeleton.mirror_map[i];
      CHECK((mfk.joints.row(mi).transpose() - expect).norm() < 1e-8);
    }
    for (int v = 0; v < toy.model.vertex_count(); v += 53) {
      const Vec3d expect =
          reflect_point_yz(Vec3d(fk.vertices.row(v).transpose()));
      const int mv = toy.vertex_mirror[static_cast<size_t>(v)];
      CHECK((mfk.vertices.row(mv).transpose() - expect).norm() < 1e-8);
    }
  }
}

TEST_CASE("shape params clamp at construction") {
  VecXd wild(3);
  wild << 9.0, -7.0, 1.0;
  const auto s = ShapeParams::clamped(wild);
  CHECK(s.beta[0] == 5.0);
  CHECK(s.beta[1] == -5.0);
  CHECK(s.beta[2] == 1.0);
  VecXd bad(1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS((void)ShapeParams::clamped(bad), NonFinite);
}
