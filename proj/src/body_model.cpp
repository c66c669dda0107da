#include "skelformer/body_model.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "skelformer/rng.hpp"

namespace skelformer {

void BodyModel::validate() const {
  skeleton.validate();
  const int j = joint_count();
  const int v = vertex_count();
  const int b = shape_dim();
  if (shape_dirs.rows() != 3 * v || joint_shape_dirs.rows() != 3 * j ||
      joint_shape_dirs.cols() != b || skinning_weights.rows() != v ||
      skinning_weights.cols() != j) {
    throw ShapeMismatch("BodyModel: field sizes disagree");
  }
  for (int i = 0; i < v; ++i) {
    if (skinning_weights.row(i).minCoeff() < 0.0 ||
        std::abs(skinning_weights.row(i).sum() - 1.0) > 1e-9) {
      throw DegenerateInput("BodyModel: skinning weights not row-stochastic");
    }
  }
}

MatXd BodyModel::shaped_offsets(const ShapeParams& shape) const {
  const int j = joint_count();
  MatXd out = skeleton.rest_offsets;
  if (shape.beta.size() > 0) {
    const VecXd delta = joint_shape_dirs * shape.beta;
    out += Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(
               delta.data(), 3, j)
               .transpose();
  }
  return out;
}

MatXd BodyModel::shaped_vertices(const ShapeParams& shape) const {
  const int v = vertex_count();
  MatXd out = template_vertices;
  if (shape.beta.size() > 0 && v > 0) {
    const VecXd delta = shape_dirs * shape.beta;
    out += Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(
               delta.data(), 3, v)
               .transpose();
  }
  return out;
}

FkResult forward_kinematics(const BodyModel& model, const PoseParams& pose,
                            const ShapeParams& shape) {
  const int j = model.joint_count();
  const int v = model.vertex_count();
  if (static_cast<int>(pose.local_rotations.size()) != j) {
    throw ShapeMismatch("forward_kinematics: pose joint count mismatch");
  }
  const MatXd offsets = model.shaped_offsets(shape);

  FkResult out;
  out.globals.resize(static_cast<size_t>(j));
  out.joints.resize(j, 3);
  MatXd rest_joints(j, 3);  // shaped rest positions, root pinned at origin

  out.globals[0] = pose.local_rotations[0];
  out.joints.row(0).setZero();
  rest_joints.row(0).setZero();
  for (int i = 1; i < j; ++i) {
    const int p = model.skeleton.parent[i];
    const Vec3d r = offsets.row(i).transpose();
    out.globals[static_cast<size_t>(i)] =
        out.globals[static_cast<size_t>(p)] * pose.local_rotations[static_cast<size_t>(i)];
    out.joints.row(i) = out.joints.row(p) +
                        (out.globals[static_cast<size_t>(p)] * r).transpose();
    rest_joints.row(i) = rest_joints.row(p) + offsets.row(i);
  }

  if (v > 0) {
    const MatXd shaped = model.shaped_vertices(shape);
    out.vertices = MatXd::Zero(v, 3);
    for (int i = 0; i < j; ++i) {
      const Mat3d& g = out.globals[static_cast<size_t>(i)];
      const Vec3d d = out.joints.row(i).transpose() -
                      g * rest_joints.row(i).transpose();
      MatXd transformed = shaped * g.transpose();
      transformed.rowwise() += d.transpose();
      out.vertices += model.skinning_weights.col(i).asDiagonal() * transformed;
    }
    out.vertices.rowwise() += pose.root_translation.transpose();
  } else {
    out.vertices.resize(0, 3);
  }
  out.joints.rowwise() += pose.root_translation.transpose();
  return out;
}

PoseParams mirror_pose(const Skeleton& skel, const PoseParams& pose) {
  const int j = skel.joint_count();
  if (static_cast<int>(pose.local_rotations.size()) != j) {
    throw ShapeMismatch("mirror_pose: pose joint count mismatch");
  }
  PoseParams out;
  out.local_rotations.resize(static_cast<size_t>(j));
  for (int i = 0; i < j; ++i) {
    out.local_rotations[static_cast<size_t>(i)] = reflect_rotation_yz(
        pose.local_rotations[static_cast<size_t>(skel.mirror_map[i])]);
  }
  out.root_translation = reflect_point_yz(pose.root_translation);
  return out;
}

namespace {

// Per-joint capsule radius for the toy mesh, indexed by bone end joint.
double bone_radius(const std::string& name) {
  if (name.find("spine") != std::string::npos) return 0.115;
  if (name == "neck") return 0.055;
  if (name == "head") return 0.09;
  if (name.find("hip") != std::string::npos) return 0.075;
  if (name.find("knee") != std::string::npos) return 0.065;
  if (name.find("ankle") != std::string::npos) return 0.05;
  if (name.find("foot") != std::string::npos) return 0.04;
  if (name.find("collar") != std::string::npos) return 0.06;
  if (name.find("shoulder") != std::string::npos) return 0.055;
  if (name.find("elbow") != std::string::npos) return 0.045;
  if (name.find("wrist") != std::string::npos) return 0.04;
  return 0.03;  // hands
}

struct BoneVertex {
  Vec3d position;
  int joint;          // bone end joint
  double blend;       // weight on the end joint (rest on parent)
};

// Generates n vertices along the bone parent->joint with ring angles closed
// under theta -> pi - theta, so midline bones stay mediolaterally symmetric.
std::vector<BoneVertex> bone_vertices(const Skeleton& skel,
                                      const MatXd& rest_pos, int joint, int n,
                                      Rng& rng, bool midline) {
  const int parent = skel.parent[joint];
  const Vec3d a = rest_pos.row(parent).transpose();
  const Vec3d b = rest_pos.row(joint).transpose();
  Vec3d axis = b - a;
  const double len = axis.norm();
  axis = len > 1e-12 ? Vec3d(axis / len) : Vec3d::UnitY();
  // Ring frame: u has the lateral (x) direction, w completes it. For bones
  // along +-Y this makes u = +X exactly, which the midline pairing relies on.
  Vec3d u = Vec3d::UnitX() - Vec3d::UnitX().dot(axis) * axis;
  if (u.norm() < 1e-6) u = Vec3d::UnitZ() - Vec3d::UnitZ().dot(axis) * axis;
  u.normalize();
  const Vec3d w = axis.cross(u);

  const double base_r = bone_radius(skel.names[static_cast<size_t>(joint)]);
  static const double kAngles[4] = {kPi / 4, 3 * kPi / 4, 5 * kPi / 4,
                                    7 * kPi / 4};
  std::vector<BoneVertex> out;
  out.reserve(static_cast<size_t>(n));
  const int rings = (n + 3) / 4;
  for (int ring = 0; ring < rings && static_cast<int>(out.size()) < n; ++ring) {
    const double t0 = (ring + 0.5) / rings;
    // Geometry jitter is per ring so midline bones keep their theta ->
    // pi - theta pairing.
    const double t = std::clamp(t0 + rng.uniform(-0.03, 0.03), 0.05, 0.95);
    const double r = base_r * (0.85 + 0.3 * rng.uniform()) *
                     (0.75 + 0.5 * std::sin(kPi * t));
    for (int k = 0; k < 4 && static_cast<int>(out.size()) < n; ++k) {
      const double theta = kAngles[k];
      BoneVertex bv;
      bv.position = a + t * (b - a) + r * (std::cos(theta) * u + std::sin(theta) * w);
      bv.joint = joint;
      // Distinct skinning blends per vertex: vertices sharing an identical
      // blend would move rigidly together and be indistinguishable to any
      // regressor fit on motion data. Midline bones share the jitter within
      // a mirror pair (k even/odd) to preserve symmetry.
      const double jitter = rng.uniform(-0.12, 0.12);
      bv.blend = std::clamp(0.25 + 0.5 * t + jitter, 0.02, 0.98);
      if (midline && (k % 2) == 1 && !out.empty()) {
        bv.blend = out.back().blend;  // pair partner gets the same blend
      }
      out.push_back(bv);
    }
  }
  return out;
}

}  // namespace

ToyBodyModel build_toy_body_model(std::uint64_t seed, int vertices_total,
                                  int shape_dim) {
  ToyBodyModel out;
  BodyModel& m = out.model;
  m.skeleton = toy_skeleton();
  const int j = m.skeleton.joint_count();

  MatXd rest_pos(j, 3);
  rest_pos.row(0).setZero();
  for (int i = 1; i < j; ++i) {
    rest_pos.row(i) =
        rest_pos.row(m.skeleton.parent[i]) + m.skeleton.rest_offsets.row(i);
  }

  // Bones in canonical order: midline bones and the left bone of each pair.
  std::vector<int> canonical;
  int midline_count = 0;
  for (int i = 1; i < j; ++i) {
    if (m.skeleton.mirror_map[i] == i) {
      canonical.push_back(i);
      ++midline_count;
    } else if (i < m.skeleton.mirror_map[i]) {
      canonical.push_back(i);
    }
  }
  const int paired = static_cast<int>(canonical.size()) - midline_count;
  // Paired bones contribute twice. Distribute the budget evenly and give the
  // remainder to the head bone.
  const int slots = midline_count + 2 * paired;
  int per_bone = vertices_total / slots;
  per_bone -= per_bone % 2;  // even count keeps midline rings paired
  int remainder = vertices_total - per_bone * slots;

  Rng rng(derive_seed(seed, "toy_mesh"));
  std::vector<Vec3d> positions;
  std::vector<int> mirror;
  MatXd weights = MatXd::Zero(vertices_total, j);

  auto push_vertex = [&](const Vec3d& pos, int joint, double blend,
                         int mirror_index) {
    positions.push_back(pos);
    mirror.push_back(mirror_index);
    const int v = static_cast<int>(positions.size()) - 1;
    weights(v, joint) = blend;
    weights(v, m.skeleton.parent[joint]) = 1.0 - blend;
    return v;
  };

  for (int bone : canonical) {
    const bool midline = m.skeleton.mirror_map[bone] == bone;
    int count = per_bone;
    if (midline && m.skeleton.names[static_cast<size_t>(bone)] == "head") {
      count += remainder;  // absorb rounding in the head capsule
    }
    const auto verts = bone_vertices(m.skeleton, rest_pos, bone, count, rng,
                                     midline);
    if (midline) {
      // Ring angles come in (theta, pi - theta) consecutive pairs; an odd
      // trailing vertex would have no partner and is dropped.
      for (size_t k = 0; k + 1 < verts.size(); k += 2) {
        const int a = push_vertex(verts[k].position, bone, verts[k].blend, 0);
        const int b =
            push_vertex(verts[k + 1].position, bone, verts[k + 1].blend, 0);
        mirror[static_cast<size_t>(a)] = b;
        mirror[static_cast<size_t>(b)] = a;
      }
    } else {
      const int other = m.skeleton.mirror_map[bone];
      for (const auto& bv : verts) {
        const int a = push_vertex(bv.position, bone, bv.blend, 0);
        Vec3d reflected = reflect_point_yz(bv.position);
        const int b = push_vertex(reflected, other, bv.blend, 0);
        mirror[static_cast<size_t>(a)] = b;
        mirror[static_cast<size_t>(b)] = a;
      }
    }
  }

  const int v_total = static_cast<int>(positions.size());
  m.template_vertices.resize(v_total, 3);
  for (int i = 0; i < v_total; ++i) {
    m.template_vertices.row(i) = positions[static_cast<size_t>(i)].transpose();
  }
  m.skinning_weights = weights.topRows(v_total);
  out.vertex_mirror = mirror;

  // Column-normalized skinning map used to attach joints to the mesh fields.
  MatXd joint_from_verts = m.skinning_weights.transpose();
  for (int i = 0; i < j; ++i) {
    const double s = joint_from_verts.row(i).sum();
    if (s > 0) joint_from_verts.row(i) /= s;
  }

  // Smooth random shape fields, mediolaterally symmetric by construction:
  // sample on the canonical vertex and reflect onto its counterpart.
  Rng field_rng(derive_seed(seed, "toy_shape_fields"));
  MatXd dirs(3 * v_total, shape_dim);
  for (int b = 0; b < shape_dim; ++b) {
    std::array<std::array<double, 7>, 3> coef{};
    for (auto& axis_coef : coef) {
      for (auto& c : axis_coef) c = field_rng.normal();
    }
    std::array<Vec3d, 3> freq;
    std::array<double, 3> phase{};
    for (int c = 0; c < 3; ++c) {
      freq[static_cast<size_t>(c)] =
          Vec3d(field_rng.uniform(0.8, 3.0), field_rng.uniform(0.8, 3.0),
                field_rng.uniform(0.8, 3.0));
      phase[static_cast<size_t>(c)] = field_rng.uniform(0.0, 2 * kPi);
    }
    auto field = [&](const Vec3d& x) {
      Vec3d d;
      for (int c = 0; c < 3; ++c) {
        const auto& a = coef[static_cast<size_t>(c)];
        const double s = freq[static_cast<size_t>(c)].dot(x) +
                         phase[static_cast<size_t>(c)];
        d[c] = a[0] * std::sin(s) + a[1] * std::cos(0.7 * s) +
               a[2] * std::sin(1.9 * s + a[3]) + 0.5 * a[4] * x.y() +
               0.3 * a[5] * x.x() + 0.3 * a[6] * x.z();
      }
      return d;
    };
    for (int i = 0; i < v_total; ++i) {
      if (mirror[static_cast<size_t>(i)] < i) continue;
      const Vec3d d = field(positions[static_cast<size_t>(i)]);
      dirs.block<3, 1>(3 * i, b) = d;
      dirs.block<3, 1>(3 * mirror[static_cast<size_t>(i)], b) =
          reflect_point_yz(d);
    }
  }

  // Pelvis-anchor each field so shape changes never translate the root.
  for (int b = 0; b < shape_dim; ++b) {
    Vec3d pelvis_drift = Vec3d::Zero();
    for (int i = 0; i < v_total; ++i) {
      pelvis_drift += joint_from_verts(0, i) * dirs.block<3, 1>(3 * i, b);
    }
    for (int i = 0; i < v_total; ++i) {
      dirs.block<3, 1>(3 * i, b) -= pelvis_drift;
    }
  }

  // Orthogonalize the fields and scale to ~1 cm RMS per unit coefficient.
  for (int b = 0; b < shape_dim; ++b) {
    for (int k = 0; k < b; ++k) {
      dirs.col(b) -= dirs.col(k).dot(dirs.col(b)) * dirs.col(k);
    }
    const double norm = dirs.col(b).norm();
    if (norm < 1e-12) {
      throw DegenerateInput("build_toy_body_model: degenerate shape field");
    }
    dirs.col(b) *= 0.01 * std::sqrt(3.0 * v_total) / norm;
  }
  m.shape_dirs = dirs;

  // Joint shape directions follow the mesh: per-joint position field, then
  // differenced along bones so FK offsets stay consistent with the flesh.
  MatXd joint_pos_dirs(3 * j, shape_dim);
  for (int b = 0; b < shape_dim; ++b) {
    for (int i = 0; i < j; ++i) {
      Vec3d p = Vec3d::Zero();
      for (int v = 0; v < v_total; ++v) {
        if (joint_from_verts(i, v) != 0.0) {
          p += joint_from_verts(i, v) * dirs.block<3, 1>(3 * v, b);
        }
      }
      joint_pos_dirs.block<3, 1>(3 * i, b) = p;
    }
  }
  m.joint_shape_dirs = MatXd::Zero(3 * j, shape_dim);
  for (int i = 1; i < j; ++i) {
    m.joint_shape_dirs.middleRows(3 * i, 3) =
        joint_pos_dirs.middleRows(3 * i, 3) -
        joint_pos_dirs.middleRows(3 * m.skeleton.parent[i], 3);
  }

  m.validate();
  return out;
}

}  // namespace skelformer
