#pragma once

#include <vector>

#include "skelformer/common.hpp"
#include "skelformer/rotmath.hpp"
#include "skelformer/skeleton.hpp"

namespace skelformer {

/// Shape coefficients, clamped to |beta_i| <= 5 at construction.
struct ShapeParams {
  VecXd beta;

  static ShapeParams clamped(VecXd b) {
    if (!b.allFinite()) throw NonFinite("ShapeParams: non-finite coefficient");
    ShapeParams s;
    s.beta = b.cwiseMax(-5.0).cwiseMin(5.0);
    return s;
  }
  static ShapeParams zero(int dim) {
    ShapeParams s;
    s.beta = VecXd::Zero(dim);
    return s;
  }
};

struct PoseParams {
  std::vector<Mat3d> local_rotations;
  Vec3d root_translation = Vec3d::Zero();

  static PoseParams identity(int joints) {
    PoseParams p;
    p.local_rotations.assign(static_cast<size_t>(joints), Mat3d::Identity());
    return p;
  }
};

/// Parametric body: kinematic tree, template mesh, linear shape directions
/// and skinning weights.
struct BodyModel {
  Skeleton skeleton;
  MatXd template_vertices;  // V x 3
  MatXd shape_dirs;         // (3V) x B, rows [3v..3v+2] move vertex v
  MatXd joint_shape_dirs;   // (3J) x B, rows [3j..3j+2] move rest offset j
  MatXd skinning_weights;   // V x J, row-stochastic

  int joint_count() const { return skeleton.joint_count(); }
  int vertex_count() const {
    return static_cast<int>(template_vertices.rows());
  }
  int shape_dim() const { return static_cast<int>(shape_dirs.cols()); }
  void validate() const;

  /// Shaped bone vectors, J x 3.
  MatXd shaped_offsets(const ShapeParams& shape) const;
  /// Shaped template vertices, V x 3.
  MatXd shaped_vertices(const ShapeParams& shape) const;
};

struct FkResult {
  MatXd joints;                // J x 3, world frame
  MatXd vertices;              // V x 3, world frame
  std::vector<Mat3d> globals;  // per-joint global rotations
};

/// Rigid chain composition plus linear blend skinning. Models with an empty
/// mesh produce empty vertices.
FkResult forward_kinematics(const BodyModel& model, const PoseParams& pose,
                            const ShapeParams& shape);

/// Mediolateral reflection of a pose: rotations conjugated by diag(-1,1,1)
/// and swapped left/right via the skeleton mirror map.
PoseParams mirror_pose(const Skeleton& skel, const PoseParams& pose);

struct ToyBodyModel {
  BodyModel model;
  std::vector<int> vertex_mirror;  // mediolateral counterpart per vertex
};

/// Deterministic capsule-segment body with mediolateral symmetry.
ToyBodyModel build_toy_body_model(std::uint64_t seed, int vertices_total = 600,
                                  int shape_dim = 16);

}  // namespace skelformer
