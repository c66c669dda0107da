#pragma once

#include <string>
#include <vector>

#include "skelformer/common.hpp"
#include "skelformer/keypoints.hpp"

namespace skelformer {

/// Kinematic tree with rest bone vectors. Joint 0 is the root (parent -1,
/// zero rest offset); mirror_map pairs mediolateral counterparts.
struct Skeleton {
  std::vector<int> parent;
  MatXd rest_offsets;  // J x 3, bone vector from parent in parent frame
  std::vector<std::string> names;
  std::vector<int> mirror_map;

  int joint_count() const { return static_cast<int>(parent.size()); }
  void validate() const;
};

/// Tree distance (edge count) between every pair of joints.
Eigen::MatrixXi kinematic_distances(const Skeleton& skel);

/// 24-joint mediolaterally symmetric humanoid used as the desk-scale body.
Skeleton toy_skeleton();

/// Keypoint layout that mirrors the skeleton one-to-one.
KeypointLayout identity_layout(const Skeleton& skel);

}  // namespace skelformer
