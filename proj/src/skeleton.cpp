#include "skelformer/skeleton.hpp"

#include <algorithm>

namespace skelformer {

void Skeleton::validate() const {
  const int j = joint_count();
  if (rest_offsets.rows() != j || rest_offsets.cols() != 3 ||
      static_cast<int>(names.size()) != j ||
      static_cast<int>(mirror_map.size()) != j) {
    throw ShapeMismatch("Skeleton: field sizes disagree");
  }
  if (j == 0 || parent[0] != -1) {
    throw DegenerateInput("Skeleton: joint 0 must be the root");
  }
  for (int i = 1; i < j; ++i) {
    if (parent[i] < 0 || parent[i] >= i) {
      // Parents must precede children; this also rules out cycles.
      throw DegenerateInput("Skeleton: parents must be topologically ordered");
    }
  }
  for (int i = 0; i < j; ++i) {
    if (mirror_map[i] < 0 || mirror_map[i] >= j ||
        mirror_map[mirror_map[i]] != i) {
      throw DegenerateInput("Skeleton: mirror_map is not an involution");
    }
  }
}

Eigen::MatrixXi kinematic_distances(const Skeleton& skel) {
  const int j = skel.joint_count();
  std::vector<int> depth(static_cast<size_t>(j), 0);
  for (int i = 1; i < j; ++i) depth[i] = depth[skel.parent[i]] + 1;

  Eigen::MatrixXi dist(j, j);
  for (int a = 0; a < j; ++a) {
    for (int b = a; b < j; ++b) {
      int u = a, v = b, d = 0;
      while (u != v) {
        if (depth[u] >= depth[v]) {
          u = skel.parent[u];
        } else {
          v = skel.parent[v];
        }
        ++d;
      }
      dist(a, b) = d;
      dist(b, a) = d;
    }
  }
  return dist;
}

Skeleton toy_skeleton() {
  struct JointSpec {
    const char* name;
    int parent;
    double x, y, z;
    int mirror;
  };
  // Y up, +X to the subject's left, +Z forward; lengths in meters.
  static const JointSpec kJoints[] = {
      {"pelvis", -1, 0.00, 0.00, 0.00, 0},
      {"l_hip", 0, 0.09, -0.05, 0.00, 2},
      {"r_hip", 0, -0.09, -0.05, 0.00, 1},
      {"spine1", 0, 0.00, 0.11, 0.00, 3},
      {"l_knee", 1, 0.00, -0.38, 0.00, 5},
      {"r_knee", 2, 0.00, -0.38, 0.00, 4},
      {"spine2", 3, 0.00, 0.12, 0.00, 6},
      {"l_ankle", 4, 0.00, -0.40, 0.00, 8},
      {"r_ankle", 5, 0.00, -0.40, 0.00, 7},
      {"spine3", 6, 0.00, 0.12, 0.00, 9},
      {"l_foot", 7, 0.00, -0.05, 0.13, 11},
      {"r_foot", 8, 0.00, -0.05, 0.13, 10},
      {"neck", 9, 0.00, 0.10, 0.00, 12},
      {"l_collar", 9, 0.07, 0.08, 0.00, 14},
      {"r_collar", 9, -0.07, 0.08, 0.00, 13},
      {"head", 12, 0.00, 0.12, 0.00, 15},
      {"l_shoulder", 13, 0.10, 0.02, 0.00, 17},
      {"r_shoulder", 14, -0.10, 0.02, 0.00, 16},
      {"l_elbow", 16, 0.26, 0.00, 0.00, 19},
      {"r_elbow", 17, -0.26, 0.00, 0.00, 18},
      {"l_wrist", 18, 0.25, 0.00, 0.00, 21},
      {"r_wrist", 19, -0.25, 0.00, 0.00, 20},
      {"l_hand", 20, 0.08, 0.00, 0.00, 23},
      {"r_hand", 21, -0.08, 0.00, 0.00, 22},
  };
  const int j = static_cast<int>(std::size(kJoints));
  Skeleton skel;
  skel.parent.resize(j);
  skel.rest_offsets.resize(j, 3);
  skel.names.resize(j);
  skel.mirror_map.resize(j);
  for (int i = 0; i < j; ++i) {
    skel.names[i] = kJoints[i].name;
    skel.parent[i] = kJoints[i].parent;
    skel.rest_offsets.row(i) << kJoints[i].x, kJoints[i].y, kJoints[i].z;
    skel.mirror_map[i] = kJoints[i].mirror;
  }
  skel.validate();
  return skel;
}

KeypointLayout identity_layout(const Skeleton& skel) {
  KeypointLayout layout;
  layout.names = skel.names;
  layout.mirror_map = skel.mirror_map;
  layout.root_index = 0;
  layout.anchor_joints.resize(skel.joint_count());
  for (int i = 0; i < skel.joint_count(); ++i) layout.anchor_joints[i] = i;
  // Extreme-occlusion endpoint set: pelvis, spine top, head, wrists, ankles.
  auto index_of = [&](const char* name) {
    return static_cast<int>(
        std::find(skel.names.begin(), skel.names.end(), name) -
        skel.names.begin());
  };
  layout.endpoints = {index_of("pelvis"),  index_of("spine3"),
                      index_of("head"),    index_of("l_wrist"),
                      index_of("r_wrist"), index_of("l_ankle"),
                      index_of("r_ankle")};
  layout.validate();
  return layout;
}

}  // namespace skelformer
