#pragma once

#include <string>
#include <vector>

#include "skelformer/common.hpp"

namespace skelformer {

/// Per-frame 3D keypoints. Non-visible entries carry (0,0,0) by convention
/// and are never read by downstream consumers.
struct KeypointFrame {
  MatXd positions;            // J x 3, meters, world frame
  std::vector<bool> visible;  // size J

  Eigen::Index joint_count() const { return positions.rows(); }

  static KeypointFrame all_visible(MatXd pos) {
    KeypointFrame f;
    f.visible.assign(static_cast<size_t>(pos.rows()), true);
    f.positions = std::move(pos);
    return f;
  }

  int visible_count() const {
    int n = 0;
    for (bool v : visible) n += v ? 1 : 0;
    return n;
  }
};

/// Semantic description of a keypoint set: names, left/right counterparts,
/// the root used for centering, and the extreme-occlusion endpoint subset.
struct KeypointLayout {
  std::vector<std::string> names;
  std::vector<int> mirror_map;     // involution, self for midline points
  int root_index = 0;
  std::vector<int> endpoints;      // e.g. head, wrists, ankles, root, spine top
  std::vector<int> anchor_joints;  // body joint each keypoint tracks

  int joint_count() const { return static_cast<int>(names.size()); }

  void validate() const {
    const int j = joint_count();
    if (static_cast<int>(mirror_map.size()) != j ||
        static_cast<int>(anchor_joints.size()) != j) {
      throw ShapeMismatch("KeypointLayout: field sizes disagree");
    }
    for (int i = 0; i < j; ++i) {
      if (mirror_map[i] < 0 || mirror_map[i] >= j ||
          mirror_map[mirror_map[i]] != i) {
        throw DegenerateInput("KeypointLayout: mirror_map is not an involution");
      }
    }
    if (root_index < 0 || root_index >= j) {
      throw DegenerateInput("KeypointLayout: root index out of range");
    }
    for (int e : endpoints) {
      if (e < 0 || e >= j) {
        throw DegenerateInput("KeypointLayout: endpoint index out of range");
      }
    }
  }
};

/// Mirrors a keypoint frame across the YZ plane, swapping left/right
/// counterparts so that semantics are preserved.
inline KeypointFrame mirror_keypoints(const KeypointLayout& layout,
                                      const KeypointFrame& frame) {
  const int j = layout.joint_count();
  if (frame.joint_count() != j) {
    throw ShapeMismatch("mirror_keypoints: frame/layout joint count mismatch");
  }
  KeypointFrame out;
  out.positions.resize(j, 3);
  out.visible.assign(static_cast<size_t>(j), false);
  for (int i = 0; i < j; ++i) {
    const int src = layout.mirror_map[i];
    out.visible[static_cast<size_t>(i)] = frame.visible[static_cast<size_t>(src)];
    if (out.visible[static_cast<size_t>(i)]) {
      out.positions(i, 0) = -frame.positions(src, 0);
      out.positions(i, 1) = frame.positions(src, 1);
      out.positions(i, 2) = frame.positions(src, 2);
    } else {
      out.positions.row(i).setZero();
    }
  }
  return out;
}

}  // namespace skelformer
