#pragma once

#include <vector>

#include "skelformer/body_model.hpp"

namespace skelformer {

/// Per-joint mean rotation of a pose collection, mediolaterally symmetric by
/// construction (every sample enters together with its mirror).
struct MeanPose {
  std::vector<Mat3d> theta_m;

  static MeanPose identity(int joints) {
    MeanPose m;
    m.theta_m.assign(static_cast<size_t>(joints), Mat3d::Identity());
    return m;
  }
};

/// Markley quaternion average per joint over all samples plus their mirrored
/// counterparts.
MeanPose compute_mean_pose(const Skeleton& skel,
                           const std::vector<PoseParams>& poses);

/// Delta rotations relative to the mean: delta_j = theta_m_j^-1 * theta_j.
/// Root translation passes through unchanged.
PoseParams normalize_pose(const MeanPose& mean, const PoseParams& pose);

/// Exact inverse of normalize_pose: theta_j = theta_m_j * delta_j.
PoseParams denormalize_pose(const MeanPose& mean, const PoseParams& pose);

}  // namespace skelformer
