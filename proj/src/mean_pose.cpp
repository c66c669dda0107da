#include "skelformer/mean_pose.hpp"

#include "skelformer/rotmath.hpp"

namespace skelformer {

MeanPose compute_mean_pose(const Skeleton& skel,
                           const std::vector<PoseParams>& poses) {
  if (poses.empty()) {
    throw ShapeMismatch("compute_mean_pose: need at least one pose");
  }
  const int j = skel.joint_count();
  MeanPose mean;
  mean.theta_m.resize(static_cast<size_t>(j));
  std::vector<Quatd> qs;
  std::vector<double> ws;
  qs.reserve(2 * poses.size());
  ws.assign(2 * poses.size(), 1.0);
  for (int i = 0; i < j; ++i) {
    qs.clear();
    const int mi = skel.mirror_map[i];
    for (const auto& pose : poses) {
      if (static_cast<int>(pose.local_rotations.size()) != j) {
        throw ShapeMismatch("compute_mean_pose: pose joint count mismatch");
      }
      qs.emplace_back(pose.local_rotations[static_cast<size_t>(i)]);
      // The mirrored sample contributes its joint mi reflected onto joint i.
      qs.emplace_back(Quatd(reflect_rotation_yz(
          pose.local_rotations[static_cast<size_t>(mi)])));
    }
    mean.theta_m[static_cast<size_t>(i)] =
        quaternion_average(qs, ws).toRotationMatrix();
  }
  return mean;
}

PoseParams normalize_pose(const MeanPose& mean, const PoseParams& pose) {
  if (mean.theta_m.size() != pose.local_rotations.size()) {
    throw ShapeMismatch("normalize_pose: joint count mismatch");
  }
  PoseParams out = pose;
  for (size_t i = 0; i < pose.local_rotations.size(); ++i) {
    out.local_rotations[i] =
        mean.theta_m[i].transpose() * pose.local_rotations[i];
  }
  return out;
}

PoseParams denormalize_pose(const MeanPose& mean, const PoseParams& pose) {
  if (mean.theta_m.size() != pose.local_rotations.size()) {
    throw ShapeMismatch("denormalize_pose: joint count mismatch");
  }
  PoseParams out = pose;
  for (size_t i = 0; i < pose.local_rotations.size(); ++i) {
    out.local_rotations[i] = mean.theta_m[i] * pose.local_rotations[i];
  }
  return out;
}

}  // namespace skelformer
