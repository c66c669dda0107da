#pragma once

#include <string>
#include <vector>

#include "skelformer/body_model.hpp"
#include "skelformer/joint_regressor.hpp"
#include "skelformer/keypoints.hpp"

namespace skelformer {

/// One synthetic frame: pose, shape, and the clean keypoints regressed from
/// the FK vertices (consistent with pose/shape by construction).
struct MotionSample {
  PoseParams pose;
  ShapeParams shape;
  KeypointFrame keypoints;
  int chain_id = 0;
};

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

struct Dataset {
  KeypointLayout layout;
  int body_joints = 0;
  int shape_dim = 0;
  std::vector<MotionSample> samples;
  std::vector<Split> splits;  // per sample, assigned by chain

  std::vector<int> indices(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == s) out.push_back(static_cast<int>(i));
    }
    return out;
  }
};

/// Smooth random-walk motion chains on SO(3) with per-joint angle limits;
/// shapes are drawn per chain; keypoints come from FK plus the supplied
/// (ground-truth) regressor. The 80/10/10 split is by chain, never by frame.
Dataset generate_synthetic_dataset(const BodyModel& model,
                                   const MatXd& realized_regressor,
                                   const KeypointLayout& layout, int n,
                                   std::uint64_t seed, int chain_length = 32);

/// Per-joint rotation magnitude limits (radians) used by the generator.
VecXd joint_angle_limits(const Skeleton& skel);

/// Versioned binary container; byte-identical for identical inputs.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Consistency of one sample with the model + regressor (max abs deviation
/// between stored keypoints and FK-regressed keypoints, visible rows only).
double sample_consistency_error(const BodyModel& model,
                                const MatXd& realized_regressor,
                                const MotionSample& sample);

}  // namespace skelformer
