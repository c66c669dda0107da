#pragma once

#include <string>
#include <vector>

#include "skelformer/common.hpp"
#include "skelformer/keypoints.hpp"

namespace skelformer {

/// Pinhole camera: x_cam = R x_world + t, pixels = K x_cam (dehomogenized).
struct CameraParams {
  std::string name;
  Mat3d intrinsics = Mat3d::Identity();  // upper triangular, K(2,2) = 1
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  void validate() const;
};

struct Detection2D {
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();  // pixels
  double confidence = 0.0;                       // in [0, 1]
};

/// Pinhole projection. Throws BehindCamera if the point's depth in the camera
/// frame is <= 1e-9.
Eigen::Vector2d project(const CameraParams& cam, const Vec3d& point);

/// DLT triangulation of per-joint multi-view detections. Views with
/// confidence below conf_threshold are excluded per joint; joints with fewer
/// than two remaining views come back non-visible at (0,0,0).
///
/// detections[c][j] is joint j seen from camera c; all cameras must supply
/// the same joint count.
KeypointFrame triangulate_dlt(
    const std::vector<CameraParams>& cameras,
    const std::vector<std::vector<Detection2D>>& detections,
    double conf_threshold = 0.3);

}  // namespace skelformer
