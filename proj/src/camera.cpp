#include "skelformer/camera.hpp"

#include <Eigen/Dense>

namespace skelformer {

void CameraParams::validate() const {
  if (intrinsics(2, 2) != 1.0 || intrinsics(0, 0) <= 0.0 ||
      intrinsics(1, 1) <= 0.0) {
    throw DegenerateInput("CameraParams: invalid intrinsics");
  }
  if (intrinsics(1, 0) != 0.0 || intrinsics(2, 0) != 0.0 ||
      intrinsics(2, 1) != 0.0) {
    throw DegenerateInput("CameraParams: intrinsics must be upper triangular");
  }
}

Eigen::Vector2d project(const CameraParams& cam, const Vec3d& point) {
  const Vec3d x_cam = cam.rotation * point + cam.translation;
  if (x_cam.z() <= 1e-9) {
    throw BehindCamera("project: point is behind the camera");
  }
  const Vec3d h = cam.intrinsics * x_cam;
  return h.head<2>() / h.z();
}

KeypointFrame triangulate_dlt(
    const std::vector<CameraParams>& cameras,
    const std::vector<std::vector<Detection2D>>& detections,
    double conf_threshold) {
  if (cameras.empty() || detections.size() != cameras.size()) {
    throw ShapeMismatch("triangulate_dlt: camera/detection list mismatch");
  }
  const size_t joints = detections.front().size();
  for (const auto& per_cam : detections) {
    if (per_cam.size() != joints) {
      throw ShapeMismatch("triangulate_dlt: ragged detection lists");
    }
  }

  // Precompute normalized projection rows per camera: conditioning each
  // observation by K^-1 keeps the stacked system entries O(1).
  std::vector<Eigen::Matrix<double, 3, 4>> extrinsics(cameras.size());
  std::vector<Mat3d> k_inv(cameras.size());
  for (size_t c = 0; c < cameras.size(); ++c) {
    extrinsics[c].leftCols<3>() = cameras[c].rotation;
    extrinsics[c].col(3) = cameras[c].translation;
    k_inv[c] = cameras[c].intrinsics.inverse();
  }

  KeypointFrame out;
  out.positions = MatXd::Zero(static_cast<Eigen::Index>(joints), 3);
  out.visible.assign(joints, false);

  for (size_t j = 0; j < joints; ++j) {
    std::vector<size_t> views;
    for (size_t c = 0; c < cameras.size(); ++c) {
      if (detections[c][j].confidence >= conf_threshold) views.push_back(c);
    }
    if (views.size() < 2) continue;

    MatXd a(2 * static_cast<Eigen::Index>(views.size()), 4);
    Eigen::Index row = 0;
    for (size_t c : views) {
      const Vec3d obs =
          k_inv[c] * Vec3d(detections[c][j].uv.x(), detections[c][j].uv.y(), 1.0);
      const auto& p = extrinsics[c];
      a.row(row++) = obs.x() * p.row(2) - obs.z() * p.row(0);
      a.row(row++) = obs.y() * p.row(2) - obs.z() * p.row(1);
    }
    Eigen::JacobiSVD<MatXd> svd(a, Eigen::ComputeFullV);
    const Eigen::Vector4d x = svd.matrixV().col(3);
    out.positions.row(static_cast<Eigen::Index>(j)) =
        (x.head<3>() / x[3]).transpose();
    out.visible[j] = true;
  }
  return out;
}

}  // namespace skelformer
