#pragma once

#include <map>
#include <string>
#include <vector>

#include "skelformer/body_model.hpp"
#include "skelformer/camera.hpp"
#include "skelformer/joint_regressor.hpp"
#include "skelformer/metrics.hpp"

namespace skelformer {

// All formats carry a version field; loaders reject other versions naming
// the expected one (DataError).

/// Body-model file: skeleton, template mesh, shape directions, skinning.
void save_body_model(const BodyModel& model, const std::string& path);
BodyModel load_body_model(const std::string& path);

/// Keypoint layout file: names, mirror map, root, endpoints, anchors.
void save_layout(const KeypointLayout& layout, const std::string& path);
KeypointLayout load_layout(const std::string& path);

/// Joint-regressor file: logits, temperature, and the keypoint layout.
void save_regressor(const JointRegressor& reg, const KeypointLayout& layout,
                    const std::string& path);
std::pair<JointRegressor, KeypointLayout> load_regressor(
    const std::string& path);

/// Camera calibration: per camera, 9 row-major intrinsics, 9 row-major
/// extrinsic rotation entries, 3 translation entries.
void save_calibration(const std::vector<CameraParams>& cams,
                      const std::string& path);
std::vector<CameraParams> load_calibration(const std::string& path);

/// Detections file: per frame, per camera, J x (u, v, confidence).
struct DetectionsFile {
  std::vector<std::string> camera_names;
  int joint_count = 0;
  // frames[f][camera][joint]
  std::vector<std::vector<std::vector<Detection2D>>> frames;
  std::vector<int> frame_ids;
};
void save_detections(const DetectionsFile& det, const std::string& path);
DetectionsFile load_detections(const std::string& path);

/// Keypoint stream (text): '# skelformer-keypoints v1' header, then one
/// frame per line: frame_id J x y z v [x y z v ...].
void save_keypoint_stream(const std::vector<std::pair<int, KeypointFrame>>& frames,
                          const std::string& path);
std::vector<std::pair<int, KeypointFrame>> load_keypoint_stream(
    const std::string& path);

/// Pose/shape records (JSONL with a version header line).
struct PoseRecord {
  int frame_id = 0;
  PoseParams pose;
  ShapeParams shape;
};
void save_pose_records(const std::vector<PoseRecord>& records,
                       const std::string& path);
std::vector<PoseRecord> load_pose_records(const std::string& path);

/// Sweep report: JSON document plus a flat CSV table
/// (axis_value, solver, metric, value) for plotting.
void save_sweep_report(const SweepReport& report, const std::string& json_path,
                       const std::string& csv_path);
SweepReport load_sweep_report(const std::string& json_path);

/// Simple multi-series SVG line chart from a flat sweep CSV, one chart per
/// metric.
void plot_sweep_csv(const std::string& csv_path, const std::string& metric,
                    const std::string& svg_path);

}  // namespace skelformer
