#include "skelformer/io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace skelformer {

using nlohmann::json;

namespace {

json read_json(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string(what) + ": cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + ": parse error in " + path + ": " +
                    e.what());
  }
  return j;
}

void write_text(const std::string& path, const std::string& text,
                const char* what) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(std::string(what) + ": cannot open " + path);
  out << text;
}

void check_version(const json& j, int expected, const char* what) {
  const int got = j.value("version", -1);
  if (got != expected) {
    throw DataError(std::string(what) + ": unsupported version " +
                    std::to_string(got) + ", expected " +
                    std::to_string(expected));
  }
}

json matrix_to_json(const MatXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) {
    throw DataError(std::string(what) + ": expected a non-empty matrix");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  MatXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw DataError(std::string(what) + ": ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = row.at(static_cast<size_t>(c)).get<double>();
    }
  }
  return m;
}

json layout_to_json(const KeypointLayout& layout) {
  json j;
  j["names"] = layout.names;
  j["mirror_map"] = layout.mirror_map;
  j["root_index"] = layout.root_index;
  j["endpoints"] = layout.endpoints;
  j["anchor_joints"] = layout.anchor_joints;
  return j;
}

KeypointLayout layout_from_json(const json& j) {
  KeypointLayout layout;
  layout.names = j.at("names").get<std::vector<std::string>>();
  layout.mirror_map = j.at("mirror_map").get<std::vector<int>>();
  layout.root_index = j.at("root_index").get<int>();
  layout.endpoints = j.at("endpoints").get<std::vector<int>>();
  layout.anchor_joints = j.at("anchor_joints").get<std::vector<int>>();
  layout.validate();
  return layout;
}

}  // namespace

void save_body_model(const BodyModel& model, const std::string& path) {
  json j;
  j["version"] = 1;
  j["skeleton"]["names"] = model.skeleton.names;
  j["skeleton"]["parents"] = model.skeleton.parent;
  j["skeleton"]["mirror_map"] = model.skeleton.mirror_map;
  j["skeleton"]["rest_offsets"] = matrix_to_json(model.skeleton.rest_offsets);
  j["template_vertices"] = matrix_to_json(model.template_vertices);
  j["shape_dirs"] = matrix_to_json(model.shape_dirs);
  j["joint_shape_dirs"] = matrix_to_json(model.joint_shape_dirs);
  j["skinning_weights"] = matrix_to_json(model.skinning_weights);
  write_text(path, j.dump(), "save_body_model");
}

BodyModel load_body_model(const std::string& path) {
  const json j = read_json(path, "load_body_model");
  check_version(j, 1, "load_body_model");
  BodyModel m;
  const auto& sk = j.at("skeleton");
  m.skeleton.names = sk.at("names").get<std::vector<std::string>>();
  m.skeleton.parent = sk.at("parents").get<std::vector<int>>();
  m.skeleton.mirror_map = sk.at("mirror_map").get<std::vector<int>>();
  m.skeleton.rest_offsets =
      matrix_from_json(sk.at("rest_offsets"), "load_body_model");
  m.template_vertices =
      matrix_from_json(j.at("template_vertices"), "load_body_model");
  m.shape_dirs = matrix_from_json(j.at("shape_dirs"), "load_body_model");
  m.joint_shape_dirs =
      matrix_from_json(j.at("joint_shape_dirs"), "load_body_model");
  m.skinning_weights =
      matrix_from_json(j.at("skinning_weights"), "load_body_model");
  m.validate();
  return m;
}

void save_layout(const KeypointLayout& layout, const std::string& path) {
  json j = layout_to_json(layout);
  j["version"] = 1;
  write_text(path, j.dump(2), "save_layout");
}

KeypointLayout load_layout(const std::string& path) {
  const json j = read_json(path, "load_layout");
  check_version(j, 1, "load_layout");
  return layout_from_json(j);
}

void save_regressor(const JointRegressor& reg, const KeypointLayout& layout,
                    const std::string& path) {
  json j;
  j["version"] = 1;
  j["temperature"] = reg.temperature;
  j["layout"] = layout_to_json(layout);
  j["phi"] = matrix_to_json(reg.phi);
  write_text(path, j.dump(), "save_regressor");
}

std::pair<JointRegressor, KeypointLayout> load_regressor(
    const std::string& path) {
  const json j = read_json(path, "load_regressor");
  check_version(j, 1, "load_regressor");
  JointRegressor reg;
  reg.temperature = j.at("temperature").get<double>();
  reg.phi = matrix_from_json(j.at("phi"), "load_regressor");
  return {std::move(reg), layout_from_json(j.at("layout"))};
}

void save_calibration(const std::vector<CameraParams>& cams,
                      const std::string& path) {
  json j;
  j["version"] = 1;
  json list = json::array();
  for (const auto& cam : cams) {
    json c;
    c["name"] = cam.name;
    json k = json::array(), r = json::array(), t = json::array();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        k.push_back(cam.intrinsics(a, b));
        r.push_back(cam.rotation(a, b));
      }
      t.push_back(cam.translation[a]);
    }
    c["intrinsics"] = std::move(k);
    c["rotation"] = std::move(r);
    c["translation"] = std::move(t);
    list.push_back(std::move(c));
  }
  j["cameras"] = std::move(list);
  write_text(path, j.dump(2), "save_calibration");
}

std::vector<CameraParams> load_calibration(const std::string& path) {
  const json j = read_json(path, "load_calibration");
  check_version(j, 1, "load_calibration");
  std::vector<CameraParams> cams;
  for (const auto& c : j.at("cameras")) {
    CameraParams cam;
    cam.name = c.value("name", "");
    const auto k = c.at("intrinsics").get<std::vector<double>>();
    const auto r = c.at("rotation").get<std::vector<double>>();
    const auto t = c.at("translation").get<std::vector<double>>();
    if (k.size() != 9 || r.size() != 9 || t.size() != 3) {
      throw DataError("load_calibration: bad entry sizes");
    }
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        cam.intrinsics(a, b) = k[static_cast<size_t>(3 * a + b)];
        cam.rotation(a, b) = r[static_cast<size_t>(3 * a + b)];
      }
      cam.translation[a] = t[static_cast<size_t>(a)];
    }
    cam.validate();
    cams.push_back(std::move(cam));
  }
  if (cams.empty()) throw DataError("load_calibration: no cameras");
  return cams;
}

void save_detections(const DetectionsFile& det, const std::string& path) {
  json j;
  j["version"] = 1;
  j["joint_count"] = det.joint_count;
  j["cameras"] = det.camera_names;
  json frames = json::array();
  for (size_t f = 0; f < det.frames.size(); ++f) {
    json frame;
    frame["id"] = det.frame_ids[f];
    json per_cam = json::array();
    for (const auto& cam_dets : det.frames[f]) {
      json list = json::array();
      for (const auto& d : cam_dets) {
        list.push_back({d.uv.x(), d.uv.y(), d.confidence});
      }
      per_cam.push_back(std::move(list));
    }
    frame["detections"] = std::move(per_cam);
    frames.push_back(std::move(frame));
  }
  j["frames"] = std::move(frames);
  write_text(path, j.dump(), "save_detections");
}

DetectionsFile load_detections(const std::string& path) {
  const json j = read_json(path, "load_detections");
  check_version(j, 1, "load_detections");
  DetectionsFile det;
  det.joint_count = j.at("joint_count").get<int>();
  det.camera_names = j.at("cameras").get<std::vector<std::string>>();
  for (const auto& frame : j.at("frames")) {
    det.frame_ids.push_back(frame.at("id").get<int>());
    std::vector<std::vector<Detection2D>> per_cam;
    for (const auto& cam_dets : frame.at("detections")) {
      std::vector<Detection2D> list;
      for (const auto& d : cam_dets) {
        Detection2D dd;
        dd.uv = Eigen::Vector2d(d.at(0).get<double>(), d.at(1).get<double>());
        dd.confidence = d.at(2).get<double>();
        list.push_back(dd);
      }
      if (static_cast<int>(list.size()) != det.joint_count) {
        throw DataError("load_detections: joint count mismatch in frame");
      }
      per_cam.push_back(std::move(list));
    }
    if (per_cam.size() != det.camera_names.size()) {
      throw DataError("load_detections: camera count mismatch in frame");
    }
    det.frames.push_back(std::move(per_cam));
  }
  return det;
}

void save_keypoint_stream(
    const std::vector<std::pair<int, KeypointFrame>>& frames,
    const std::string& path) {
  std::ostringstream out;
  out << "# skelformer-keypoints v1\n";
  out.precision(17);
  for (const auto& [id, frame] : frames) {
    out << id << ' ' << frame.joint_count();
    for (Eigen::Index i = 0; i < frame.joint_count(); ++i) {
      out << ' ' << frame.positions(i, 0) << ' ' << frame.positions(i, 1)
          << ' ' << frame.positions(i, 2) << ' '
          << (frame.visible[static_cast<size_t>(i)] ? 1 : 0);
    }
    out << '\n';
  }
  write_text(path, out.str(), "save_keypoint_stream");
}

std::vector<std::pair<int, KeypointFrame>> load_keypoint_stream(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_keypoint_stream: cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header != "# skelformer-keypoints v1") {
    throw DataError(
        "load_keypoint_stream: bad header, expected '# skelformer-keypoints "
        "v1'");
  }
  std::vector<std::pair<int, KeypointFrame>> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int id = 0, joints = 0;
    if (!(ls >> id >> joints) || joints <= 0) {
      throw DataError("load_keypoint_stream: malformed record");
    }
    KeypointFrame frame;
    frame.positions.resize(joints, 3);
    frame.visible.resize(static_cast<size_t>(joints));
    for (int i = 0; i < joints; ++i) {
      int vis = 0;
      if (!(ls >> frame.positions(i, 0) >> frame.positions(i, 1) >>
            frame.positions(i, 2) >> vis)) {
        throw DataError("load_keypoint_stream: truncated record");
      }
      frame.visible[static_cast<size_t>(i)] = vis != 0;
      if (vis == 0) frame.positions.row(i).setZero();
    }
    frames.emplace_back(id, std::move(frame));
  }
  return frames;
}

void save_pose_records(const std::vector<PoseRecord>& records,
                       const std::string& path) {
  std::ostringstream out;
  out << R"({"format":"skelformer-poses","version":1})" << "\n";
  for (const auto& rec : records) {
    json j;
    j["frame"] = rec.frame_id;
    json rots = json::array();
    for (const auto& r : rec.pose.local_rotations) {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) rots.push_back(r(a, b));
    }
    j["rotations"] = std::move(rots);
    j["translation"] = {rec.pose.root_translation.x(),
                        rec.pose.root_translation.y(),
                        rec.pose.root_translation.z()};
    json beta = json::array();
    for (Eigen::Index i = 0; i < rec.shape.beta.size(); ++i) {
      beta.push_back(rec.shape.beta[i]);
    }
    j["beta"] = std::move(beta);
    out << j.dump() << "\n";
  }
  write_text(path, out.str(), "save_pose_records");
}

std::vector<PoseRecord> load_pose_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_pose_records: cannot open " + path);
  std::string line;
  std::getline(in, line);
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() ||
      header.value("format", "") != "skelformer-poses" ||
      header.value("version", -1) != 1) {
    throw DataError("load_pose_records: bad header, expected version 1");
  }
  std::vector<PoseRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    PoseRecord rec;
    rec.frame_id = j.at("frame").get<int>();
    const auto rots = j.at("rotations").get<std::vector<double>>();
    if (rots.size() % 9 != 0) {
      throw DataError("load_pose_records: bad rotation length");
    }
    const int joints = static_cast<int>(rots.size() / 9);
    rec.pose.local_rotations.resize(static_cast<size_t>(joints));
    for (int ji = 0; ji < joints; ++ji) {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          rec.pose.local_rotations[static_cast<size_t>(ji)](a, b) =
              rots[static_cast<size_t>(9 * ji + 3 * a + b)];
        }
    }
    const auto t = j.at("translation").get<std::vector<double>>();
    rec.pose.root_translation = Vec3d(t.at(0), t.at(1), t.at(2));
    const auto beta = j.at("beta").get<std::vector<double>>();
    rec.shape.beta = Eigen::Map<const VecXd>(beta.data(),
                                             static_cast<Eigen::Index>(beta.size()));
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

json eval_to_json(const EvalResult& r) {
  return json{{"mpjpe_mm", r.mpjpe},     {"pa_mpjpe_mm", r.pa_mpjpe},
              {"mpvpe_mm", r.mpvpe},     {"pa_mpvpe_mm", r.pa_mpvpe},
              {"pck150", r.pck150},      {"auc", r.auc},
              {"rot_error_deg", r.rot_error_deg}};
}

EvalResult eval_from_json(const json& j) {
  EvalResult r;
  r.mpjpe = j.at("mpjpe_mm").get<double>();
  r.pa_mpjpe = j.at("pa_mpjpe_mm").get<double>();
  r.mpvpe = j.at("mpvpe_mm").get<double>();
  r.pa_mpvpe = j.at("pa_mpvpe_mm").get<double>();
  r.pck150 = j.at("pck150").get<double>();
  r.auc = j.at("auc").get<double>();
  r.rot_error_deg = j.at("rot_error_deg").get<double>();
  return r;
}

}  // namespace

void save_sweep_report(const SweepReport& report, const std::string& json_path,
                       const std::string& csv_path) {
  json j;
  j["version"] = 1;
  j["axis"] = to_string(report.axis);
  j["values"] = report.values;
  j["seeds"] = report.seeds;
  j["config"] = report.config_snapshot;
  json points = json::array();
  for (const auto& p : report.points) {
    json pj;
    pj["value"] = p.value;
    pj["gt_noise_mm"] = p.gt_noise_mm;
    json solvers;
    for (const auto& [name, r] : p.per_solver) solvers[name] = eval_to_json(r);
    pj["solvers"] = std::move(solvers);
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  write_text(json_path, j.dump(2), "save_sweep_report");

  if (!csv_path.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "axis,axis_value,solver,metric,value\n";
    const std::string axis = to_string(report.axis);
    for (const auto& p : report.points) {
      csv << axis << ',' << p.value << ",gt_noise,input_error_mm,"
          << p.gt_noise_mm << "\n";
      for (const auto& [name, r] : p.per_solver) {
        const std::pair<const char*, double> metrics[] = {
            {"mpjpe_mm", r.mpjpe},         {"pa_mpjpe_mm", r.pa_mpjpe},
            {"mpvpe_mm", r.mpvpe},         {"pa_mpvpe_mm", r.pa_mpvpe},
            {"pck150", r.pck150},          {"auc", r.auc},
            {"rot_error_deg", r.rot_error_deg}};
        for (const auto& [metric, value] : metrics) {
          csv << axis << ',' << p.value << ',' << name << ',' << metric << ','
              << value << "\n";
        }
      }
    }
    write_text(csv_path, csv.str(), "save_sweep_report");
  }
}

SweepReport load_sweep_report(const std::string& json_path) {
  const json j = read_json(json_path, "load_sweep_report");
  check_version(j, 1, "load_sweep_report");
  SweepReport report;
  const std::string axis = j.at("axis").get<std::string>();
  if (axis == "noise_sigma_mm") {
    report.axis = SweepAxis::noise_sigma_mm;
  } else if (axis == "occlusion_frac") {
    report.axis = SweepAxis::occlusion_frac;
  } else if (axis == "endpoints") {
    report.axis = SweepAxis::endpoints;
  } else {
    throw DataError("load_sweep_report: unknown axis " + axis);
  }
  report.values = j.at("values").get<std::vector<double>>();
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  report.config_snapshot = j.value("config", "");
  for (const auto& pj : j.at("points")) {
    SweepPoint p;
    p.value = pj.at("value").get<double>();
    p.gt_noise_mm = pj.at("gt_noise_mm").get<double>();
    for (const auto& [name, rj] : pj.at("solvers").items()) {
      p.per_solver[name] = eval_from_json(rj);
    }
    report.points.push_back(std::move(p));
  }
  return report;
}

}  // namespace skelformer
