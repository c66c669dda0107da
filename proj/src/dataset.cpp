#include "skelformer/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "skelformer/rng.hpp"
#include "skelformer/rotmath.hpp"

namespace skelformer {

VecXd joint_angle_limits(const Skeleton& skel) {
  VecXd limits(skel.joint_count());
  for (int i = 0; i < skel.joint_count(); ++i) {
    const std::string& n = skel.names[static_cast<size_t>(i)];
    double limit = 0.5;
    if (n == "pelvis") {
      limit = 0.6;  // augmentation supplies the full yaw range
    } else if (n.find("hip") != std::string::npos ||
               n.find("shoulder") != std::string::npos) {
      limit = 1.2;
    } else if (n.find("knee") != std::string::npos ||
               n.find("elbow") != std::string::npos) {
      limit = 2.0;
    } else if (n.find("spine") != std::string::npos) {
      limit = 0.4;
    } else if (n.find("collar") != std::string::npos) {
      limit = 0.3;
    } else if (n == "neck" || n == "head") {
      limit = 0.6;
    } else if (n.find("wrist") != std::string::npos ||
               n.find("ankle") != std::string::npos) {
      limit = 0.8;
    } else if (n.find("hand") != std::string::npos ||
               n.find("foot") != std::string::npos) {
      limit = 0.5;
    }
    limits[i] = limit;
  }
  return limits;
}

namespace {

// Clamp a rotation's axis-angle magnitude to the given limit.
Mat3d clamp_rotation(const Mat3d& r, double limit) {
  const Vec3d w = logmap(r);
  const double angle = w.norm();
  if (angle <= limit) return r;
  return expmap<double>(Vec3d(w * (limit / angle)));
}

}  // namespace

Dataset generate_synthetic_dataset(const BodyModel& model,
                                   const MatXd& realized_regressor,
                                   const KeypointLayout& layout, int n,
                                   std::uint64_t seed, int chain_length) {
  if (n < 1) {
    throw ShapeMismatch("generate_synthetic_dataset: need n >= 1");
  }
  if (realized_regressor.cols() != model.vertex_count() ||
      realized_regressor.rows() != layout.joint_count()) {
    throw ShapeMismatch("generate_synthetic_dataset: regressor shape mismatch");
  }
  const int joints = model.joint_count();
  const VecXd limits = joint_angle_limits(model.skeleton);

  Dataset ds;
  ds.layout = layout;
  ds.body_joints = joints;
  ds.shape_dim = model.shape_dim();
  ds.samples.reserve(static_cast<size_t>(n));
  ds.splits.reserve(static_cast<size_t>(n));

  const int chains = (n + chain_length - 1) / chain_length;
  int emitted = 0;
  for (int c = 0; c < chains && emitted < n; ++c) {
    Rng rng(derive_seed(seed, "motion_chain", static_cast<std::uint64_t>(c)));

    // One body shape per chain.
    VecXd beta(model.shape_dim());
    for (int b = 0; b < beta.size(); ++b) beta[b] = rng.normal();
    const ShapeParams shape = ShapeParams::clamped(beta);

    // Initial pose within limits, then a random walk.
    PoseParams pose = PoseParams::identity(joints);
    for (int j = 0; j < joints; ++j) {
      const double angle = rng.uniform(0.0, 0.9 * limits[j]);
      pose.local_rotations[static_cast<size_t>(j)] =
          expmap<double>(Vec3d(angle * rng.unit_vec3()));
    }
    pose.root_translation = rng.normal_vec3(0.3);

    // Split assignment by chain: 80/10/10.
    const double split_draw = rng.uniform();
    const Split split = split_draw < 0.8   ? Split::train
                        : split_draw < 0.9 ? Split::val
                                           : Split::test;

    for (int t = 0; t < chain_length && emitted < n; ++t, ++emitted) {
      if (t > 0) {
        for (int j = 0; j < joints; ++j) {
          const Mat3d step = expmap<double>(rng.normal_vec3(0.06));
          pose.local_rotations[static_cast<size_t>(j)] = clamp_rotation(
              pose.local_rotations[static_cast<size_t>(j)] * step, limits[j]);
        }
        pose.root_translation += rng.normal_vec3(0.02);
      }
      MotionSample s;
      s.pose = pose;
      s.shape = shape;
      s.chain_id = c;
      const auto fk = forward_kinematics(model, pose, shape);
      s.keypoints =
          KeypointFrame::all_visible(realized_regressor * fk.vertices);
      ds.samples.push_back(std::move(s));
      ds.splits.push_back(split);
    }
  }
  return ds;
}

double sample_consistency_error(const BodyModel& model,
                                const MatXd& realized_regressor,
                                const MotionSample& sample) {
  const auto fk = forward_kinematics(model, sample.pose, sample.shape);
  const MatXd expect = realized_regressor * fk.vertices;
  double err = 0.0;
  for (Eigen::Index i = 0; i < expect.rows(); ++i) {
    if (!sample.keypoints.visible[static_cast<size_t>(i)]) continue;
    err = std::max(
        err, (expect.row(i) - sample.keypoints.positions.row(i)).norm());
  }
  return err;
}

// ---------------------------------------------------------------------------
// Binary container.

namespace {

constexpr std::uint32_t kDatasetMagic = 0x534b4453;  // "SKDS"
constexpr std::uint32_t kDatasetVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, std::uint32_t v) { std::fwrite(&v, 4, 1, f); }
void put_i32(std::FILE* f, std::int32_t v) { std::fwrite(&v, 4, 1, f); }

std::uint32_t get_u32(std::FILE* f) {
  std::uint32_t v = 0;
  if (std::fread(&v, 4, 1, f) != 1) throw DataError("dataset: truncated file");
  return v;
}
std::int32_t get_i32(std::FILE* f) {
  std::int32_t v = 0;
  if (std::fread(&v, 4, 1, f) != 1) throw DataError("dataset: truncated file");
  return v;
}

void put_string(std::FILE* f, const std::string& s) {
  put_u32(f, static_cast<std::uint32_t>(s.size()));
  std::fwrite(s.data(), 1, s.size(), f);
}
std::string get_string(std::FILE* f) {
  const std::uint32_t len = get_u32(f);
  std::string s(len, '\0');
  if (len > 0 && std::fread(s.data(), 1, len, f) != len) {
    throw DataError("dataset: truncated string");
  }
  return s;
}

void put_doubles(std::FILE* f, const double* p, size_t n) {
  std::fwrite(p, 8, n, f);
}
void get_doubles(std::FILE* f, double* p, size_t n) {
  if (std::fread(p, 8, n, f) != n) throw DataError("dataset: truncated data");
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("save_dataset: cannot open " + path);
  put_u32(f.get(), kDatasetMagic);
  put_u32(f.get(), kDatasetVersion);
  const int jk = ds.layout.joint_count();
  put_i32(f.get(), jk);
  put_i32(f.get(), ds.body_joints);
  put_i32(f.get(), ds.shape_dim);
  put_i32(f.get(), static_cast<std::int32_t>(ds.samples.size()));
  // Layout block.
  for (int i = 0; i < jk; ++i) put_string(f.get(), ds.layout.names[static_cast<size_t>(i)]);
  for (int i = 0; i < jk; ++i) put_i32(f.get(), ds.layout.mirror_map[static_cast<size_t>(i)]);
  for (int i = 0; i < jk; ++i) put_i32(f.get(), ds.layout.anchor_joints[static_cast<size_t>(i)]);
  put_i32(f.get(), ds.layout.root_index);
  put_i32(f.get(), static_cast<std::int32_t>(ds.layout.endpoints.size()));
  for (int e : ds.layout.endpoints) put_i32(f.get(), e);

  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const MotionSample& s = ds.samples[i];
    put_i32(f.get(), s.chain_id);
    std::uint8_t split = static_cast<std::uint8_t>(ds.splits[i]);
    std::fwrite(&split, 1, 1, f.get());
    for (const auto& r : s.pose.local_rotations) {
      // Row-major 3x3.
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double v = r(a, b);
          put_doubles(f.get(), &v, 1);
        }
    }
    put_doubles(f.get(), s.pose.root_translation.data(), 3);
    put_doubles(f.get(), s.shape.beta.data(),
                static_cast<size_t>(s.shape.beta.size()));
    for (Eigen::Index r = 0; r < s.keypoints.positions.rows(); ++r) {
      const double xyz[3] = {s.keypoints.positions(r, 0),
                             s.keypoints.positions(r, 1),
                             s.keypoints.positions(r, 2)};
      put_doubles(f.get(), xyz, 3);
    }
    for (bool v : s.keypoints.visible) {
      const std::uint8_t b = v ? 1 : 0;
      std::fwrite(&b, 1, 1, f.get());
    }
  }
}

Dataset load_dataset(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("load_dataset: cannot open " + path);
  if (get_u32(f.get()) != kDatasetMagic) {
    throw DataError("load_dataset: bad magic, not a dataset file");
  }
  const std::uint32_t version = get_u32(f.get());
  if (version != kDatasetVersion) {
    throw DataError("load_dataset: unsupported version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kDatasetVersion));
  }
  Dataset ds;
  const int jk = get_i32(f.get());
  ds.body_joints = get_i32(f.get());
  ds.shape_dim = get_i32(f.get());
  const int count = get_i32(f.get());
  ds.layout.names.resize(static_cast<size_t>(jk));
  ds.layout.mirror_map.resize(static_cast<size_t>(jk));
  ds.layout.anchor_joints.resize(static_cast<size_t>(jk));
  for (auto& s : ds.layout.names) s = get_string(f.get());
  for (auto& v : ds.layout.mirror_map) v = get_i32(f.get());
  for (auto& v : ds.layout.anchor_joints) v = get_i32(f.get());
  ds.layout.root_index = get_i32(f.get());
  ds.layout.endpoints.resize(static_cast<size_t>(get_i32(f.get())));
  for (auto& e : ds.layout.endpoints) e = get_i32(f.get());
  ds.layout.validate();

  ds.samples.resize(static_cast<size_t>(count));
  ds.splits.resize(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    MotionSample& s = ds.samples[static_cast<size_t>(i)];
    s.chain_id = get_i32(f.get());
    std::uint8_t split = 0;
    if (std::fread(&split, 1, 1, f.get()) != 1) {
      throw DataError("load_dataset: truncated sample");
    }
    if (split > 2) throw DataError("load_dataset: invalid split tag");
    ds.splits[static_cast<size_t>(i)] = static_cast<Split>(split);
    s.pose.local_rotations.resize(static_cast<size_t>(ds.body_joints));
    for (auto& r : s.pose.local_rotations) {
      double buf[9];
      get_doubles(f.get(), buf, 9);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r(a, b) = buf[3 * a + b];
    }
    get_doubles(f.get(), s.pose.root_translation.data(), 3);
    s.shape.beta.resize(ds.shape_dim);
    get_doubles(f.get(), s.shape.beta.data(), static_cast<size_t>(ds.shape_dim));
    s.keypoints.positions.resize(jk, 3);
    for (int r = 0; r < jk; ++r) {
      double xyz[3];
      get_doubles(f.get(), xyz, 3);
      s.keypoints.positions(r, 0) = xyz[0];
      s.keypoints.positions(r, 1) = xyz[1];
      s.keypoints.positions(r, 2) = xyz[2];
    }
    s.keypoints.visible.resize(static_cast<size_t>(jk));
    for (int r = 0; r < jk; ++r) {
      std::uint8_t b = 0;
      if (std::fread(&b, 1, 1, f.get()) != 1) {
        throw DataError("load_dataset: truncated visibility");
      }
      s.keypoints.visible[static_cast<size_t>(r)] = b != 0;
    }
  }
  return ds;
}

}  // namespace skelformer
