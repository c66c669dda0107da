#include "skelformer/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "skelformer/rng.hpp"
#include "skelformer/rotmath.hpp"

namespace skelformer {

EvalResult& EvalResult::operator+=(const EvalResult& o) {
  mpjpe += o.mpjpe;
  pa_mpjpe += o.pa_mpjpe;
  mpvpe += o.mpvpe;
  pa_mpvpe += o.pa_mpvpe;
  pck150 += o.pck150;
  auc += o.auc;
  rot_error_deg += o.rot_error_deg;
  return *this;
}

EvalResult& EvalResult::operator/=(double d) {
  mpjpe /= d;
  pa_mpjpe /= d;
  mpvpe /= d;
  pa_mpvpe /= d;
  pck150 /= d;
  auc /= d;
  rot_error_deg /= d;
  return *this;
}

EvalResult evaluate(const MatXd& pred_joints, const MatXd& pred_vertices,
                    const PoseParams& pred_pose, const MatXd& gt_joints,
                    const MatXd& gt_vertices, const PoseParams& gt_pose,
                    int root_index) {
  if (pred_joints.rows() != gt_joints.rows() ||
      pred_vertices.rows() != gt_vertices.rows() ||
      pred_pose.local_rotations.size() != gt_pose.local_rotations.size()) {
    throw ShapeMismatch("evaluate: prediction/ground-truth shape mismatch");
  }
  const Eigen::Index joints = pred_joints.rows();
  EvalResult res;

  // Root-centered joint errors in millimeters.
  VecXd errors(joints);
  const Vec3d pr = pred_joints.row(root_index).transpose();
  const Vec3d gr = gt_joints.row(root_index).transpose();
  for (Eigen::Index i = 0; i < joints; ++i) {
    const Vec3d p = pred_joints.row(i).transpose() - pr;
    const Vec3d q = gt_joints.row(i).transpose() - gr;
    errors[i] = (p - q).norm() * 1000.0;
  }
  res.mpjpe = errors.mean();

  {
    const auto align = procrustes_align(pred_joints, gt_joints,
                                        std::vector<bool>(joints, true));
    res.pa_mpjpe =
        (align.apply(pred_joints) - gt_joints).rowwise().norm().mean() * 1000.0;
  }

  if (pred_vertices.rows() > 0) {
    MatXd pv = pred_vertices.rowwise() - pr.transpose();
    MatXd gv = gt_vertices.rowwise() - gr.transpose();
    res.mpvpe = (pv - gv).rowwise().norm().mean() * 1000.0;
    const auto align = procrustes_align(
        pred_vertices, gt_vertices,
        std::vector<bool>(static_cast<size_t>(pred_vertices.rows()), true));
    res.pa_mpvpe = (align.apply(pred_vertices) - gt_vertices)
                       .rowwise()
                       .norm()
                       .mean() *
                   1000.0;
  }

  // PCK at 150mm and AUC over 0..150mm in 5mm steps.
  int within = 0;
  for (Eigen::Index i = 0; i < joints; ++i) within += errors[i] <= 150.0;
  res.pck150 = static_cast<double>(within) / static_cast<double>(joints);
  double auc_acc = 0.0;
  int thresholds = 0;
  for (int t = 0; t <= 150; t += 5, ++thresholds) {
    int k = 0;
    for (Eigen::Index i = 0; i < joints; ++i) k += errors[i] <= t;
    auc_acc += static_cast<double>(k) / static_cast<double>(joints);
  }
  res.auc = auc_acc / thresholds;

  double rot = 0.0;
  for (size_t i = 0; i < pred_pose.local_rotations.size(); ++i) {
    rot += geodesic_distance(pred_pose.local_rotations[i],
                             gt_pose.local_rotations[i]);
  }
  res.rot_error_deg = rot / static_cast<double>(pred_pose.local_rotations.size()) *
                      180.0 / kPi;
  return res;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::noise_sigma_mm:
      return "noise_sigma_mm";
    case SweepAxis::occlusion_frac:
      return "occlusion_frac";
    case SweepAxis::endpoints:
      return "endpoints";
  }
  return "unknown";
}

KeypointFrame corrupt_frame(const KeypointFrame& clean,
                            const KeypointLayout& layout, SweepAxis axis,
                            double value, Rng& rng) {
  KeypointFrame out = clean;
  const int jk = static_cast<int>(clean.joint_count());
  switch (axis) {
    case SweepAxis::noise_sigma_mm: {
      const double sigma = value / 1000.0;
      if (sigma > 0.0) {
        for (int i = 0; i < jk; ++i) {
          out.positions.row(i) += rng.normal_vec3(sigma).transpose();
        }
      }
      break;
    }
    case SweepAxis::occlusion_frac: {
      // Independent Bernoulli masking; re-drawn (same stream) until at least
      // four joints stay visible so every solver remains applicable.
      for (int attempt = 0; attempt < 64; ++attempt) {
        int visible = 0;
        for (int i = 0; i < jk; ++i) {
          const bool keep = !rng.bernoulli(value);
          out.visible[static_cast<size_t>(i)] = keep;
          visible += keep ? 1 : 0;
        }
        if (visible >= 4) break;
      }
      break;
    }
    case SweepAxis::endpoints: {
      for (int i = 0; i < jk; ++i) out.visible[static_cast<size_t>(i)] = false;
      for (int e : layout.endpoints) out.visible[static_cast<size_t>(e)] = true;
      break;
    }
  }
  return out;
}

SweepReport run_sweep(
    const std::vector<std::pair<std::string, Solver>>& solvers,
    const BodyModel& model, const Dataset& dataset, const SweepConfig& cfg) {
  if (solvers.empty() || cfg.seeds.empty() || cfg.values.empty()) {
    throw ShapeMismatch("run_sweep: need solvers, seeds and axis values");
  }
  for (size_t i = 1; i < cfg.values.size(); ++i) {
    if (cfg.values[i] <= cfg.values[i - 1]) {
      throw DegenerateInput("run_sweep: axis values must strictly increase");
    }
  }
  std::vector<int> test_idx = dataset.indices(Split::test);
  if (test_idx.empty()) throw DataError("run_sweep: empty test split");
  if (cfg.max_frames > 0 &&
      static_cast<int>(test_idx.size()) > cfg.max_frames) {
    test_idx.resize(static_cast<size_t>(cfg.max_frames));
  }
  const int frames = static_cast<int>(test_idx.size());

  // Ground-truth joints/vertices once per frame.
  std::vector<MatXd> gt_joints(static_cast<size_t>(frames));
  std::vector<MatXd> gt_verts(static_cast<size_t>(frames));
#pragma omp parallel for schedule(static)
  for (int f = 0; f < frames; ++f) {
    const auto& s = dataset.samples[static_cast<size_t>(test_idx[f])];
    const auto fk = forward_kinematics(model, s.pose, s.shape);
    gt_joints[static_cast<size_t>(f)] = fk.joints;
    gt_verts[static_cast<size_t>(f)] = fk.vertices;
  }

  SweepReport report;
  report.axis = cfg.axis;
  report.values = cfg.values;
  report.seeds = cfg.seeds;

  for (size_t vi = 0; vi < cfg.values.size(); ++vi) {
    const double value = cfg.values[vi];
    SweepPoint point;
    point.value = value;
    for (const auto& [name, solver] : solvers) point.per_solver[name] = {};

    for (std::uint64_t seed : cfg.seeds) {
      // Corrupt every frame deterministically from (seed, axis value, frame).
      std::vector<KeypointFrame> corrupted(static_cast<size_t>(frames));
      double displacement = 0.0;
      long displaced = 0;
      for (int f = 0; f < frames; ++f) {
        const auto& s = dataset.samples[static_cast<size_t>(test_idx[f])];
        Rng rng(derive_seed(seed, "sweep_corrupt",
                            vi * 1000003ULL + static_cast<std::uint64_t>(f)));
        corrupted[static_cast<size_t>(f)] =
            corrupt_frame(s.keypoints, dataset.layout, cfg.axis, value, rng);
        for (Eigen::Index i = 0; i < s.keypoints.positions.rows(); ++i) {
          displacement += (corrupted[static_cast<size_t>(f)].positions.row(i) -
                           s.keypoints.positions.row(i))
                              .norm();
          ++displaced;
        }
      }
      point.gt_noise_mm +=
          displacement / static_cast<double>(displaced) * 1000.0;

      for (const auto& [name, solver] : solvers) {
        std::vector<EvalResult> per_frame(static_cast<size_t>(frames));
        std::string failure;
#pragma omp parallel for schedule(dynamic)
        for (int f = 0; f < frames; ++f) {
          try {
            const auto& s = dataset.samples[static_cast<size_t>(test_idx[f])];
            const SolverOutput pred = solver(corrupted[static_cast<size_t>(f)]);
            const auto fk = forward_kinematics(model, pred.pose, pred.shape);
            per_frame[static_cast<size_t>(f)] =
                evaluate(fk.joints, fk.vertices, pred.pose,
                         gt_joints[static_cast<size_t>(f)],
                         gt_verts[static_cast<size_t>(f)], s.pose);
          } catch (const std::exception& e) {
#pragma omp critical
            failure = e.what();
          }
        }
        if (!failure.empty()) {
          throw Error("run_sweep: solver '" + name + "' failed: " + failure);
        }
        EvalResult mean;
        for (const auto& r : per_frame) mean += r;
        mean /= static_cast<double>(frames);
        point.per_solver[name] += mean;
      }
    }
    const double n_seeds = static_cast<double>(cfg.seeds.size());
    point.gt_noise_mm /= n_seeds;
    for (auto& [name, r] : point.per_solver) r /= n_seeds;
    report.points.push_back(std::move(point));
  }
  return report;
}

}  // namespace skelformer
