#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "skelformer/augment.hpp"
#include "skelformer/dataset.hpp"
#include "skelformer/mean_pose.hpp"
#include "skelformer/metrics.hpp"
#include "skelformer/skelnet.hpp"

namespace skelformer {

struct TrainConfig {
  int batch_size = 64;
  double lr = 1e-3;
  double warmup_factor = 1e-4;
  int warmup_iters = 200;
  int total_iters = 5000;
  double final_lr = 1e-7;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  int val_interval = 1000;
  int val_frames = 256;
  double smooth_l1_delta = 0.01;  // meters
  double w_rot = 1.0;
  double w_pos = 1.0;
  double w_shape = 1.0;
  int log_interval = 50;

  static TrainConfig desk() { return TrainConfig{}; }
  static TrainConfig paper() {
    TrainConfig c;
    c.batch_size = 1024;
    c.warmup_iters = 2000;
    c.total_iters = 50000;
    return c;
  }

  void validate() const {
    if (warmup_iters >= total_iters || final_lr >= lr || batch_size < 1) {
      throw DegenerateInput("TrainConfig: invalid schedule");
    }
  }
};

/// Linear warmup from lr * warmup_factor to lr, then cosine decay to
/// final_lr at total_iters.
inline double lr_at(const TrainConfig& cfg, int iter) {
  if (iter < 0 || iter > cfg.total_iters) {
    throw DegenerateInput("lr_at: iteration out of range");
  }
  if (iter <= cfg.warmup_iters) {
    const double t = static_cast<double>(iter) / cfg.warmup_iters;
    return cfg.lr * (cfg.warmup_factor + (1.0 - cfg.warmup_factor) * t);
  }
  const double t = static_cast<double>(iter - cfg.warmup_iters) /
                   (cfg.total_iters - cfg.warmup_iters);
  return cfg.final_lr +
         0.5 * (cfg.lr - cfg.final_lr) * (1.0 + std::cos(kPi * t));
}

struct LossBreakdown {
  double rot_local = 0.0;
  double rot_global = 0.0;
  double pos_keypoints = 0.0;
  double pos_vertices = 0.0;
  double shape = 0.0;
  double total = 0.0;
};

/// Reference (value-level) evaluation of the training loss for one frame:
/// L = L_R + L_P + L_S with L_R the mean local+global geodesic distance,
/// L_P the smooth-L1 over keypoints and vertices (mean over entries), and
/// L_S the squared shape distance. Matches the differentiable path used in
/// training term by term.
LossBreakdown loss_total(const BodyModel& model, const MatXd& realized_reg,
                         const PoseParams& pred_pose,
                         const ShapeParams& pred_shape,
                         const MotionSample& target, double delta = 0.01,
                         double w_rot = 1.0, double w_pos = 1.0,
                         double w_shape = 1.0);

struct TrainLogEntry {
  int iter = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct ValLogEntry {
  int iter = 0;
  double mpjpe_mm = 0.0;
  double rot_error_deg = 0.0;
};

template <typename S>
struct TrainResult {
  SkelNetWeights<S> final_weights;
  SkelNetWeights<S> best_weights;
  double best_val_mpjpe_mm = 0.0;
  int best_iter = -1;
  long svd_fallbacks = 0;
  std::vector<ValLogEntry> val_log;
};

/// Per-frame validation MPJPE (root-centered) and local rotation error for a
/// weight snapshot, batched through the forward graph.
template <typename S>
ValLogEntry validate_weights(SkelNetWeights<S>& weights, const BodyModel& model,
                             std::shared_ptr<const ad::ModelConsts<S>> mc,
                             const Dataset& dataset,
                             const std::vector<int>& frame_indices,
                             int batch_size) {
  const int jb = weights.config.j_body;
  const int jk = weights.config.j_in;
  ValLogEntry out;
  long frames_done = 0;
  for (size_t start = 0; start < frame_indices.size();
       start += static_cast<size_t>(batch_size)) {
    const int b = static_cast<int>(
        std::min(frame_indices.size() - start, static_cast<size_t>(batch_size)));
    ad::Mat<S> kp(b * jk, 3);
    auto vis = std::make_shared<ad::Vec<S>>(b * jk);
    for (int i = 0; i < b; ++i) {
      const auto& s =
          dataset.samples[static_cast<size_t>(frame_indices[start + i])];
      kp.middleRows(i * jk, jk) = s.keypoints.positions.template cast<S>();
      for (int k = 0; k < jk; ++k) {
        (*vis)[i * jk + k] = s.keypoints.visible[static_cast<size_t>(k)]
                                 ? S(1)
                                 : S(0);
      }
    }
    ad::Graph<S> g;
    auto fg = forward_graph(g, weights, model.skeleton, mc, kp, vis, b, false);
    for (int i = 0; i < b; ++i) {
      const auto& s =
          dataset.samples[static_cast<size_t>(frame_indices[start + i])];
      const auto gt = forward_kinematics(model, s.pose, s.shape);
      // Root-centered MPJPE.
      const MatXd pred =
          fg.joints.value().middleRows(i * jb, jb).template cast<double>();
      const Vec3d pr = pred.row(0).transpose();
      const Vec3d gr = gt.joints.row(0).transpose();
      double err = 0.0;
      for (int j = 0; j < jb; ++j) {
        err += ((pred.row(j).transpose() - pr) -
                (gt.joints.row(j).transpose() - gr))
                   .norm();
      }
      out.mpjpe_mm += err / jb * 1000.0;
      double rot = 0.0;
      for (int j = 0; j < jb; ++j) {
        const Mat3d r = ad::mat3_from_row(fg.theta9.value(), i * jb + j)
                            .template cast<double>();
        rot += geodesic_distance(r, s.pose.local_rotations[static_cast<size_t>(j)]);
      }
      out.rot_error_deg += rot / jb * 180.0 / kPi;
      ++frames_done;
    }
  }
  if (frames_done > 0) {
    out.mpjpe_mm /= static_cast<double>(frames_done);
    out.rot_error_deg /= static_cast<double>(frames_done);
  }
  return out;
}

/// AdamW training loop; deterministic given the config seed. Writes
/// line-delimited log records to `log` when provided. Aborts with NonFinite
/// (offending iteration in the message) if the loss leaves the reals.
template <typename S>
TrainResult<S> train(const BodyModel& model, const JointRegressor& regressor,
                     const Dataset& dataset, const SkelNetConfig& net_cfg,
                     const TrainConfig& cfg, const AugmentConfig& aug,
                     std::ostream* log = nullptr) {
  cfg.validate();
  net_cfg.validate();
  const MatXd realized = regressor.realized();
  const std::vector<int> train_idx = dataset.indices(Split::train);
  std::vector<int> val_idx = dataset.indices(Split::val);
  if (train_idx.empty()) throw DataError("train: empty train split");
  if (static_cast<int>(val_idx.size()) > cfg.val_frames) {
    val_idx.resize(static_cast<size_t>(cfg.val_frames));
  }

  // Mean pose over the train split (plus mirrors, inside compute_mean_pose).
  std::vector<PoseParams> train_poses;
  train_poses.reserve(train_idx.size());
  for (int i : train_idx) {
    train_poses.push_back(dataset.samples[static_cast<size_t>(i)].pose);
  }
  const MeanPose mean = compute_mean_pose(model.skeleton, train_poses);

  TrainResult<S> result;
  result.final_weights =
      SkelNetWeights<S>::init(net_cfg, dataset.layout, cfg.seed);
  SkelNetWeights<S>& w = result.final_weights;
  for (int j = 0; j < net_cfg.j_body; ++j) {
    ad::row_from_mat3(w.theta_m, j,
                      Mat3<S>(mean.theta_m[static_cast<size_t>(j)].cast<S>()));
  }
  auto mc = ad::ModelConsts<S>::make(model, realized);

  // AdamW state per parameter entry.
  std::vector<ad::Mat<S>> adam_m, adam_v;
  for (const auto& e : w.params.entries) {
    adam_m.push_back(ad::Mat<S>::Zero(e.value.rows(), e.value.cols()));
    adam_v.push_back(ad::Mat<S>::Zero(e.value.rows(), e.value.cols()));
  }

  const int jb = net_cfg.j_body;
  const int jk = net_cfg.j_in;
  const int vcount = model.vertex_count();
  const int batch = cfg.batch_size;
  Rng batch_rng(derive_seed(cfg.seed, "batch"));
  result.best_val_mpjpe_mm = std::numeric_limits<double>::infinity();

  // Reused batch buffers.
  ad::Mat<S> kp(batch * jk, 3);
  ad::Mat<S> theta_t(batch * jb, 9), globals_t(batch * jb, 9);
  ad::Mat<S> kp_t(batch * jk, 3), verts_t(batch * vcount, 3);
  ad::Mat<S> beta_t(batch, net_cfg.shape_dim);

  for (int iter = 0; iter < cfg.total_iters; ++iter) {
    auto vis = std::make_shared<ad::Vec<S>>(batch * jk);
    // Assemble the batch: sample uniformly with replacement, augment with a
    // per-(iter, slot) stream so batch parallelism cannot change results.
    for (int slot = 0; slot < batch; ++slot) {
      const int idx = train_idx[static_cast<size_t>(
          batch_rng.uniform_index(train_idx.size()))];
      Rng aug_rng(derive_seed(cfg.seed, "augment",
                              static_cast<std::uint64_t>(iter) * batch + slot));
      const AugmentedSample a = augment(aug, model, realized, dataset.layout,
                                        dataset.samples[static_cast<size_t>(idx)],
                                        aug_rng);
      kp.middleRows(slot * jk, jk) = a.corrupted.positions.template cast<S>();
      for (int k = 0; k < jk; ++k) {
        (*vis)[slot * jk + k] =
            a.corrupted.visible[static_cast<size_t>(k)] ? S(1) : S(0);
      }
      const auto fk = forward_kinematics(model, a.pose, a.shape);
      for (int j = 0; j < jb; ++j) {
        ad::row_from_mat3(
            theta_t, slot * jb + j,
            Mat3<S>(a.pose.local_rotations[static_cast<size_t>(j)].cast<S>()));
        ad::row_from_mat3(globals_t, slot * jb + j,
                          Mat3<S>(fk.globals[static_cast<size_t>(j)].cast<S>()));
      }
      verts_t.middleRows(slot * vcount, vcount) =
          fk.vertices.template cast<S>();
      kp_t.middleRows(slot * jk, jk) =
          (realized * fk.vertices).template cast<S>();
      beta_t.row(slot) = a.shape.beta.transpose().template cast<S>();
    }

    ad::Graph<S> g;
    auto fg = forward_graph(g, w, model.skeleton, mc, kp, vis, batch, true);
    auto l_rot_local = ad::geodesic_loss9(fg.theta9, g.input(theta_t));
    auto l_rot_global = ad::geodesic_loss9(fg.globals9, g.input(globals_t));
    auto l_pos_kp = ad::smooth_l1_loss(fg.keypoints, g.input(kp_t),
                                   static_cast<S>(cfg.smooth_l1_delta));
    auto l_pos_v = ad::smooth_l1_loss(fg.vertices, g.input(verts_t),
                                  static_cast<S>(cfg.smooth_l1_delta));
    auto l_shape = ad::l2sq_loss(fg.beta, g.input(beta_t));
    auto loss = ad::sum_scalars<S>(
        {ad::scale(l_rot_local, static_cast<S>(cfg.w_rot)),
         ad::scale(l_rot_global, static_cast<S>(cfg.w_rot)),
         ad::scale(l_pos_kp, static_cast<S>(cfg.w_pos)),
         ad::scale(l_pos_v, static_cast<S>(cfg.w_pos)),
         ad::scale(l_shape, static_cast<S>(cfg.w_shape))});

    LossBreakdown lb;
    lb.rot_local = static_cast<double>(l_rot_local.value()(0, 0));
    lb.rot_global = static_cast<double>(l_rot_global.value()(0, 0));
    lb.pos_keypoints = static_cast<double>(l_pos_kp.value()(0, 0));
    lb.pos_vertices = static_cast<double>(l_pos_v.value()(0, 0));
    lb.shape = static_cast<double>(l_shape.value()(0, 0));
    lb.total = static_cast<double>(loss.value()(0, 0));
    if (!std::isfinite(lb.total)) {
      throw NonFinite("train: non-finite loss at iteration " +
                      std::to_string(iter));
    }

    w.params.zero_grads();
    g.backward(loss);
    result.svd_fallbacks += g.svd_fallbacks;

    // AdamW with decoupled weight decay.
    const double lr = lr_at(cfg, iter);
    const double t = iter + 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    for (size_t e = 0; e < w.params.entries.size(); ++e) {
      auto& entry = w.params.entries[e];
      adam_m[e] = static_cast<S>(cfg.adam_beta1) * adam_m[e] +
                  static_cast<S>(1.0 - cfg.adam_beta1) * entry.grad;
      adam_v[e] = static_cast<S>(cfg.adam_beta2) * adam_v[e] +
                  static_cast<S>(1.0 - cfg.adam_beta2) *
                      entry.grad.cwiseProduct(entry.grad);
      entry.value -=
          static_cast<S>(lr) *
          ((adam_m[e] / static_cast<S>(bc1)).array() /
               ((adam_v[e] / static_cast<S>(bc2)).array().sqrt() +
                static_cast<S>(cfg.adam_eps)) +
           static_cast<S>(cfg.weight_decay) * entry.value.array())
              .matrix();
    }

    if (log != nullptr &&
        (iter % cfg.log_interval == 0 || iter + 1 == cfg.total_iters)) {
      (*log) << "{\"iter\":" << iter << ",\"lr\":" << lr
             << ",\"loss\":" << lb.total << ",\"rot_local\":" << lb.rot_local
             << ",\"rot_global\":" << lb.rot_global
             << ",\"pos_kp\":" << lb.pos_keypoints
             << ",\"pos_verts\":" << lb.pos_vertices
             << ",\"shape\":" << lb.shape << "}\n";
    }

    const bool last = iter + 1 == cfg.total_iters;
    if (!val_idx.empty() &&
        ((iter + 1) % cfg.val_interval == 0 || last)) {
      ValLogEntry v = validate_weights(w, model, mc, dataset, val_idx, batch);
      v.iter = iter + 1;
      result.val_log.push_back(v);
      if (log != nullptr) {
        (*log) << "{\"iter\":" << v.iter << ",\"val_mpjpe_mm\":" << v.mpjpe_mm
               << ",\"val_rot_error_deg\":" << v.rot_error_deg << "}\n";
      }
      if (v.mpjpe_mm < result.best_val_mpjpe_mm) {
        result.best_val_mpjpe_mm = v.mpjpe_mm;
        result.best_iter = v.iter;
        result.best_weights = w;  // snapshot
      }
    }
  }
  if (result.best_iter < 0) {
    result.best_weights = w;
    result.best_iter = cfg.total_iters;
  }
  return result;
}

}  // namespace skelformer
