#include "skelformer/joint_regressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skelformer/lbfgs.hpp"
#include "skelformer/rng.hpp"

namespace skelformer {

MatXd JointRegressor::realized() const {
  MatXd w = phi / temperature;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double m = w.row(i).maxCoeff();
    w.row(i) = (w.row(i).array() - m).exp();
    w.row(i) /= w.row(i).sum();
  }
  return w;
}

MatXd regress_keypoints(const JointRegressor& reg, const MatXd& vertices) {
  if (vertices.rows() != reg.phi.cols() || vertices.cols() != 3) {
    throw ShapeMismatch("regress_keypoints: vertex count mismatch");
  }
  return reg.realized() * vertices;
}

VecXd effective_support(const JointRegressor& reg) {
  const MatXd w = reg.realized();
  VecXd out(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double h = 0.0;
    for (Eigen::Index v = 0; v < w.cols(); ++v) {
      const double p = w(i, v);
      if (p > 0.0) h -= p * std::log(p);
    }
    out[i] = std::exp(h);
  }
  return out;
}

RegressorFitReport fit_regressor(const BodyModel& model,
                                 const std::vector<RegressorFitSample>& samples,
                                 double temperature, int max_iters) {
  if (samples.empty()) {
    throw ShapeMismatch("fit_regressor: need at least one sample");
  }
  const int j = static_cast<int>(samples.front().target_keypoints.rows());
  const int v = model.vertex_count();
  const int n = static_cast<int>(samples.size());

  // Vertices are pose/shape functions only; precompute once. The objective
  // works in millimeters so the gradient-norm stop is meaningfully strict.
  std::vector<MatXd> verts(samples.size());
  std::vector<MatXd> targets(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].target_keypoints.rows() != j ||
        samples[i].target_keypoints.cols() != 3) {
      throw ShapeMismatch("fit_regressor: ragged target keypoints");
    }
    verts[i] = forward_kinematics(model, samples[i].pose, samples[i].shape)
                   .vertices *
               1000.0;
    targets[i] = samples[i].target_keypoints * 1000.0;
  }

  // The loss separates by keypoint row, so each row gets its own L-BFGS run;
  // a single joint run starves slow rows of curvature memory.
  RegressorFitReport report;
  report.regressor.temperature = temperature;
  report.regressor.phi = MatXd::Zero(j, v);
  report.converged = true;
  std::string failure;

#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < j; ++k) {
    auto objective = [&](const VecXd& x, VecXd& grad) -> double {
      VecXd w = x / temperature;
      w = (w.array() - w.maxCoeff()).exp();
      w /= w.sum();
      double loss = 0.0;
      VecXd grad_w = VecXd::Zero(v);
      for (size_t i = 0; i < verts.size(); ++i) {
        const Eigen::RowVector3d diff =
            w.transpose() * verts[i] - targets[i].row(k);
        loss += diff.squaredNorm();
        grad_w.noalias() += 2.0 * (verts[i] * diff.transpose());
      }
      loss /= n;
      grad_w /= n;
      const double dot = grad_w.dot(w);
      grad = w.array() * (grad_w.array() - dot) / temperature;
      return loss;
    };
    LbfgsOptions opt;
    opt.max_iters = max_iters;
    // A moderately exact line search matters here: with the textbook c2=0.9
    // the saturating softmax rows trap the iterates in a poor basin
    // (holdout error stalls around 46 mm instead of reaching sub-mm).
    opt.wolfe_c2 = 0.4;
    try {
      const LbfgsResult res = lbfgs_minimize(objective, VecXd::Zero(v), opt);
#pragma omp critical
      {
        report.regressor.phi.row(k) = res.x.transpose();
        report.final_loss += res.f / j;
        report.iterations = std::max(report.iterations, res.iterations);
        report.converged = report.converged && res.converged;
      }
    } catch (const std::exception& e) {
#pragma omp critical
      failure = "fit_regressor: row " + std::to_string(k) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw NonFinite(failure);
  return report;
}

JointRegressor plant_toy_regressor(const ToyBodyModel& toy,
                                   const KeypointLayout& layout,
                                   std::uint64_t seed, double temperature) {
  const BodyModel& m = toy.model;
  const int j_kp = layout.joint_count();
  const int v_total = m.vertex_count();

  // Rest joint positions for nearest-vertex lookup.
  MatXd rest(m.joint_count(), 3);
  rest.row(0).setZero();
  for (int i = 1; i < m.joint_count(); ++i) {
    rest.row(i) =
        rest.row(m.skeleton.parent[i]) + m.skeleton.rest_offsets.row(i);
  }

  Rng rng(derive_seed(seed, "planted_regressor"));
  // Off-support logits sit ~40 nats below the weakest support vertex, which
  // makes their realized weight numerically zero.
  MatXd phi = MatXd::Constant(j_kp, v_total, temperature * -40.0);

  for (int k = 0; k < j_kp; ++k) {
    const int mk = layout.mirror_map[k];
    if (mk < k) continue;  // filled by its canonical partner
    const int anchor = layout.anchor_joints[k];
    std::vector<int> by_distance(static_cast<size_t>(v_total));
    std::iota(by_distance.begin(), by_distance.end(), 0);
    std::sort(by_distance.begin(), by_distance.end(), [&](int a, int b) {
      return (m.template_vertices.row(a) - rest.row(anchor)).squaredNorm() <
             (m.template_vertices.row(b) - rest.row(anchor)).squaredNorm();
    });
    // Candidate pool: the nearest vertices with pairwise-distinct skinning
    // profiles (identically-skinned vertices move rigidly together and are
    // indistinguishable to any fit on motion data).
    std::vector<int> pool;
    for (int idx : by_distance) {
      bool distinct = true;
      for (int kept : pool) {
        if ((m.skinning_weights.row(idx) - m.skinning_weights.row(kept))
                .cwiseAbs()
                .maxCoeff() < 0.02) {
          distinct = false;
          break;
        }
      }
      if (distinct) pool.push_back(idx);
      if (pool.size() >= 8) break;
    }
    // Farthest-point selection inside the pool spreads the support out, so
    // no sparser sub-combination can shadow the planted one.
    auto spread_select = [&](int count) {
      std::vector<int> chosen = {pool.front()};
      while (static_cast<int>(chosen.size()) < count) {
        int best = -1;
        double best_d = -1.0;
        for (int cand : pool) {
          if (std::find(chosen.begin(), chosen.end(), cand) != chosen.end()) {
            continue;
          }
          double d = 1e30;
          for (int c : chosen) {
            d = std::min(d, (m.template_vertices.row(cand) -
                             m.template_vertices.row(c))
                                .squaredNorm());
          }
          if (d > best_d) {
            best_d = d;
            best = cand;
          }
        }
        chosen.push_back(best);
      }
      return chosen;
    };
    if (mk == k) {
      // Midline keypoint: spread-selected vertex pairs with equal weights so
      // the row is itself mirror-symmetric.
      const int pairs = 2;
      const std::vector<int> reps = spread_select(pairs);
      std::vector<double> w(reps.size());
      double sum = 0.0;
      for (double& x : w) {
        x = rng.uniform(0.7, 1.3);
        sum += 2.0 * x;
      }
      for (size_t i = 0; i < reps.size(); ++i) {
        const int partner = toy.vertex_mirror[static_cast<size_t>(reps[i])];
        const double logit = temperature * std::log(w[i] / sum);
        phi(k, reps[i]) = logit;
        phi(k, partner) = logit;
      }
    } else {
      const int support = 4 + static_cast<int>(rng.uniform_index(2));  // 4 or 5
      const std::vector<int> chosen = spread_select(support);
      std::vector<double> w(static_cast<size_t>(support));
      double sum = 0.0;
      for (double& x : w) {
        x = rng.uniform(0.7, 1.3);
        sum += x;
      }
      for (int i = 0; i < support; ++i) {
        const int vtx = chosen[static_cast<size_t>(i)];
        const double logit = temperature * std::log(w[static_cast<size_t>(i)] / sum);
        phi(k, vtx) = logit;
        phi(mk, toy.vertex_mirror[static_cast<size_t>(vtx)]) = logit;
      }
    }
  }

  JointRegressor reg;
  reg.phi = std::move(phi);
  reg.temperature = temperature;
  return reg;
}

}  // namespace skelformer
