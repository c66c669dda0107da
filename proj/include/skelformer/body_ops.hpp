#pragma once

// Differentiable rotation and body-model ops on top of the gradient engine.
// Rotations travel as 9-column rows, row-major (r00 r01 r02 r10 ... r22).

#include <Eigen/Dense>

#include <memory>
#include <type_traits>

#include "skelformer/body_model.hpp"
#include "skelformer/graph.hpp"

namespace skelformer::ad {

template <typename S>
Mat3<S> mat3_from_row(const Mat<S>& m, Eigen::Index r) {
  Mat3<S> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = m(r, 3 * i + j);
  return out;
}

template <typename S, typename Derived>
void row_from_mat3(Mat<S>& m, Eigen::Index r,
                   const Eigen::MatrixBase<Derived>& v) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(r, 3 * i + j) = S(v(i, j));
}

/// Nearest-rotation projection per row (Eq-style symmetric orthogonalization
/// head). Near-degenerate rows fall back to a straight-through gradient and
/// bump graph.svd_fallbacks instead of halting training.
template <typename S>
Var<S> svd_orthogonalize9(Var<S> x, S degeneracy_tol = S(1e-6)) {
  Graph<S>& g = *x.graph;
  if (x.cols() != 9) throw ShapeMismatch("svd_orthogonalize9: need 9 columns");
  const Eigen::Index n = x.rows();
  const int idx = x.id;

  struct RowSvd {
    Mat3<S> u, v;
    Vec3<S> sigma;
    S sign;
  };
  auto cache = std::make_shared<std::vector<RowSvd>>(static_cast<size_t>(n));
  Mat<S> value(n, 9);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Mat3<S> m = mat3_from_row(x.value(), r);
    Eigen::JacobiSVD<Mat3<S>> svd(m,
                                  Eigen::ComputeFullU | Eigen::ComputeFullV);
    RowSvd& c = (*cache)[static_cast<size_t>(r)];
    c.u = svd.matrixU();
    c.v = svd.matrixV();
    c.sigma = svd.singularValues();
    c.sign = (c.u * c.v.transpose()).determinant() < S(0) ? S(-1) : S(1);
    Mat3<S> sigma_o = Mat3<S>::Identity();
    sigma_o(2, 2) = c.sign;
    row_from_mat3(value, r, Mat3<S>(c.u * sigma_o * c.v.transpose()));
  }
  return make_op(
      g, std::move(value), g.needs_grad(x),
      [idx, cache, degeneracy_tol](Graph<S>& gr, int self) {
        const Mat<S>& go = gr.node(self).grad;
        Mat<S> gx(go.rows(), 9);
        for (Eigen::Index r = 0; r < go.rows(); ++r) {
          const RowSvd& c = (*cache)[static_cast<size_t>(r)];
          const S scale_ref = std::max(S(1), c.sigma[0]);
          bool degenerate = false;
          for (int i = 0; i < 3 && !degenerate; ++i) {
            for (int j = i + 1; j < 3; ++j) {
              if (std::abs(c.sigma[i] - c.sigma[j]) <
                      degeneracy_tol * scale_ref ||
                  c.sigma[i] + c.sigma[j] < degeneracy_tol * scale_ref) {
                degenerate = true;
                break;
              }
            }
          }
          const Mat3<S> gtheta = mat3_from_row(go, r);
          if (degenerate) {
            // Straight-through: pass the upstream gradient unchanged.
            ++gr.svd_fallbacks;
            row_from_mat3(gx, r, gtheta);
            continue;
          }
          const Mat3<S> h = c.u.transpose() * gtheta * c.v;
          Vec3<S> sigma_o(S(1), S(1), c.sign);
          Mat3<S> w = Mat3<S>::Zero();
          for (int i = 0; i < 3; ++i) {
            for (int j = i + 1; j < 3; ++j) {
              const S ca = h(i, j) * sigma_o[j] - h(j, i) * sigma_o[i];
              const S cb = h(j, i) * sigma_o[j] - h(i, j) * sigma_o[i];
              const S det = c.sigma[j] * c.sigma[j] - c.sigma[i] * c.sigma[i];
              w(i, j) = (c.sigma[j] * ca + c.sigma[i] * cb) / det;
              w(j, i) = (c.sigma[i] * ca + c.sigma[j] * cb) / det;
            }
          }
          row_from_mat3(gx, r, Mat3<S>(c.u * w * c.v.transpose()));
        }
        gr.accumulate(idx, gx);
      });
}

/// Gram-Schmidt 6-DoF rotation head per row: [N,6] -> [N,9].
template <typename S>
Var<S> sixdof9(Var<S> x) {
  Graph<S>& g = *x.graph;
  if (x.cols() != 6) throw ShapeMismatch("sixdof9: need 6 columns");
  const Eigen::Index n = x.rows();
  const int idx = x.id;
  Mat<S> value(n, 9);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vec3<S> a = x.value().row(r).template head<3>().transpose();
    const Vec3<S> b = x.value().row(r).template tail<3>().transpose();
    const S an = std::max(a.norm(), S(1e-12));
    const Vec3<S> c0 = a / an;
    Vec3<S> w = b - c0.dot(b) * c0;
    const S wn = std::max(w.norm(), S(1e-12));
    const Vec3<S> c1 = w / wn;
    const Vec3<S> c2 = c0.cross(c1);
    Mat3<S> rot;
    rot.col(0) = c0;
    rot.col(1) = c1;
    rot.col(2) = c2;
    row_from_mat3(value, r, rot);
  }
  return make_op(g, std::move(value), g.needs_grad(x),
                 [idx](Graph<S>& gr, int self) {
    const Mat<S>& go = gr.node(self).grad;
    const Mat<S>& xv = gr.node(idx).value;
    Mat<S> gx = Mat<S>::Zero(go.rows(), 6);
    for (Eigen::Index r = 0; r < go.rows(); ++r) {
      const Vec3<S> a = xv.row(r).template head<3>().transpose();
      const Vec3<S> b = xv.row(r).template tail<3>().transpose();
      const S an = std::max(a.norm(), S(1e-12));
      const Vec3<S> c0 = a / an;
      Vec3<S> w = b - c0.dot(b) * c0;
      const S wn = std::max(w.norm(), S(1e-12));
      const Vec3<S> c1 = w / wn;
      const Mat3<S> gtheta = mat3_from_row(go, r);
      Vec3<S> g0 = gtheta.col(0);
      Vec3<S> g1 = gtheta.col(1);
      const Vec3<S> g2 = gtheta.col(2);
      // c2 = c0 x c1.
      g0 += c1.cross(g2);
      g1 -= c0.cross(g2);
      // c1 = w / |w|.
      const Vec3<S> gw = (g1 - c1 * c1.dot(g1)) / wn;
      // w = b - (c0 . b) c0.
      Vec3<S> gb = gw - c0 * c0.dot(gw);
      g0 -= b * c0.dot(gw) + c0.dot(b) * gw;
      // c0 = a / |a|.
      const Vec3<S> ga = (g0 - c0 * c0.dot(g0)) / an;
      gx.row(r).template head<3>() = ga.transpose();
      gx.row(r).template tail<3>() = gb.transpose();
    }
    gr.accumulate(idx, gx);
  });
}

/// Left-multiplies each 9-column row by a fixed rotation row (de-normalizes
/// network deltas by the mean pose): out_r = L_r * X_r.
template <typename S>
Var<S> premul_rows9(Var<S> x,
                    std::type_identity_t<std::shared_ptr<const Mat<S>>> left) {
  Graph<S>& g = *x.graph;
  if (x.cols() != 9 || left->cols() != 9 || left->rows() != x.rows()) {
    throw ShapeMismatch("premul_rows9: shape mismatch");
  }
  const Eigen::Index n = x.rows();
  const int idx = x.id;
  Mat<S> value(n, 9);
  for (Eigen::Index r = 0; r < n; ++r) {
    row_from_mat3(value, r,
                  Mat3<S>(mat3_from_row(*left, r) * mat3_from_row(x.value(), r)));
  }
  return make_op(g, std::move(value), g.needs_grad(x),
                 [idx, left](Graph<S>& gr, int self) {
                   const Mat<S>& go = gr.node(self).grad;
                   Mat<S> gx(go.rows(), 9);
                   for (Eigen::Index r = 0; r < go.rows(); ++r) {
                     row_from_mat3(
                         gx, r,
                         Mat3<S>(mat3_from_row(*left, r).transpose() *
                                 mat3_from_row(go, r)));
                   }
                   gr.accumulate(idx, gx);
                 });
}

/// Composes local rotations down the kinematic tree per batch sample:
/// G_root = R_root, G_j = G_parent(j) * R_j. x is [B*J, 9].
template <typename S>
Var<S> chain_products9(Var<S> x,
                       std::shared_ptr<const std::vector<int>> parent,
                       int batch) {
  Graph<S>& g = *x.graph;
  const int joints = static_cast<int>(parent->size());
  if (x.cols() != 9 || x.rows() != static_cast<Eigen::Index>(batch) * joints) {
    throw ShapeMismatch("chain_products9: shape mismatch");
  }
  const int idx = x.id;
  Mat<S> value(x.rows(), 9);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * joints;
    row_from_mat3(value, base, mat3_from_row(x.value(), base));
    for (int j = 1; j < joints; ++j) {
      const Mat3<S> gp = mat3_from_row(value, base + (*parent)[j]);
      row_from_mat3(value, base + j,
                    Mat3<S>(gp * mat3_from_row(x.value(), base + j)));
    }
  }
  return make_op(
      g, std::move(value), g.needs_grad(x),
      [idx, parent, batch, joints](Graph<S>& gr, int self) {
        const Mat<S>& go = gr.node(self).grad;
        const Mat<S>& globals = gr.node(self).value;
        const Mat<S>& locals = gr.node(idx).value;
        Mat<S> gx(go.rows(), 9);
        for (int b = 0; b < batch; ++b) {
          const Eigen::Index base = static_cast<Eigen::Index>(b) * joints;
          std::vector<Mat3<S>> gbar(static_cast<size_t>(joints));
          for (int j = 0; j < joints; ++j) {
            gbar[static_cast<size_t>(j)] = mat3_from_row(go, base + j);
          }
          for (int j = joints - 1; j >= 1; --j) {
            const int p = (*parent)[j];
            const Mat3<S> gpar = mat3_from_row(globals, base + p);
            row_from_mat3(gx, base + j,
                          Mat3<S>(gpar.transpose() * gbar[static_cast<size_t>(j)]));
            gbar[static_cast<size_t>(p)] +=
                gbar[static_cast<size_t>(j)] *
                mat3_from_row(locals, base + j).transpose();
          }
          row_from_mat3(gx, base, gbar[0]);
        }
        gr.accumulate(idx, gx);
      });
}

/// Body-model constants cast to the engine scalar once per run. The realized
/// (row-softmax) keypoint regressor rides along for the loss path.
template <typename S>
struct ModelConsts {
  std::vector<int> parent;
  Mat<S> rest_offsets;       // J x 3
  Mat<S> joint_shape_dirs;   // 3J x B
  Mat<S> template_vertices;  // V x 3
  Mat<S> shape_dirs;         // 3V x B
  Mat<S> skinning;           // V x J
  Mat<S> regressor;          // Jk x V

  int joints() const { return static_cast<int>(parent.size()); }
  int verts() const { return static_cast<int>(template_vertices.rows()); }
  int shape_dim() const { return static_cast<int>(shape_dirs.cols()); }

  static std::shared_ptr<const ModelConsts<S>> make(
      const BodyModel& model, const MatXd& realized_regressor) {
    auto mc = std::make_shared<ModelConsts<S>>();
    mc->parent = model.skeleton.parent;
    mc->rest_offsets = model.skeleton.rest_offsets.template cast<S>();
    mc->joint_shape_dirs = model.joint_shape_dirs.template cast<S>();
    mc->template_vertices = model.template_vertices.template cast<S>();
    mc->shape_dirs = model.shape_dirs.template cast<S>();
    mc->skinning = model.skinning_weights.template cast<S>();
    mc->regressor = realized_regressor.template cast<S>();
    return mc;
  }
};

/// Forward kinematics + linear blend skinning at zero root translation.
/// globals: [B*J, 9] global rotations, beta: [B, Bdim].
/// Output rows: all joints batch-contiguous, then all vertices:
/// [B*J joint rows; B*V vertex rows] -> [B*(J+V), 3].
template <typename S>
Var<S> fk_positions(Var<S> globals, Var<S> beta,
                    std::shared_ptr<const ModelConsts<S>> mc, int batch) {
  Graph<S>& g = *globals.graph;
  const int joints = mc->joints();
  const int verts = mc->verts();
  if (globals.cols() != 9 ||
      globals.rows() != static_cast<Eigen::Index>(batch) * joints ||
      beta.rows() != batch || beta.cols() != mc->shape_dim()) {
    throw ShapeMismatch("fk_positions: shape mismatch");
  }
  const int idg = globals.id, idb = beta.id;
  const Eigen::Index joint_rows = static_cast<Eigen::Index>(batch) * joints;

  Mat<S> value(joint_rows + static_cast<Eigen::Index>(batch) * verts, 3);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index gbase = static_cast<Eigen::Index>(b) * joints;
    const Vec<S> bcoef = beta.value().row(b).transpose();

    // Shaped bone vectors and rest joint positions (root pinned at origin).
    Mat<S> offsets = mc->rest_offsets;
    {
      const Vec<S> d = mc->joint_shape_dirs * bcoef;
      for (int j = 0; j < joints; ++j) {
        offsets.row(j) += d.template segment<3>(3 * j).transpose();
      }
    }
    Mat<S> rest(joints, 3);
    rest.row(0).setZero();
    Mat<S> pos(joints, 3);
    pos.row(0).setZero();
    for (int j = 1; j < joints; ++j) {
      const int p = mc->parent[static_cast<size_t>(j)];
      rest.row(j) = rest.row(p) + offsets.row(j);
      const Mat3<S> gp = mat3_from_row(globals.value(), gbase + p);
      pos.row(j) = pos.row(p) + (gp * offsets.row(j).transpose()).transpose();
    }
    value.middleRows(gbase, joints) = pos;

    // Shaped template vertices.
    Mat<S> shaped = mc->template_vertices;
    {
      const Vec<S> d = mc->shape_dirs * bcoef;
      for (int v = 0; v < verts; ++v) {
        shaped.row(v) += d.template segment<3>(3 * v).transpose();
      }
    }
    auto out_verts = value.middleRows(joint_rows + static_cast<Eigen::Index>(b) * verts, verts);
    out_verts.setZero();
    for (int j = 0; j < joints; ++j) {
      const Mat3<S> gj = mat3_from_row(globals.value(), gbase + j);
      const Vec3<S> d = pos.row(j).transpose() - gj * rest.row(j).transpose();
      Mat<S> transformed = shaped * gj.transpose();
      transformed.rowwise() += d.transpose();
      out_verts += mc->skinning.col(j).asDiagonal() * transformed;
    }
  }

  const bool needs = g.needs_grad(globals) || g.needs_grad(beta);
  return make_op(
      g, std::move(value), needs,
      [idg, idb, mc, batch, joints, verts](Graph<S>& gr, int self) {
        const Mat<S>& go = gr.node(self).grad;
        const Mat<S>& out = gr.node(self).value;
        const Mat<S>& globals_v = gr.node(idg).value;
        const Mat<S>& beta_v = gr.node(idb).value;
        const bool want_g = gr.node(idg).needs_grad;
        const bool want_b = gr.node(idb).needs_grad;
        Mat<S> ggl = Mat<S>::Zero(globals_v.rows(), 9);
        Mat<S> gbe = Mat<S>::Zero(beta_v.rows(), beta_v.cols());
        const Eigen::Index joint_rows = static_cast<Eigen::Index>(batch) * joints;

        for (int b = 0; b < batch; ++b) {
          const Eigen::Index gbase = static_cast<Eigen::Index>(b) * joints;
          const Vec<S> bcoef = beta_v.row(b).transpose();

          // Recompute cheap per-sample intermediates.
          Mat<S> offsets = mc->rest_offsets;
          {
            const Vec<S> d = mc->joint_shape_dirs * bcoef;
            for (int j = 0; j < joints; ++j) {
              offsets.row(j) += d.template segment<3>(3 * j).transpose();
            }
          }
          Mat<S> rest(joints, 3);
          rest.row(0).setZero();
          for (int j = 1; j < joints; ++j) {
            rest.row(j) = rest.row(mc->parent[static_cast<size_t>(j)]) +
                          offsets.row(j);
          }
          Mat<S> shaped = mc->template_vertices;
          {
            const Vec<S> d = mc->shape_dirs * bcoef;
            for (int v = 0; v < verts; ++v) {
              shaped.row(v) += d.template segment<3>(3 * v).transpose();
            }
          }
          const auto pos = out.middleRows(gbase, joints);
          const auto gy = go.middleRows(
              joint_rows + static_cast<Eigen::Index>(b) * verts, verts);

          Mat<S> gpos = go.middleRows(gbase, joints);  // joint position grads
          Mat<S> grest = Mat<S>::Zero(joints, 3);
          Mat<S> gshaped = Mat<S>::Zero(verts, 3);
          std::vector<Mat3<S>> gG(static_cast<size_t>(joints),
                                  Mat3<S>::Zero());

          // Skinning backward.
          for (int j = 0; j < joints; ++j) {
            const Mat3<S> gj = mat3_from_row(globals_v, gbase + j);
            const Vec<S>& wcol = mc->skinning.col(j);
            Mat<S> wy = wcol.asDiagonal() * gy;  // V x 3
            const Vec3<S> dbar = wy.colwise().sum().transpose();
            gG[static_cast<size_t>(j)].noalias() += wy.transpose() * shaped;
            gshaped.noalias() += wy * gj;
            // d_j = pos_j - G_j rest_j.
            gpos.row(j) += dbar.transpose();
            gG[static_cast<size_t>(j)].noalias() -=
                dbar * rest.row(j);
            grest.row(j) -= (gj.transpose() * dbar).transpose();
          }

          // Joint-position chain backward (reverse topological order).
          Mat<S> goffsets = Mat<S>::Zero(joints, 3);
          for (int j = joints - 1; j >= 1; --j) {
            const int p = mc->parent[static_cast<size_t>(j)];
            const Mat3<S> gp = mat3_from_row(globals_v, gbase + p);
            const Vec3<S> pj = gpos.row(j).transpose();
            gpos.row(p) += gpos.row(j);
            gG[static_cast<size_t>(p)].noalias() += pj * offsets.row(j);
            goffsets.row(j) += (gp.transpose() * pj).transpose();
          }
          // Rest-position chain backward.
          for (int j = joints - 1; j >= 1; --j) {
            const int p = mc->parent[static_cast<size_t>(j)];
            grest.row(p) += grest.row(j);
            goffsets.row(j) += grest.row(j);
          }

          if (want_g) {
            for (int j = 0; j < joints; ++j) {
              row_from_mat3(ggl, gbase + j, gG[static_cast<size_t>(j)]);
            }
          }
          if (want_b) {
            Vec<S> flat_v(3 * verts);
            for (int v = 0; v < verts; ++v) {
              flat_v.template segment<3>(3 * v) = gshaped.row(v).transpose();
            }
            Vec<S> flat_j(3 * joints);
            for (int j = 0; j < joints; ++j) {
              flat_j.template segment<3>(3 * j) = goffsets.row(j).transpose();
            }
            gbe.row(b) += (mc->shape_dirs.transpose() * flat_v +
                           mc->joint_shape_dirs.transpose() * flat_j)
                              .transpose();
          }
        }
        if (want_g) gr.accumulate(idg, ggl);
        if (want_b) gr.accumulate(idb, gbe);
      });
}

/// Applies the fixed keypoint regressor per batch: verts [B*V, 3] ->
/// keypoints [B*Jk, 3].
template <typename S>
Var<S> regress_batch(Var<S> verts, std::shared_ptr<const ModelConsts<S>> mc,
                     int batch) {
  Graph<S>& g = *verts.graph;
  const Eigen::Index v = mc->regressor.cols();
  const Eigen::Index jk = mc->regressor.rows();
  if (verts.cols() != 3 || verts.rows() != static_cast<Eigen::Index>(batch) * v) {
    throw ShapeMismatch("regress_batch: shape mismatch");
  }
  const int idv = verts.id;
  Mat<S> value(static_cast<Eigen::Index>(batch) * jk, 3);
  for (int b = 0; b < batch; ++b) {
    value.middleRows(b * jk, jk).noalias() =
        mc->regressor * verts.value().middleRows(b * v, v);
  }
  return make_op(g, std::move(value), g.needs_grad(verts),
                 [idv, mc, batch, v, jk](Graph<S>& gr, int self) {
                   const Mat<S>& go = gr.node(self).grad;
                   Mat<S> gv(static_cast<Eigen::Index>(batch) * v, 3);
                   for (int b = 0; b < batch; ++b) {
                     gv.middleRows(b * v, v).noalias() =
                         mc->regressor.transpose() * go.middleRows(b * jk, jk);
                   }
                   gr.accumulate(idv, gv);
                 });
}

/// Mean geodesic distance between per-row rotations: (1/N) sum over rows of
/// arccos(clamp((tr(R T^t) - 1) / 2)). The clamp keeps values finite; the
/// gradient factor is capped correspondingly near the boundary.
template <typename S>
Var<S> geodesic_loss9(Var<S> pred, Var<S> target) {
  Graph<S>& g = *pred.graph;
  if (pred.cols() != 9 || target.cols() != 9 || pred.rows() != target.rows()) {
    throw ShapeMismatch("geodesic_loss9: shape mismatch");
  }
  const int idp = pred.id, idt = target.id;
  const Eigen::Index n = pred.rows();
  const S boundary = S(1) - S(1e-7);
  Mat<S> value = Mat<S>::Zero(1, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    S tr = S(0);
    for (int e = 0; e < 9; ++e) tr += pred.value()(r, e) * target.value()(r, e);
    const S c = std::clamp((tr - S(1)) / S(2), S(-1), S(1));
    value(0, 0) += std::acos(c);
  }
  value(0, 0) /= static_cast<S>(n);
  return make_op(
      g, std::move(value), g.needs_grad(pred),
      [idp, idt, n, boundary](Graph<S>& gr, int self) {
        const S go = gr.node(self).grad(0, 0);
        const Mat<S>& p = gr.node(idp).value;
        const Mat<S>& t = gr.node(idt).value;
        Mat<S> gp(n, 9);
        for (Eigen::Index r = 0; r < n; ++r) {
          S tr = S(0);
          for (int e = 0; e < 9; ++e) tr += p(r, e) * t(r, e);
          S c = std::clamp((tr - S(1)) / S(2), -boundary, boundary);
          const S factor =
              -go / (static_cast<S>(n) * S(2) * std::sqrt(S(1) - c * c));
          gp.row(r) = factor * t.row(r);
        }
        gr.accumulate(idp, gp);
      });
}

}  // namespace skelformer::ad
