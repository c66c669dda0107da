#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <type_traits>
#include <vector>

#include "skelformer/common.hpp"

namespace skelformer::ad {

// Reverse-mode gradient engine over a static per-forward graph. A Graph owns
// the tape; ops append nodes during the forward pass and register backward
// closures that run in reverse creation order. Values are dense matrices;
// batched quantities are stacked row blocks ([batch * tokens, channels]).

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
class Graph;

template <typename S>
struct Var {
  Graph<S>* graph = nullptr;
  int id = -1;

  const Mat<S>& value() const { return graph->node(id).value; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename S>
class Graph {
 public:
  struct Node {
    Mat<S> value;
    Mat<S> grad;  // empty until touched by backward
    std::function<void(Graph&, int)> backward;
    Mat<S>* sink = nullptr;  // external accumulation target for leaves
    bool needs_grad = false;
  };

  /// Constant leaf.
  Var<S> input(Mat<S> value) { return push(std::move(value), false); }

  /// Differentiable leaf; the gradient accumulates into *sink (same shape)
  /// when provided.
  Var<S> param(Mat<S> value, Mat<S>* sink = nullptr) {
    Var<S> v = push(std::move(value), true);
    node(v.id).sink = sink;
    return v;
  }

  Var<S> push(Mat<S> value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

  bool needs_grad(Var<S> v) const {
    return nodes_[static_cast<size_t>(v.id)].needs_grad;
  }

  /// Adds into a node's gradient buffer, allocating it on first touch.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = node(id);
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Gradient of a node (zeros if it was never reached).
  Mat<S> grad_of(int id) {
    Node& n = node(id);
    if (n.grad.size() == 0) {
      return Mat<S>::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  /// Runs reverse accumulation from a scalar loss node, then pushes leaf
  /// gradients into their sinks.
  void backward(Var<S> loss) {
    Node& ln = node(loss.id);
    if (ln.value.rows() != 1 || ln.value.cols() != 1) {
      throw ShapeMismatch("Graph::backward: loss must be a 1x1 node");
    }
    ln.grad = Mat<S>::Ones(1, 1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = node(i);
      if (n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
    }
    for (auto& n : nodes_) {
      if (n.sink != nullptr && n.grad.size() != 0) {
        *n.sink += n.grad;
      }
    }
  }

  long svd_fallbacks = 0;  // degenerate-gradient events in the rotation head

 private:
  std::vector<Node> nodes_;
};

// Registers an op node: `value` is the forward result, `bwd(graph, self)`
// distributes grad_of(self) to the inputs. The closure must address nodes by
// id only; node references go stale as the tape grows.
template <typename S, typename Bwd>
Var<S> make_op(Graph<S>& g, Mat<S> value, bool needs_grad, Bwd&& bwd) {
  Var<S> out = g.push(std::move(value), needs_grad);
  if (needs_grad) {
    g.node(out.id).backward = std::forward<Bwd>(bwd);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generic ops.

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph;
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dims differ");
  const int ida = a.id, idb = b.id;
  Mat<S> value = a.value() * b.value();
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return make_op(g, std::move(value), needs, [ida, idb](Graph<S>& gr, int self) {
    const Mat<S>& go = gr.node(self).grad;
    if (gr.node(ida).needs_grad) {
      gr.accumulate(ida, go * gr.node(idb).value.transpose());
    }
    if (gr.node(idb).needs_grad) {
      gr.accumulate(idb, gr.node(ida).value.transpose() * go);
    }
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph;
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("add: shapes differ");
  }
  const int ida = a.id, idb = b.id;
  Mat<S> value = a.value() + b.value();
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return make_op(g, std::move(value), needs, [ida, idb](Graph<S>& gr, int self) {
    const Mat<S>& go = gr.node(self).grad;
    gr.accumulate(ida, go);
    gr.accumulate(idb, go);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph;
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("sub: shapes differ");
  }
  const int ida = a.id, idb = b.id;
  Mat<S> value = a.value() - b.value();
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return make_op(g, std::move(value), needs, [ida, idb](Graph<S>& gr, int self) {
    const Mat<S>& go = gr.node(self).grad;
    gr.accumulate(ida, go);
    gr.accumulate(idb, -go);
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  Graph<S>& g = *a.graph;
  const int ida = a.id;
  Mat<S> value = a.value() * factor;
  return make_op(g, std::move(value), g.needs_grad(a),
                 [ida, factor](Graph<S>& gr, int self) {
                   gr.accumulate(ida, gr.node(self).grad * factor);
                 });
}

/// Broadcast-adds a 1 x C bias row to every row of a.
template <typename S>
Var<S> add_rowvec(Var<S> a, Var<S> bias) {
  Graph<S>& g = *a.graph;
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeMismatch("add_rowvec: bias must be 1 x cols(a)");
  }
  const int ida = a.id, idb = bias.id;
  Mat<S> value = a.value();
  value.rowwise() += bias.value().row(0);
  const bool needs = g.needs_grad(a) || g.needs_grad(bias);
  return make_op(g, std::move(value), needs, [ida, idb](Graph<S>& gr, int self) {
    const Mat<S>& go = gr.node(self).grad;
    gr.accumulate(ida, go);
    if (gr.node(idb).needs_grad) {
      gr.accumulate(idb, Mat<S>(go.colwise().sum()));
    }
  });
}

template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  return add_rowvec(matmul(x, w), b);
}

/// Stacks `times` copies of a vertically.
template <typename S>
Var<S> tile_rows(Var<S> a, int times) {
  Graph<S>& g = *a.graph;
  const int ida = a.id;
  const Eigen::Index r = a.rows();
  Mat<S> value(r * times, a.cols());
  for (int t = 0; t < times; ++t) value.middleRows(t * r, r) = a.value();
  return make_op(g, std::move(value), g.needs_grad(a),
                 [ida, times, r](Graph<S>& gr, int self) {
                   const Mat<S>& go = gr.node(self).grad;
                   Mat<S> acc = go.middleRows(0, r);
                   for (int t = 1; t < times; ++t) acc += go.middleRows(t * r, r);
                   gr.accumulate(ida, acc);
                 });
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
  Graph<S>& g = *a.graph;
  if (a.rows() != b.rows()) throw ShapeMismatch("concat_cols: row mismatch");
  const int ida = a.id, idb = b.id;
  Mat<S> value(a.rows(), a.cols() + b.cols());
  value.leftCols(a.cols()) = a.value();
  value.rightCols(b.cols()) = b.value();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return make_op(g, std::move(value), needs,
                 [ida, idb, ca, cb](Graph<S>& gr, int self) {
                   const Mat<S>& go = gr.node(self).grad;
                   gr.accumulate(ida, go.leftCols(ca));
                   gr.accumulate(idb, go.rightCols(cb));
                 });
}

template <typename S>
Var<S> slice_rows(Var<S> a, Eigen::Index start, Eigen::Index count) {
  Graph<S>& g = *a.graph;
  if (start < 0 || start + count > a.rows()) {
    throw ShapeMismatch("slice_rows: out of range");
  }
  const int ida = a.id;
  Mat<S> value = a.value().middleRows(start, count);
  const Eigen::Index rows_in = a.rows(), cols_in = a.cols();
  return make_op(g, std::move(value), g.needs_grad(a),
                 [ida, start, count, rows_in, cols_in](Graph<S>& gr, int self) {
                   Mat<S> full = Mat<S>::Zero(rows_in, cols_in);
                   full.middleRows(start, count) = gr.node(self).grad;
                   gr.accumulate(ida, full);
                 });
}

template <typename S>
Var<S> gelu(Var<S> a) {
  Graph<S>& g = *a.graph;
  const int ida = a.id;
  const S inv_sqrt2 = S(0.70710678118654752440);
  Mat<S> value = a.value().unaryExpr(
      [&](S x) { return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2)); });
  return make_op(g, std::move(value), g.needs_grad(a),
                 [ida, inv_sqrt2](Graph<S>& gr, int self) {
                   const Mat<S>& x = gr.node(ida).value;
                   const S inv_sqrt2pi = S(0.39894228040143267794);
                   Mat<S> d = x.unaryExpr([&](S v) {
                     const S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
                     const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * v * v);
                     return cdf + v * pdf;
                   });
                   gr.accumulate(ida, gr.node(self).grad.cwiseProduct(d));
                 });
}

/// Row-wise layer normalization with learned gain/bias (1 x C each).
template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  Graph<S>& g = *x.graph;
  const Eigen::Index c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 ||
      bias.cols() != c) {
    throw ShapeMismatch("layer_norm: gain/bias must be 1 x cols(x)");
  }
  const int idx = x.id, idg = gain.id, idb = bias.id;

  // Cache normalized rows and inverse stddevs for the backward pass.
  auto xhat = std::make_shared<Mat<S>>(x.rows(), c);
  auto inv_std = std::make_shared<Vec<S>>(x.rows());
  Mat<S> value(x.rows(), c);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.value().row(r);
    const S mean = row.mean();
    const S var = (row.array() - mean).square().mean();
    const S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    xhat->row(r) = (row.array() - mean) * is;
    value.row(r) =
        xhat->row(r).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  }
  const bool needs =
      g.needs_grad(x) || g.needs_grad(gain) || g.needs_grad(bias);
  return make_op(
      g, std::move(value), needs,
      [idx, idg, idb, xhat, inv_std](Graph<S>& gr, int self) {
        const Mat<S>& go = gr.node(self).grad;
        if (gr.node(idg).needs_grad) {
          gr.accumulate(idg, Mat<S>(go.cwiseProduct(*xhat).colwise().sum()));
        }
        if (gr.node(idb).needs_grad) {
          gr.accumulate(idb, Mat<S>(go.colwise().sum()));
        }
        if (!gr.node(idx).needs_grad) return;
        const auto& gain_row = gr.node(idg).value.row(0);
        Mat<S> dx(go.rows(), go.cols());
        for (Eigen::Index r = 0; r < go.rows(); ++r) {
          const auto dxhat = go.row(r).cwiseProduct(gain_row);
          const S m1 = dxhat.mean();
          const S m2 = dxhat.cwiseProduct(xhat->row(r)).mean();
          dx.row(r) =
              ((dxhat.array() - m1) - xhat->row(r).array() * m2) * (*inv_std)[r];
        }
        gr.accumulate(idx, dx);
      });
}

/// Boolean attention masks per batch element (query x key). Entries set to
/// false contribute exactly zero attention weight; fully-masked query rows
/// produce a zero context vector.
template <typename S>
struct AttentionMasks {
  // allowed[b](q, k); an empty vector means everything is allowed.
  std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> allowed;
};

/// Multi-head scaled dot-product attention over stacked batches.
/// q: [B*Tq, D], k/v: [B*Tk, D]; D split into `heads` equal slices.
template <typename S>
Var<S> attention(Var<S> q, Var<S> k, Var<S> v,
                 std::type_identity_t<std::shared_ptr<const AttentionMasks<S>>> masks,
                 int batch, int heads) {
  Graph<S>& g = *q.graph;
  const Eigen::Index d = q.cols();
  if (d % heads != 0) throw ShapeMismatch("attention: heads must divide dim");
  if (k.rows() != v.rows() || k.cols() != d || v.cols() != d) {
    throw ShapeMismatch("attention: k/v shape mismatch");
  }
  if (q.rows() % batch != 0 || k.rows() % batch != 0) {
    throw ShapeMismatch("attention: rows not divisible by batch");
  }
  const Eigen::Index tq = q.rows() / batch;
  const Eigen::Index tk = k.rows() / batch;
  const Eigen::Index dh = d / heads;
  const S inv_scale = S(1) / std::sqrt(static_cast<S>(dh));
  if (masks && !masks->allowed.empty() &&
      static_cast<int>(masks->allowed.size()) != batch) {
    throw ShapeMismatch("attention: mask count != batch");
  }

  // Attention weights are cached for the backward pass, stacked by (b, h).
  auto weights = std::make_shared<std::vector<Mat<S>>>(
      static_cast<size_t>(batch) * heads);
  Mat<S> value(q.rows(), d);
  for (int b = 0; b < batch; ++b) {
    const auto& mask =
        (masks && !masks->allowed.empty()) ? &masks->allowed[b] : nullptr;
    for (int h = 0; h < heads; ++h) {
      const auto qb = q.value().block(b * tq, h * dh, tq, dh);
      const auto kb = k.value().block(b * tk, h * dh, tk, dh);
      const auto vb = v.value().block(b * tk, h * dh, tk, dh);
      Mat<S> scores = (qb * kb.transpose()) * inv_scale;
      Mat<S>& a = (*weights)[static_cast<size_t>(b) * heads + h];
      a.resize(tq, tk);
      for (Eigen::Index r = 0; r < tq; ++r) {
        // Masked softmax with exact zeros and a zero row when nothing is
        // allowed.
        S row_max = std::numeric_limits<S>::lowest();
        bool any = false;
        for (Eigen::Index c2 = 0; c2 < tk; ++c2) {
          if (mask == nullptr || (*mask)(r, c2)) {
            row_max = std::max(row_max, scores(r, c2));
            any = true;
          }
        }
        if (!any) {
          a.row(r).setZero();
          continue;
        }
        S sum = S(0);
        for (Eigen::Index c2 = 0; c2 < tk; ++c2) {
          if (mask == nullptr || (*mask)(r, c2)) {
            const S e = std::exp(scores(r, c2) - row_max);
            a(r, c2) = e;
            sum += e;
          } else {
            a(r, c2) = S(0);
          }
        }
        a.row(r) /= sum;
      }
      value.block(b * tq, h * dh, tq, dh).noalias() = a * vb;
    }
  }

  const int idq = q.id, idk = k.id, idv = v.id;
  const bool needs =
      g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v);
  return make_op(
      g, std::move(value), needs,
      [idq, idk, idv, weights, batch, heads, tq, tk, dh,
       inv_scale](Graph<S>& gr, int self) {
        const Mat<S>& go = gr.node(self).grad;
        Mat<S> gq = Mat<S>::Zero(batch * tq, heads * dh);
        Mat<S> gk = Mat<S>::Zero(batch * tk, heads * dh);
        Mat<S> gv = Mat<S>::Zero(batch * tk, heads * dh);
        for (int b = 0; b < batch; ++b) {
          for (int h = 0; h < heads; ++h) {
            const Mat<S>& a = (*weights)[static_cast<size_t>(b) * heads + h];
            const auto gc = go.block(b * tq, h * dh, tq, dh);
            const auto qb = gr.node(idq).value.block(b * tq, h * dh, tq, dh);
            const auto kb = gr.node(idk).value.block(b * tk, h * dh, tk, dh);
            const auto vb = gr.node(idv).value.block(b * tk, h * dh, tk, dh);
            gv.block(b * tk, h * dh, tk, dh).noalias() = a.transpose() * gc;
            Mat<S> ga = gc * vb.transpose();
            // Softmax backward; masked entries of a are exactly zero so the
            // product keeps them zero.
            Mat<S> gs(tq, tk);
            for (Eigen::Index r = 0; r < tq; ++r) {
              const S dot = ga.row(r).dot(a.row(r));
              gs.row(r) = a.row(r).array() * (ga.row(r).array() - dot);
            }
            gs *= inv_scale;
            gq.block(b * tq, h * dh, tq, dh).noalias() = gs * kb;
            gk.block(b * tk, h * dh, tk, dh).noalias() = gs.transpose() * qb;
          }
        }
        gr.accumulate(idq, gq);
        gr.accumulate(idk, gk);
        gr.accumulate(idv, gv);
      });
}

/// Per-batch mean over rows with positive weight: [B*T, C] -> [B, C].
/// Weights are per stacked row; a batch with zero total weight yields zeros.
template <typename S>
Var<S> masked_mean_rows(Var<S> x,
                        std::type_identity_t<std::shared_ptr<const Vec<S>>> weights,
                        int batch) {
  Graph<S>& g = *x.graph;
  if (weights->size() != x.rows() || x.rows() % batch != 0) {
    throw ShapeMismatch("masked_mean_rows: weight/shape mismatch");
  }
  const Eigen::Index t = x.rows() / batch;
  const int idx = x.id;
  Mat<S> value = Mat<S>::Zero(batch, x.cols());
  for (int b = 0; b < batch; ++b) {
    S total = S(0);
    for (Eigen::Index r = 0; r < t; ++r) {
      const S w = (*weights)[b * t + r];
      if (w > S(0)) {
        value.row(b) += w * x.value().row(b * t + r);
        total += w;
      }
    }
    if (total > S(0)) value.row(b) /= total;
  }
  return make_op(g, std::move(value), g.needs_grad(x),
                 [idx, weights, batch, t](Graph<S>& gr, int self) {
                   const Mat<S>& go = gr.node(self).grad;
                   Mat<S> gx = Mat<S>::Zero(batch * t, go.cols());
                   for (int b = 0; b < batch; ++b) {
                     S total = S(0);
                     for (Eigen::Index r = 0; r < t; ++r) {
                       total += std::max(S(0), (*weights)[b * t + r]);
                     }
                     if (total <= S(0)) continue;
                     for (Eigen::Index r = 0; r < t; ++r) {
                       const S w = (*weights)[b * t + r];
                       if (w > S(0)) {
                         gx.row(b * t + r) = (w / total) * go.row(b);
                       }
                     }
                   }
                   gr.accumulate(idx, gx);
                 });
}

/// Adds (sign * t_b) to every row of batch block b: x [B*T, C], t [B, C].
template <typename S>
Var<S> add_batch_rows(Var<S> x, Var<S> t, S sign = S(1)) {
  Graph<S>& g = *x.graph;
  if (t.cols() != x.cols() || x.rows() % t.rows() != 0) {
    throw ShapeMismatch("add_batch_rows: shape mismatch");
  }
  const int batch = static_cast<int>(t.rows());
  const Eigen::Index rows_per = x.rows() / batch;
  const int idx = x.id, idt = t.id;
  Mat<S> value = x.value();
  for (int b = 0; b < batch; ++b) {
    value.middleRows(b * rows_per, rows_per).rowwise() +=
        sign * t.value().row(b);
  }
  const bool needs = g.needs_grad(x) || g.needs_grad(t);
  return make_op(g, std::move(value), needs,
                 [idx, idt, batch, rows_per, sign](Graph<S>& gr, int self) {
                   const Mat<S>& go = gr.node(self).grad;
                   gr.accumulate(idx, go);
                   if (gr.node(idt).needs_grad) {
                     Mat<S> gt(batch, go.cols());
                     for (int b = 0; b < batch; ++b) {
                       gt.row(b) =
                           sign *
                           go.middleRows(b * rows_per, rows_per).colwise().sum();
                     }
                     gr.accumulate(idt, gt);
                   }
                 });
}

template <typename S>
Var<S> sum_scalars(const std::vector<Var<S>>& terms) {
  if (terms.empty()) throw ShapeMismatch("sum_scalars: no terms");
  Graph<S>& g = *terms.front().graph;
  Mat<S> value = Mat<S>::Zero(1, 1);
  std::vector<int> ids;
  bool needs = false;
  for (const auto& t : terms) {
    if (t.rows() != 1 || t.cols() != 1) {
      throw ShapeMismatch("sum_scalars: non-scalar term");
    }
    value(0, 0) += t.value()(0, 0);
    ids.push_back(t.id);
    needs = needs || g.needs_grad(t);
  }
  return make_op(g, std::move(value), needs, [ids](Graph<S>& gr, int self) {
    const Mat<S>& go = gr.node(self).grad;
    for (int id : ids) gr.accumulate(id, go);
  });
}

/// Smooth L1 (Huber-style) loss, mean over weighted entries:
/// l(d) = 0.5 d^2 / delta for |d| < delta, |d| - delta/2 otherwise.
/// Optional row weights select/weight rows (visibility masks).
template <typename S>
Var<S> smooth_l1_loss(Var<S> pred, Var<S> target, S delta,
                      std::type_identity_t<std::shared_ptr<const Vec<S>>> row_weights =
                          nullptr) {
  Graph<S>& g = *pred.graph;
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeMismatch("smooth_l1_loss: shape mismatch");
  }
  if (row_weights && row_weights->size() != pred.rows()) {
    throw ShapeMismatch("smooth_l1_loss: row weight count mismatch");
  }
  const int idp = pred.id, idt = target.id;
  const Eigen::Index cols = pred.cols();
  S norm = S(0);
  if (row_weights) {
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      norm += std::max(S(0), (*row_weights)[r]);
    }
    norm *= static_cast<S>(cols);
  } else {
    norm = static_cast<S>(pred.rows() * cols);
  }
  Mat<S> value = Mat<S>::Zero(1, 1);
  if (norm > S(0)) {
    S acc = S(0);
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      const S w = row_weights ? std::max(S(0), (*row_weights)[r]) : S(1);
      if (w <= S(0)) continue;
      for (Eigen::Index c = 0; c < cols; ++c) {
        const S d = pred.value()(r, c) - target.value()(r, c);
        const S ad = std::abs(d);
        acc += w * (ad < delta ? S(0.5) * d * d / delta : ad - S(0.5) * delta);
      }
    }
    value(0, 0) = acc / norm;
  }
  const bool needs = g.needs_grad(pred) || g.needs_grad(target);
  return make_op(
      g, std::move(value), needs,
      [idp, idt, delta, row_weights, norm](Graph<S>& gr, int self) {
        if (norm <= S(0)) return;
        const S go = gr.node(self).grad(0, 0);
        const Mat<S>& p = gr.node(idp).value;
        const Mat<S>& t = gr.node(idt).value;
        Mat<S> gp(p.rows(), p.cols());
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
          const S w = row_weights ? std::max(S(0), (*row_weights)[r]) : S(1);
          for (Eigen::Index c = 0; c < p.cols(); ++c) {
            const S d = p(r, c) - t(r, c);
            const S dd = std::abs(d) < delta ? d / delta : (d > S(0) ? S(1) : S(-1));
            gp(r, c) = go * w * dd / norm;
          }
        }
        gr.accumulate(idp, gp);
        if (gr.node(idt).needs_grad) gr.accumulate(idt, -gp);
      });
}

/// Mean over rows of the squared row-wise L2 distance.
template <typename S>
Var<S> l2sq_loss(Var<S> pred, Var<S> target) {
  Graph<S>& g = *pred.graph;
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeMismatch("l2sq_loss: shape mismatch");
  }
  const int idp = pred.id, idt = target.id;
  const S inv_rows = S(1) / static_cast<S>(pred.rows());
  Mat<S> value(1, 1);
  value(0, 0) = (pred.value() - target.value()).squaredNorm() * inv_rows;
  const bool needs = g.needs_grad(pred) || g.needs_grad(target);
  return make_op(g, std::move(value), needs,
                 [idp, idt, inv_rows](Graph<S>& gr, int self) {
                   const S go = gr.node(self).grad(0, 0);
                   Mat<S> gp = S(2) * inv_rows * go *
                               (gr.node(idp).value - gr.node(idt).value);
                   gr.accumulate(idp, gp);
                   if (gr.node(idt).needs_grad) gr.accumulate(idt, -gp);
                 });
}

}  // namespace skelformer::ad
