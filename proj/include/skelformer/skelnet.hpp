#pragma once

// Skeletal transformer: joint encoder, kinematic-masked pose decoder,
// single-token shape decoder, and the rotation head (SVD symmetric
// orthogonalization by default, Gram-Schmidt 6-DoF as the ablation).

#include <memory>
#include <type_traits>
#include <string>
#include <unordered_map>
#include <vector>

#include "skelformer/body_model.hpp"
#include "skelformer/body_ops.hpp"
#include "skelformer/graph.hpp"
#include "skelformer/joint_regressor.hpp"
#include "skelformer/keypoints.hpp"
#include "skelformer/rng.hpp"

namespace skelformer {

enum class RotationHead { svd, sixdof };

struct SkelNetConfig {
  int j_in = 24;
  int j_body = 24;
  int embed_dim = 128;
  int pos_embed_dim = 64;
  int n_encoder_blocks = 2;
  int n_decoder_blocks = 2;
  int n_heads = 4;
  int head_hidden = 1024;
  int attention_distance = 4;  // 0 disables the kinematic mask
  RotationHead rotation_head = RotationHead::svd;
  int shape_dim = 16;

  void validate() const {
    if (embed_dim % n_heads != 0) {
      throw ShapeMismatch("SkelNetConfig: embed_dim must divide by n_heads");
    }
    if (attention_distance < 0 || j_in <= 0 || j_body <= 0) {
      throw ShapeMismatch("SkelNetConfig: invalid dimensions");
    }
  }
};

/// Kinematic-tree attention mask: allowed(q, k) iff tree distance < d.
/// d <= 0 allows everything. The diagonal is always allowed for d >= 1.
inline Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> kinematic_mask(
    const Skeleton& skel, int d) {
  const int j = skel.joint_count();
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> allowed(j, j);
  if (d <= 0) {
    allowed.setConstant(true);
    return allowed;
  }
  const Eigen::MatrixXi dist = kinematic_distances(skel);
  for (int q = 0; q < j; ++q) {
    for (int k = 0; k < j; ++k) allowed(q, k) = dist(q, k) < d;
  }
  return allowed;
}

/// Named parameter tensors with attached gradient buffers. Entry order is
/// fixed by construction and drives deterministic optimizer iteration and
/// checkpoint layout.
template <typename S>
struct ParamStore {
  struct Entry {
    std::string name;
    ad::Mat<S> value;
    ad::Mat<S> grad;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, int> index;

  Entry& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    Entry e;
    e.name = name;
    e.value = ad::Mat<S>::Zero(rows, cols);
    e.grad = ad::Mat<S>::Zero(rows, cols);
    index.emplace(name, static_cast<int>(entries.size()));
    entries.push_back(std::move(e));
    return entries.back();
  }
  Entry& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("ParamStore: missing " + name);
    return entries[static_cast<size_t>(it->second)];
  }
  const Entry& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("ParamStore: missing " + name);
    return entries[static_cast<size_t>(it->second)];
  }
  void zero_grads() {
    for (auto& e : entries) e.grad.setZero();
  }
  long total_size() const {
    long n = 0;
    for (const auto& e : entries) n += static_cast<long>(e.value.size());
    return n;
  }
};

template <typename S>
struct SkelNetWeights {
  SkelNetConfig config;
  KeypointLayout layout;
  ParamStore<S> params;
  ad::Mat<S> theta_m;  // [j_body, 9] mean-pose rows; non-trainable buffer

  static SkelNetWeights init(const SkelNetConfig& cfg,
                             const KeypointLayout& layout, std::uint64_t seed);
};

namespace detail {

template <typename S>
void add_attn_params(ParamStore<S>& p, const std::string& prefix, int dim) {
  for (const char* n : {"wq", "wk", "wv", "wo"}) {
    p.add(prefix + "." + n, dim, dim);
  }
  for (const char* n : {"bq", "bk", "bv", "bo"}) {
    p.add(prefix + "." + n, 1, dim);
  }
}

template <typename S>
void add_ln_params(ParamStore<S>& p, const std::string& prefix, int dim) {
  p.add(prefix + ".g", 1, dim);
  p.add(prefix + ".b", 1, dim);
}

template <typename S>
void add_ff_params(ParamStore<S>& p, const std::string& prefix, int dim) {
  p.add(prefix + ".w1", dim, dim);
  p.add(prefix + ".b1", 1, dim);
  p.add(prefix + ".w2", dim, dim);
  p.add(prefix + ".b2", 1, dim);
}

template <typename S>
void add_head_params(ParamStore<S>& p, const std::string& prefix, int dim,
                     int hidden, int out) {
  p.add(prefix + ".w1", dim, hidden);
  p.add(prefix + ".b1", 1, hidden);
  p.add(prefix + ".w2", hidden, dim);
  p.add(prefix + ".b2", 1, dim);
  p.add(prefix + ".out_w", dim, out);
  p.add(prefix + ".out_b", 1, out);
}

}  // namespace detail

template <typename S>
SkelNetWeights<S> SkelNetWeights<S>::init(const SkelNetConfig& cfg,
                                          const KeypointLayout& layout_in,
                                          std::uint64_t seed) {
  cfg.validate();
  layout_in.validate();
  if (layout_in.joint_count() != cfg.j_in) {
    throw ShapeMismatch("SkelNetWeights: layout joint count != j_in");
  }
  SkelNetWeights w;
  w.config = cfg;
  w.layout = layout_in;
  ParamStore<S>& p = w.params;

  p.add("enc.id_embed", cfg.j_in, cfg.pos_embed_dim);
  p.add("enc.embed.w", 3 + cfg.pos_embed_dim, cfg.embed_dim);
  p.add("enc.embed.b", 1, cfg.embed_dim);
  for (int i = 0; i < cfg.n_encoder_blocks; ++i) {
    const std::string b = "enc." + std::to_string(i);
    detail::add_attn_params(p, b + ".attn", cfg.embed_dim);
    detail::add_ln_params(p, b + ".ln1", cfg.embed_dim);
    detail::add_ff_params(p, b + ".ff", cfg.embed_dim);
    detail::add_ln_params(p, b + ".ln2", cfg.embed_dim);
  }

  p.add("dec_pose.queries", cfg.j_body, cfg.pos_embed_dim);
  p.add("dec_pose.lift.w", cfg.pos_embed_dim, cfg.embed_dim);
  p.add("dec_pose.lift.b", 1, cfg.embed_dim);
  for (int i = 0; i < cfg.n_decoder_blocks; ++i) {
    const std::string b = "dec_pose." + std::to_string(i);
    detail::add_attn_params(p, b + ".self", cfg.embed_dim);
    detail::add_ln_params(p, b + ".ln1", cfg.embed_dim);
    detail::add_attn_params(p, b + ".cross", cfg.embed_dim);
    detail::add_ln_params(p, b + ".ln2", cfg.embed_dim);
    detail::add_ff_params(p, b + ".ff", cfg.embed_dim);
    detail::add_ln_params(p, b + ".ln3", cfg.embed_dim);
  }
  const int rot_out = cfg.rotation_head == RotationHead::svd ? 9 : 6;
  detail::add_head_params(p, "head_pose", cfg.embed_dim, cfg.head_hidden,
                          rot_out);

  p.add("dec_shape.query", 1, cfg.pos_embed_dim);
  p.add("dec_shape.lift.w", cfg.pos_embed_dim, cfg.embed_dim);
  p.add("dec_shape.lift.b", 1, cfg.embed_dim);
  for (int i = 0; i < cfg.n_decoder_blocks; ++i) {
    const std::string b = "dec_shape." + std::to_string(i);
    detail::add_attn_params(p, b + ".cross", cfg.embed_dim);
    detail::add_ln_params(p, b + ".ln1", cfg.embed_dim);
    detail::add_ff_params(p, b + ".ff", cfg.embed_dim);
    detail::add_ln_params(p, b + ".ln2", cfg.embed_dim);
  }
  detail::add_head_params(p, "head_shape", cfg.embed_dim, cfg.head_hidden,
                          cfg.shape_dim);

  // Scaled-uniform init, range 1/sqrt(fan_in); layer-norm gains start at 1;
  // biases at zero. The pose-head output bias starts at the identity
  // rotation so initial predictions sit at the mean pose.
  Rng rng(derive_seed(seed, "skelnet_init"));
  for (auto& e : p.entries) {
    const bool is_ln_gain = e.name.size() > 2 &&
                            e.name.compare(e.name.size() - 2, 2, ".g") == 0 &&
                            e.name.find(".ln") != std::string::npos;
    const bool is_bias = !is_ln_gain && e.value.rows() == 1 &&
                         (e.name.find(".b") != std::string::npos);
    if (is_ln_gain) {
      e.value.setOnes();
    } else if (is_bias) {
      e.value.setZero();
    } else {
      const S bound = S(1) / std::sqrt(static_cast<S>(e.value.rows()));
      for (Eigen::Index i = 0; i < e.value.size(); ++i) {
        e.value.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
      }
    }
  }
  {
    auto& out_b = p.at("head_pose.out_b").value;
    if (cfg.rotation_head == RotationHead::svd) {
      out_b << S(1), S(0), S(0), S(0), S(1), S(0), S(0), S(0), S(1);
    } else {
      out_b << S(1), S(0), S(0), S(0), S(1), S(0);
    }
  }

  w.theta_m.resize(cfg.j_body, 9);
  for (int j = 0; j < cfg.j_body; ++j) {
    ad::row_from_mat3(w.theta_m, j, Mat3<S>::Identity());
  }
  return w;
}

// ---------------------------------------------------------------------------
// Forward graph construction.

template <typename S>
struct ForwardGraph {
  ad::Var<S> tokens;       // [B*j_in, embed]
  ad::Var<S> raw_pose;     // [B*j_body, 9|6] pre-orthogonalization
  ad::Var<S> theta9;       // [B*j_body, 9] denormalized local rotations
  ad::Var<S> globals9;     // [B*j_body, 9] global rotations
  ad::Var<S> beta;         // [B, shape_dim]
  ad::Var<S> joints;       // [B*j_body, 3] world frame
  ad::Var<S> vertices;     // [B*V, 3] world frame
  ad::Var<S> keypoints;    // [B*j_in, 3] world frame
  ad::Var<S> translation;  // [B, 3]
  int batch = 1;
};

namespace detail {

template <typename S>
ad::Var<S> pvar(ad::Graph<S>& g, ParamStore<S>& p, const std::string& name,
                bool train) {
  auto& e = p.at(name);
  return g.param(e.value, train ? &e.grad : nullptr);
}

template <typename S>
ad::Var<S> attn_sublayer(
    ad::Graph<S>& g, ParamStore<S>& p, const std::string& prefix,
    ad::Var<S> x_q, ad::Var<S> x_kv,
    std::type_identity_t<std::shared_ptr<const ad::AttentionMasks<S>>> masks,
    int batch, int heads, bool train) {
  auto q = linear(x_q, pvar(g, p, prefix + ".wq", train),
                  pvar(g, p, prefix + ".bq", train));
  auto k = linear(x_kv, pvar(g, p, prefix + ".wk", train),
                  pvar(g, p, prefix + ".bk", train));
  auto v = linear(x_kv, pvar(g, p, prefix + ".wv", train),
                  pvar(g, p, prefix + ".bv", train));
  auto ctx = attention(q, k, v, masks, batch, heads);
  return linear(ctx, pvar(g, p, prefix + ".wo", train),
                pvar(g, p, prefix + ".bo", train));
}

template <typename S>
ad::Var<S> ff_sublayer(ad::Graph<S>& g, ParamStore<S>& p,
                       const std::string& prefix, ad::Var<S> x, bool train) {
  auto h = gelu(linear(x, pvar(g, p, prefix + ".w1", train),
                       pvar(g, p, prefix + ".b1", train)));
  return linear(h, pvar(g, p, prefix + ".w2", train),
                pvar(g, p, prefix + ".b2", train));
}

template <typename S>
ad::Var<S> ln_sublayer(ad::Graph<S>& g, ParamStore<S>& p,
                       const std::string& prefix, ad::Var<S> x, bool train) {
  return layer_norm(x, pvar(g, p, prefix + ".g", train),
                    pvar(g, p, prefix + ".b", train));
}

template <typename S>
ad::Var<S> head_sublayer(ad::Graph<S>& g, ParamStore<S>& p,
                         const std::string& prefix, ad::Var<S> x, bool train) {
  auto h = gelu(linear(x, pvar(g, p, prefix + ".w1", train),
                       pvar(g, p, prefix + ".b1", train)));
  auto res = add(x, linear(h, pvar(g, p, prefix + ".w2", train),
                           pvar(g, p, prefix + ".b2", train)));
  return linear(res, pvar(g, p, prefix + ".out_w", train),
                pvar(g, p, prefix + ".out_b", train));
}

}  // namespace detail

template <typename S>
ad::Var<S> pose_decoder_graph(
    ad::Graph<S>& g, SkelNetWeights<S>& w, ad::Var<S> tokens,
    std::type_identity_t<std::shared_ptr<const ad::AttentionMasks<S>>> self_masks,
    std::type_identity_t<std::shared_ptr<const ad::AttentionMasks<S>>> cross_masks,
    int batch, bool train) {
  using namespace detail;
  const SkelNetConfig& cfg = w.config;
  ParamStore<S>& p = w.params;
  auto dq = linear(tile_rows(pvar(g, p, "dec_pose.queries", train), batch),
                   pvar(g, p, "dec_pose.lift.w", train),
                   pvar(g, p, "dec_pose.lift.b", train));
  for (int i = 0; i < cfg.n_decoder_blocks; ++i) {
    const std::string b = "dec_pose." + std::to_string(i);
    auto sa = attn_sublayer(g, p, b + ".self", dq, dq, self_masks, batch,
                            cfg.n_heads, train);
    dq = ln_sublayer(g, p, b + ".ln1", add(dq, sa), train);
    auto ca = attn_sublayer(g, p, b + ".cross", dq, tokens, cross_masks,
                            batch, cfg.n_heads, train);
    dq = ln_sublayer(g, p, b + ".ln2", add(dq, ca), train);
    auto ff = ff_sublayer(g, p, b + ".ff", dq, train);
    dq = ln_sublayer(g, p, b + ".ln3", add(dq, ff), train);
  }
  return head_sublayer(g, p, "head_pose", dq, train);
}

template <typename S>
ad::Var<S> shape_decoder_graph(
    ad::Graph<S>& g, SkelNetWeights<S>& w, ad::Var<S> tokens,
    std::type_identity_t<std::shared_ptr<const ad::AttentionMasks<S>>> cross_masks,
    int batch, bool train) {
  using namespace detail;
  const SkelNetConfig& cfg = w.config;
  ParamStore<S>& p = w.params;
  auto sq = linear(tile_rows(pvar(g, p, "dec_shape.query", train), batch),
                   pvar(g, p, "dec_shape.lift.w", train),
                   pvar(g, p, "dec_shape.lift.b", train));
  for (int i = 0; i < cfg.n_decoder_blocks; ++i) {
    const std::string b = "dec_shape." + std::to_string(i);
    auto ca = attn_sublayer(g, p, b + ".cross", sq, tokens, cross_masks,
                            batch, cfg.n_heads, train);
    sq = ln_sublayer(g, p, b + ".ln1", add(sq, ca), train);
    auto ff = ff_sublayer(g, p, b + ".ff", sq, train);
    sq = ln_sublayer(g, p, b + ".ln2", add(sq, ff), train);
  }
  return head_sublayer(g, p, "head_shape", sq, train);
}

namespace detail {

template <typename S>
std::shared_ptr<const ad::AttentionMasks<S>> key_visibility_masks(
    const std::vector<bool>& visible, int queries) {
  auto masks = std::make_shared<ad::AttentionMasks<S>>();
  const int keys = static_cast<int>(visible.size());
  Eigen::Array<bool, 1, Eigen::Dynamic> vis_row(keys);
  for (int k = 0; k < keys; ++k) vis_row[k] = visible[static_cast<size_t>(k)];
  masks->allowed.push_back(vis_row.replicate(queries, 1));
  return masks;
}

}  // namespace detail

/// Builds the full differentiable path keypoints -> pose/shape -> FK.
///
/// keypoints: [B*j_in, 3] world-frame positions; visibility: per stacked row,
/// 1 visible / 0 masked. Non-visible joints are excluded as attention keys in
/// the encoder and in every encoder-to-decoder attention. `train` attaches
/// parameter gradient sinks.
template <typename S>
ForwardGraph<S> forward_graph(
    ad::Graph<S>& g, SkelNetWeights<S>& w, const Skeleton& skel,
    std::type_identity_t<std::shared_ptr<const ad::ModelConsts<S>>> mc,
    const ad::Mat<S>& keypoints,
    std::type_identity_t<std::shared_ptr<const ad::Vec<S>>> visibility,
    int batch, bool train = false) {
  const SkelNetConfig& cfg = w.config;
  ParamStore<S>& p = w.params;
  const int tin = cfg.j_in, tb = cfg.j_body, heads = cfg.n_heads;
  if (keypoints.rows() != static_cast<Eigen::Index>(batch) * tin ||
      keypoints.cols() != 3 || visibility->size() != keypoints.rows()) {
    throw ShapeMismatch("forward_graph: keypoint shape mismatch");
  }

  // Attention masks from visibility: keys restricted to visible joints.
  auto enc_masks = std::make_shared<ad::AttentionMasks<S>>();
  auto cross_masks = std::make_shared<ad::AttentionMasks<S>>();
  auto shape_cross_masks = std::make_shared<ad::AttentionMasks<S>>();
  enc_masks->allowed.resize(static_cast<size_t>(batch));
  cross_masks->allowed.resize(static_cast<size_t>(batch));
  shape_cross_masks->allowed.resize(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    Eigen::Array<bool, 1, Eigen::Dynamic> vis_row(tin);
    for (int k = 0; k < tin; ++k) {
      vis_row[k] = (*visibility)[b * tin + k] > S(0);
    }
    enc_masks->allowed[b] = vis_row.replicate(tin, 1);
    cross_masks->allowed[b] = vis_row.replicate(tb, 1);
    shape_cross_masks->allowed[b] = vis_row.replicate(1, 1);
  }
  auto self_masks = std::make_shared<ad::AttentionMasks<S>>();
  if (cfg.attention_distance > 0) {
    const auto kin = kinematic_mask(skel, cfg.attention_distance);
    self_masks->allowed.assign(static_cast<size_t>(batch), kin);
  }

  using detail::attn_sublayer;
  using detail::ff_sublayer;
  using detail::head_sublayer;
  using detail::ln_sublayer;
  using detail::pvar;

  ForwardGraph<S> out;
  out.batch = batch;

  // Joint encoder: center on visible joints, concat ID embedding, embed.
  auto kp_in = g.input(keypoints);
  auto center = masked_mean_rows(kp_in, visibility, batch);
  auto centered = add_batch_rows(kp_in, center, S(-1));
  auto ids = tile_rows(pvar(g, p, "enc.id_embed", train), batch);
  auto x = linear(concat_cols(centered, ids), pvar(g, p, "enc.embed.w", train),
                  pvar(g, p, "enc.embed.b", train));
  for (int i = 0; i < cfg.n_encoder_blocks; ++i) {
    const std::string b = "enc." + std::to_string(i);
    auto sa = attn_sublayer(g, p, b + ".attn", x, x, enc_masks, batch, heads,
                            train);
    x = ln_sublayer(g, p, b + ".ln1", add(x, sa), train);
    auto ff = ff_sublayer(g, p, b + ".ff", x, train);
    x = ln_sublayer(g, p, b + ".ln2", add(x, ff), train);
  }
  out.tokens = x;

  // Pose decoder: learned queries, kinematic-masked self-attention,
  // occlusion-masked cross-attention.
  out.raw_pose = pose_decoder_graph(g, w, out.tokens, self_masks, cross_masks,
                                    batch, train);

  // Rotation head and mean-pose de-normalization.
  ad::Var<S> delta9 = cfg.rotation_head == RotationHead::svd
                          ? svd_orthogonalize9(out.raw_pose)
                          : sixdof9(out.raw_pose);
  auto theta_m_tiled = std::make_shared<ad::Mat<S>>(
      static_cast<Eigen::Index>(batch) * tb, 9);
  for (int b = 0; b < batch; ++b) {
    theta_m_tiled->middleRows(b * tb, tb) = w.theta_m;
  }
  out.theta9 = premul_rows9(delta9, theta_m_tiled);

  // Shape decoder: one query token, no self-attention.
  out.beta =
      shape_decoder_graph(g, w, out.tokens, shape_cross_masks, batch, train);

  // FK at zero translation, then recover translation by matching visible
  // keypoint centroids.
  auto parent = std::make_shared<const std::vector<int>>(skel.parent);
  out.globals9 = chain_products9(out.theta9, parent, batch);
  auto fkpos = fk_positions(out.globals9, out.beta, mc, batch);
  const int joints = mc->joints();
  const int verts = mc->verts();
  auto joints0 = slice_rows(fkpos, 0, static_cast<Eigen::Index>(batch) * joints);
  auto verts0 = slice_rows(fkpos, static_cast<Eigen::Index>(batch) * joints,
                           static_cast<Eigen::Index>(batch) * verts);
  auto kp0 = regress_batch(verts0, mc, batch);
  auto kp0_center = masked_mean_rows(kp0, visibility, batch);
  out.translation = sub(center, kp0_center);
  out.joints = add_batch_rows(joints0, out.translation);
  out.vertices = add_batch_rows(verts0, out.translation);
  out.keypoints = add_batch_rows(kp0, out.translation);
  return out;
}

// ---------------------------------------------------------------------------
// Single-frame public surface.

/// Skeletal tokens for one frame: [j_in, embed_dim].
template <typename S>
ad::Mat<S> encode(SkelNetWeights<S>& w, const Skeleton& skel,
                  std::shared_ptr<const ad::ModelConsts<S>> mc,
                  const KeypointFrame& frame) {
  if (frame.joint_count() != w.config.j_in) {
    throw ShapeMismatch("encode: joint count mismatch");
  }
  ad::Graph<S> g;
  auto vis = std::make_shared<ad::Vec<S>>(frame.joint_count());
  for (int i = 0; i < frame.joint_count(); ++i) {
    (*vis)[i] = frame.visible[static_cast<size_t>(i)] ? S(1) : S(0);
  }
  auto fg = forward_graph(g, w, skel, mc,
                          ad::Mat<S>(frame.positions.template cast<S>()), vis,
                          1, false);
  return fg.tokens.value();
}

/// Raw per-joint rotation parameterization ([j_body, 9] or [j_body, 6]) from
/// given skeletal tokens, with occluded tokens excluded as cross-attention
/// keys and self-attention masked by the kinematic tree.
template <typename S>
ad::Mat<S> decode_pose(SkelNetWeights<S>& w, const Skeleton& skel,
                       const ad::Mat<S>& tokens,
                       const std::vector<bool>& occluded) {
  if (tokens.rows() != w.config.j_in || tokens.cols() != w.config.embed_dim ||
      static_cast<int>(occluded.size()) != w.config.j_in) {
    throw ShapeMismatch("decode_pose: token shape mismatch");
  }
  std::vector<bool> visible(occluded.size());
  for (size_t i = 0; i < occluded.size(); ++i) visible[i] = !occluded[i];
  ad::Graph<S> g;
  auto tok = g.input(tokens);
  auto self_masks = std::make_shared<ad::AttentionMasks<S>>();
  if (w.config.attention_distance > 0) {
    self_masks->allowed.push_back(
        kinematic_mask(skel, w.config.attention_distance));
  }
  auto cross = detail::key_visibility_masks<S>(visible, w.config.j_body);
  return pose_decoder_graph(g, w, tok, self_masks, cross, 1, false).value();
}

/// Shape coefficients from skeletal tokens through the single-query shape
/// decoder.
template <typename S>
ShapeParams decode_shape(SkelNetWeights<S>& w, const ad::Mat<S>& tokens,
                         const std::vector<bool>& occluded) {
  if (tokens.rows() != w.config.j_in || tokens.cols() != w.config.embed_dim ||
      static_cast<int>(occluded.size()) != w.config.j_in) {
    throw ShapeMismatch("decode_shape: token shape mismatch");
  }
  std::vector<bool> visible(occluded.size());
  for (size_t i = 0; i < occluded.size(); ++i) visible[i] = !occluded[i];
  ad::Graph<S> g;
  auto tok = g.input(tokens);
  auto cross = detail::key_visibility_masks<S>(visible, 1);
  const auto beta = shape_decoder_graph(g, w, tok, cross, 1, false).value();
  return ShapeParams::clamped(beta.row(0).transpose().template cast<double>());
}

struct ForwardResult {
  PoseParams pose;
  ShapeParams shape;
  MatXd joints;    // j_body x 3
  MatXd vertices;  // V x 3
};

template <typename S>
ForwardResult forward(SkelNetWeights<S>& w, const BodyModel& model,
                      std::shared_ptr<const ad::ModelConsts<S>> mc,
                      const KeypointFrame& frame) {
  ad::Graph<S> g;
  auto vis = std::make_shared<ad::Vec<S>>(frame.joint_count());
  for (int i = 0; i < frame.joint_count(); ++i) {
    (*vis)[i] = frame.visible[static_cast<size_t>(i)] ? S(1) : S(0);
  }
  auto fg = forward_graph(g, w, model.skeleton, mc,
                          ad::Mat<S>(frame.positions.template cast<S>()), vis,
                          1, false);
  ForwardResult res;
  res.pose = PoseParams::identity(w.config.j_body);
  for (int j = 0; j < w.config.j_body; ++j) {
    res.pose.local_rotations[static_cast<size_t>(j)] =
        ad::mat3_from_row(fg.theta9.value(), j).template cast<double>();
  }
  res.pose.root_translation =
      fg.translation.value().row(0).transpose().template cast<double>();
  res.shape = ShapeParams::clamped(
      fg.beta.value().row(0).transpose().template cast<double>());
  res.joints = fg.joints.value().template cast<double>();
  res.vertices = fg.vertices.value().template cast<double>();
  if (!res.joints.allFinite() || !res.vertices.allFinite()) {
    throw NonFinite("forward: non-finite network output");
  }
  return res;
}

/// Inference-time mirror test: average the prediction with the back-mirrored
/// prediction on the mirrored input. Rotations average by quaternion mean,
/// shapes and translations arithmetically.
template <typename S>
ForwardResult mirror_test_infer(SkelNetWeights<S>& w, const BodyModel& model,
                                std::shared_ptr<const ad::ModelConsts<S>> mc,
                                const KeypointFrame& frame) {
  const ForwardResult direct = forward(w, model, mc, frame);
  const KeypointFrame mirrored = mirror_keypoints(w.layout, frame);
  const ForwardResult flipped = forward(w, model, mc, mirrored);
  const PoseParams back = mirror_pose(model.skeleton, flipped.pose);

  ForwardResult res;
  res.pose = PoseParams::identity(w.config.j_body);
  for (int j = 0; j < w.config.j_body; ++j) {
    const Quatd qa(direct.pose.local_rotations[static_cast<size_t>(j)]);
    const Quatd qb(back.local_rotations[static_cast<size_t>(j)]);
    Mat3d averaged;
    try {
      averaged = quaternion_average<double>({qa, qb}, {1.0, 1.0})
                     .toRotationMatrix();
    } catch (const AmbiguousAverage&) {
      // Opposed predictions have no unique mean; keep the direct one.
      averaged = direct.pose.local_rotations[static_cast<size_t>(j)];
    }
    res.pose.local_rotations[static_cast<size_t>(j)] = averaged;
  }
  res.pose.root_translation =
      0.5 * (direct.pose.root_translation + back.root_translation);
  res.shape = ShapeParams::clamped(
      0.5 * (direct.shape.beta + flipped.shape.beta));
  const auto fk = forward_kinematics(model, res.pose, res.shape);
  res.joints = fk.joints;
  res.vertices = fk.vertices;
  return res;
}

}  // namespace skelformer
