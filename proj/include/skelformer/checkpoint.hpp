#pragma once

// Versioned binary checkpoint with bit-exact round trip: a JSON header
// (config, layout, dtype, bookkeeping) followed by the mean-pose buffer and
// raw parameter tensors.

#include <json.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <variant>

#include "skelformer/skelnet.hpp"

namespace skelformer {

namespace detail_ckpt {

constexpr std::uint32_t kMagic = 0x4b434b53;  // "SKCK"
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

template <typename S>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
  return "f32";
}
template <>
inline const char* dtype_name<double>() {
  return "f64";
}

inline nlohmann::json config_to_json(const SkelNetConfig& cfg) {
  return nlohmann::json{
      {"j_in", cfg.j_in},
      {"j_body", cfg.j_body},
      {"embed_dim", cfg.embed_dim},
      {"pos_embed_dim", cfg.pos_embed_dim},
      {"n_encoder_blocks", cfg.n_encoder_blocks},
      {"n_decoder_blocks", cfg.n_decoder_blocks},
      {"n_heads", cfg.n_heads},
      {"head_hidden", cfg.head_hidden},
      {"attention_distance", cfg.attention_distance},
      {"rotation_head",
       cfg.rotation_head == RotationHead::svd ? "svd" : "sixdof"},
      {"shape_dim", cfg.shape_dim}};
}

inline SkelNetConfig config_from_json(const nlohmann::json& j) {
  SkelNetConfig cfg;
  cfg.j_in = j.at("j_in").get<int>();
  cfg.j_body = j.at("j_body").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.pos_embed_dim = j.at("pos_embed_dim").get<int>();
  cfg.n_encoder_blocks = j.at("n_encoder_blocks").get<int>();
  cfg.n_decoder_blocks = j.at("n_decoder_blocks").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.head_hidden = j.at("head_hidden").get<int>();
  cfg.attention_distance = j.at("attention_distance").get<int>();
  cfg.rotation_head = j.at("rotation_head").get<std::string>() == "svd"
                          ? RotationHead::svd
                          : RotationHead::sixdof;
  cfg.shape_dim = j.at("shape_dim").get<int>();
  return cfg;
}

inline nlohmann::json layout_to_json(const KeypointLayout& layout) {
  return nlohmann::json{{"names", layout.names},
                        {"mirror_map", layout.mirror_map},
                        {"root_index", layout.root_index},
                        {"endpoints", layout.endpoints},
                        {"anchor_joints", layout.anchor_joints}};
}

inline KeypointLayout layout_from_json(const nlohmann::json& j) {
  KeypointLayout layout;
  layout.names = j.at("names").get<std::vector<std::string>>();
  layout.mirror_map = j.at("mirror_map").get<std::vector<int>>();
  layout.root_index = j.at("root_index").get<int>();
  layout.endpoints = j.at("endpoints").get<std::vector<int>>();
  layout.anchor_joints = j.at("anchor_joints").get<std::vector<int>>();
  layout.validate();
  return layout;
}

}  // namespace detail_ckpt

struct CheckpointMeta {
  int iteration = 0;
  double val_mpjpe_mm = 0.0;
};

template <typename S>
void save_checkpoint(const SkelNetWeights<S>& w, const CheckpointMeta& meta,
                     const std::string& path) {
  using namespace detail_ckpt;
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("save_checkpoint: cannot open " + path);
  std::uint32_t magic = kMagic, version = kVersion;
  std::fwrite(&magic, 4, 1, f.get());
  std::fwrite(&version, 4, 1, f.get());

  nlohmann::json header;
  header["dtype"] = dtype_name<S>();
  header["config"] = config_to_json(w.config);
  header["layout"] = layout_to_json(w.layout);
  header["iteration"] = meta.iteration;
  header["val_mpjpe_mm"] = meta.val_mpjpe_mm;
  header["param_count"] = w.params.entries.size();
  const std::string htext = header.dump();
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  std::fwrite(&hlen, 4, 1, f.get());
  std::fwrite(htext.data(), 1, htext.size(), f.get());

  // Mean pose buffer, always stored as the engine scalar.
  const std::uint32_t tm_rows = static_cast<std::uint32_t>(w.theta_m.rows());
  std::fwrite(&tm_rows, 4, 1, f.get());
  std::fwrite(w.theta_m.data(), sizeof(S),
              static_cast<size_t>(w.theta_m.size()), f.get());

  for (const auto& e : w.params.entries) {
    const std::uint32_t nlen = static_cast<std::uint32_t>(e.name.size());
    std::fwrite(&nlen, 4, 1, f.get());
    std::fwrite(e.name.data(), 1, e.name.size(), f.get());
    const std::uint32_t rows = static_cast<std::uint32_t>(e.value.rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(e.value.cols());
    std::fwrite(&rows, 4, 1, f.get());
    std::fwrite(&cols, 4, 1, f.get());
    std::fwrite(e.value.data(), sizeof(S), static_cast<size_t>(e.value.size()),
                f.get());
  }
}

/// Reads just the dtype tag so callers can dispatch the scalar type.
inline std::string checkpoint_dtype(const std::string& path) {
  using namespace detail_ckpt;
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("checkpoint_dtype: cannot open " + path);
  std::uint32_t magic = 0, version = 0, hlen = 0;
  if (std::fread(&magic, 4, 1, f.get()) != 1 || magic != kMagic) {
    throw DataError("checkpoint_dtype: not a checkpoint file");
  }
  if (std::fread(&version, 4, 1, f.get()) != 1 || version != kVersion) {
    throw DataError("checkpoint_dtype: unsupported version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kVersion));
  }
  if (std::fread(&hlen, 4, 1, f.get()) != 1) {
    throw DataError("checkpoint_dtype: truncated header");
  }
  std::string htext(hlen, '\0');
  if (hlen > 0 && std::fread(htext.data(), 1, hlen, f.get()) != hlen) {
    throw DataError("checkpoint_dtype: truncated header");
  }
  return nlohmann::json::parse(htext).at("dtype").get<std::string>();
}

template <typename S>
std::pair<SkelNetWeights<S>, CheckpointMeta> load_checkpoint(
    const std::string& path) {
  using namespace detail_ckpt;
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("load_checkpoint: cannot open " + path);
  std::uint32_t magic = 0, version = 0, hlen = 0;
  if (std::fread(&magic, 4, 1, f.get()) != 1 || magic != kMagic) {
    throw DataError("load_checkpoint: not a checkpoint file");
  }
  if (std::fread(&version, 4, 1, f.get()) != 1 || version != kVersion) {
    throw DataError("load_checkpoint: unsupported version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kVersion));
  }
  if (std::fread(&hlen, 4, 1, f.get()) != 1) {
    throw DataError("load_checkpoint: truncated header");
  }
  std::string htext(hlen, '\0');
  if (hlen > 0 && std::fread(htext.data(), 1, hlen, f.get()) != hlen) {
    throw DataError("load_checkpoint: truncated header");
  }
  const nlohmann::json header = nlohmann::json::parse(htext);
  if (header.at("dtype").get<std::string>() != dtype_name<S>()) {
    throw DataError("load_checkpoint: dtype mismatch, file is " +
                    header.at("dtype").get<std::string>());
  }
  SkelNetWeights<S> w =
      SkelNetWeights<S>::init(config_from_json(header.at("config")),
                              layout_from_json(header.at("layout")), 0);
  CheckpointMeta meta;
  meta.iteration = header.value("iteration", 0);
  meta.val_mpjpe_mm = header.value("val_mpjpe_mm", 0.0);

  std::uint32_t tm_rows = 0;
  if (std::fread(&tm_rows, 4, 1, f.get()) != 1 ||
      tm_rows != static_cast<std::uint32_t>(w.theta_m.rows())) {
    throw DataError("load_checkpoint: mean-pose buffer mismatch");
  }
  if (std::fread(w.theta_m.data(), sizeof(S),
                 static_cast<size_t>(w.theta_m.size()),
                 f.get()) != static_cast<size_t>(w.theta_m.size())) {
    throw DataError("load_checkpoint: truncated mean pose");
  }

  const size_t count = header.at("param_count").get<size_t>();
  if (count != w.params.entries.size()) {
    throw DataError("load_checkpoint: parameter count mismatch");
  }
  for (size_t i = 0; i < count; ++i) {
    std::uint32_t nlen = 0;
    if (std::fread(&nlen, 4, 1, f.get()) != 1) {
      throw DataError("load_checkpoint: truncated parameter name");
    }
    std::string name(nlen, '\0');
    if (std::fread(name.data(), 1, nlen, f.get()) != nlen) {
      throw DataError("load_checkpoint: truncated parameter name");
    }
    auto& e = w.params.at(name);
    std::uint32_t rows = 0, cols = 0;
    if (std::fread(&rows, 4, 1, f.get()) != 1 ||
        std::fread(&cols, 4, 1, f.get()) != 1 ||
        rows != static_cast<std::uint32_t>(e.value.rows()) ||
        cols != static_cast<std::uint32_t>(e.value.cols())) {
      throw DataError("load_checkpoint: shape mismatch for " + name);
    }
    if (std::fread(e.value.data(), sizeof(S),
                   static_cast<size_t>(e.value.size()),
                   f.get()) != static_cast<size_t>(e.value.size())) {
      throw DataError("load_checkpoint: truncated tensor " + name);
    }
  }
  return {std::move(w), meta};
}

}  // namespace skelformer
