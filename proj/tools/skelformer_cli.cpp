// skelformer: desk-scale markerless motion-capture pipeline driver.
//
// Subcommands: gen-data, fit-regressor, train, infer, triangulate, sweep,
// plot. Exit codes: 0 ok, 2 usage, 3 data, 4 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "skelformer/augment.hpp"
#include "skelformer/checkpoint.hpp"
#include "skelformer/dataset.hpp"
#include "skelformer/ik_baseline.hpp"
#include "skelformer/io.hpp"
#include "skelformer/metrics.hpp"
#include "skelformer/skelnet.hpp"
#include "skelformer/training.hpp"

namespace fs = std::filesystem;
using namespace skelformer;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct GlobalOpts {
  std::uint64_t seed = 1;
  int threads = 0;
  std::string preset = "desk";
  std::string out_dir;
  std::vector<std::string> overrides;
};

void apply_threads(int threads) {
  if (threads > 0) {
    Eigen::setNbThreads(threads);
#ifdef _OPENMP
    omp_set_num_threads(threads);
#endif
  }
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
  fs::path dir = g.out_dir.empty() ? fs::path(".") : fs::path(g.out_dir);
  fs::create_directories(dir);
  return (dir / name).string();
}

std::map<std::string, std::string> parse_overrides(
    const std::vector<std::string>& kvs) {
  std::map<std::string, std::string> out;
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
    }
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

// Applies --set overrides to the config structs; consumed keys are erased.
void apply_overrides(std::map<std::string, std::string>& kv, TrainConfig& t,
                     AugmentConfig& a, SkelNetConfig& n, std::string& dtype) {
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto as_int = [](const std::string& v) { return std::stoi(v); };
  auto as_double = [](const std::string& v) { return std::stod(v); };

  if (auto v = take("lr")) t.lr = as_double(*v);
  if (auto v = take("batch_size")) t.batch_size = as_int(*v);
  if (auto v = take("warmup_iters")) t.warmup_iters = as_int(*v);
  if (auto v = take("total_iters")) t.total_iters = as_int(*v);
  if (auto v = take("final_lr")) t.final_lr = as_double(*v);
  if (auto v = take("weight_decay")) t.weight_decay = as_double(*v);
  if (auto v = take("val_interval")) t.val_interval = as_int(*v);
  if (auto v = take("val_frames")) t.val_frames = as_int(*v);
  if (auto v = take("smooth_l1_delta")) t.smooth_l1_delta = as_double(*v);
  if (auto v = take("w_rot")) t.w_rot = as_double(*v);
  if (auto v = take("w_pos")) t.w_pos = as_double(*v);
  if (auto v = take("w_shape")) t.w_shape = as_double(*v);
  if (auto v = take("log_interval")) t.log_interval = as_int(*v);

  if (auto v = take("mask_prob")) a.mask_prob = as_double(*v);
  if (auto v = take("yaw_range")) a.yaw_range = as_double(*v);
  if (auto v = take("lie_down_prob")) a.lie_down_prob = as_double(*v);
  if (auto v = take("noise_scale")) a.noise_scale = as_double(*v);
  if (auto v = take("mirror_prob")) a.mirror_prob = as_double(*v);
  if (auto v = take("outlier_prob")) a.outlier_prob = as_double(*v);
  if (auto v = take("outlier_std")) a.outlier_std = as_double(*v);
  if (auto v = take("shape_noise_std")) {
    a.shape_noise_std.setConstant(as_double(*v));
  }
  if (auto v = take("sigma_table")) a.sigma_table.setConstant(as_double(*v));

  if (auto v = take("attention_distance")) {
    n.attention_distance = (*v == "none") ? 0 : as_int(*v);
  }
  if (auto v = take("rotation_head")) {
    if (*v == "svd") {
      n.rotation_head = RotationHead::svd;
    } else if (*v == "sixdof") {
      n.rotation_head = RotationHead::sixdof;
    } else {
      throw CLI::ValidationError("rotation_head must be svd or sixdof");
    }
  }
  if (auto v = take("n_heads")) n.n_heads = as_int(*v);
  if (auto v = take("dtype")) dtype = *v;

  if (!kv.empty()) {
    throw CLI::ValidationError("unknown --set key '" + kv.begin()->first + "'");
  }
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path)) {
    throw DataError(std::string(what) + ": path does not exist: " + path);
  }
}

MeanPose mean_pose_from_dataset(const BodyModel& model, const Dataset& ds) {
  std::vector<PoseParams> poses;
  for (int i : ds.indices(Split::train)) {
    poses.push_back(ds.samples[static_cast<size_t>(i)].pose);
  }
  return compute_mean_pose(model.skeleton, poses);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const GlobalOpts& g, int n, int chain_length,
                 const std::string& model_path,
                 const std::string& regressor_path) {
  if (n < 1) throw CLI::ValidationError("--n must be >= 1");
  BodyModel model;
  KeypointLayout layout;
  JointRegressor gt_reg;
  if (!model_path.empty()) {
    require_exists(model_path, "gen-data");
    model = load_body_model(model_path);
    layout = identity_layout(model.skeleton);
  } else {
    const auto toy = build_toy_body_model(derive_seed(g.seed, "toy_model"));
    model = toy.model;
    layout = identity_layout(model.skeleton);
    save_body_model(model, out_path(g, "body_model.json"));
    if (regressor_path.empty()) {
      gt_reg = plant_toy_regressor(toy, layout, derive_seed(g.seed, "gt_reg"));
      save_regressor(gt_reg, layout, out_path(g, "gt_regressor.json"));
    }
  }
  if (!regressor_path.empty()) {
    require_exists(regressor_path, "gen-data");
    auto [reg, reg_layout] = load_regressor(regressor_path);
    gt_reg = std::move(reg);
    layout = std::move(reg_layout);
  }
  if (gt_reg.phi.size() == 0) {
    throw DataError(
        "gen-data: an external --model needs an external --regressor");
  }

  const Dataset ds = generate_synthetic_dataset(
      model, gt_reg.realized(), layout, n, derive_seed(g.seed, "data"),
      chain_length);
  save_dataset(ds, out_path(g, "dataset.bin"));

  json manifest;
  manifest["version"] = 1;
  manifest["n"] = n;
  manifest["chain_length"] = chain_length;
  manifest["seed"] = g.seed;
  int counts[3] = {0, 0, 0};
  for (auto s : ds.splits) counts[static_cast<int>(s)]++;
  manifest["train_frames"] = counts[0];
  manifest["val_frames"] = counts[1];
  manifest["test_frames"] = counts[2];
  std::ofstream(out_path(g, "split_manifest.json")) << manifest.dump(2) << "\n";

  std::cout << "gen-data: " << n << " frames (" << counts[0] << " train, "
            << counts[1] << " val, " << counts[2] << " test) -> "
            << out_path(g, "dataset.bin") << "\n";
  return 0;
}

int cmd_fit_regressor(const GlobalOpts& g, const std::string& dataset_path,
                      const std::string& model_path, int samples,
                      double temperature, int max_iters) {
  require_exists(dataset_path, "fit-regressor");
  require_exists(model_path, "fit-regressor");
  const BodyModel model = load_body_model(model_path);
  const Dataset ds = load_dataset(dataset_path);

  std::vector<RegressorFitSample> fit_samples;
  const auto train_idx = ds.indices(Split::train);
  for (int i = 0;
       i < std::min<int>(samples, static_cast<int>(train_idx.size())); ++i) {
    const auto& s =
        ds.samples[static_cast<size_t>(train_idx[static_cast<size_t>(i)])];
    fit_samples.push_back({s.pose, s.shape, s.keypoints.positions});
  }
  const auto report =
      fit_regressor(model, fit_samples, temperature, max_iters);
  save_regressor(report.regressor, ds.layout, out_path(g, "regressor.json"));

  // Held-out keypoint error on the validation split.
  const auto val_idx = ds.indices(Split::val);
  double err = 0.0;
  long count = 0;
  for (int i = 0; i < std::min<int>(200, static_cast<int>(val_idx.size()));
       ++i) {
    const auto& s =
        ds.samples[static_cast<size_t>(val_idx[static_cast<size_t>(i)])];
    const auto fk = forward_kinematics(model, s.pose, s.shape);
    const MatXd pred = regress_keypoints(report.regressor, fk.vertices);
    for (Eigen::Index k = 0; k < pred.rows(); ++k) {
      err += (pred.row(k) - s.keypoints.positions.row(k)).norm();
      ++count;
    }
  }
  const double holdout_mm = count > 0 ? err / count * 1000.0 : 0.0;
  const VecXd eff = effective_support(report.regressor);
  int in_band = 0;
  for (Eigen::Index k = 0; k < eff.size(); ++k) {
    in_band += (eff[k] >= 3.0 && eff[k] <= 10.0) ? 1 : 0;
  }
  std::cout << "fit-regressor: holdout keypoint error " << holdout_mm
            << " mm; effective support per joint in [" << eff.minCoeff()
            << ", " << eff.maxCoeff() << "], " << in_band << "/" << eff.size()
            << " joints within [3,10] -> " << out_path(g, "regressor.json")
            << "\n";
  return 0;
}

template <typename S>
int run_train(const GlobalOpts& g, const BodyModel& model,
              const JointRegressor& reg, const Dataset& ds,
              const SkelNetConfig& net_cfg, const TrainConfig& tcfg,
              const AugmentConfig& aug) {
  std::ofstream log(out_path(g, "train_log.jsonl"));
  auto result = train<S>(model, reg, ds, net_cfg, tcfg, aug, &log);
  CheckpointMeta meta_final{
      tcfg.total_iters,
      result.val_log.empty() ? 0.0 : result.val_log.back().mpjpe_mm};
  save_checkpoint(result.final_weights, meta_final,
                  out_path(g, "checkpoint_final.ckpt"));
  CheckpointMeta meta_best{result.best_iter, result.best_val_mpjpe_mm};
  save_checkpoint(result.best_weights, meta_best,
                  out_path(g, "checkpoint_best.ckpt"));
  std::cout << "train: best val MPJPE " << result.best_val_mpjpe_mm
            << " mm at iter " << result.best_iter << "; svd fallbacks "
            << result.svd_fallbacks << "; checkpoints in "
            << (g.out_dir.empty() ? "." : g.out_dir) << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& dataset_path,
              const std::string& model_path,
              const std::string& regressor_path) {
  require_exists(dataset_path, "train");
  require_exists(model_path, "train");
  require_exists(regressor_path, "train");
  const BodyModel model = load_body_model(model_path);
  const Dataset ds = load_dataset(dataset_path);
  auto [reg, reg_layout] = load_regressor(regressor_path);

  TrainConfig tcfg =
      g.preset == "paper" ? TrainConfig::paper() : TrainConfig::desk();
  tcfg.seed = g.seed;
  SkelNetConfig net_cfg;
  net_cfg.j_in = ds.layout.joint_count();
  net_cfg.j_body = ds.body_joints;
  net_cfg.shape_dim = ds.shape_dim;
  AugmentConfig aug =
      AugmentConfig::defaults(ds.shape_dim, ds.layout.joint_count());
  std::string dtype = "f32";
  auto kv = parse_overrides(g.overrides);
  apply_overrides(kv, tcfg, aug, net_cfg, dtype);

  std::cout << "train: preset " << g.preset
            << " (batch_size=" << tcfg.batch_size << ", lr=" << tcfg.lr
            << ", warmup_factor=" << tcfg.warmup_factor
            << ", warmup_iters=" << tcfg.warmup_iters
            << ", total_iters=" << tcfg.total_iters
            << ", final_lr=" << tcfg.final_lr
            << ", weight_decay=" << tcfg.weight_decay << ", dtype=" << dtype
            << ", rotation_head="
            << (net_cfg.rotation_head == RotationHead::svd ? "svd" : "sixdof")
            << ", attention_distance=" << net_cfg.attention_distance << ")\n";

  if (dtype == "f32") {
    return run_train<float>(g, model, reg, ds, net_cfg, tcfg, aug);
  }
  if (dtype == "f64") {
    return run_train<double>(g, model, reg, ds, net_cfg, tcfg, aug);
  }
  throw CLI::ValidationError("dtype must be f32 or f64");
}

template <typename S>
int run_infer(const GlobalOpts& g, const std::string& ckpt_path,
              const BodyModel& model, const MatXd& realized, bool mirror_test,
              const std::string& keypoints_path, const std::string& out_file) {
  auto [weights, meta] = load_checkpoint<S>(ckpt_path);
  auto mc = ad::ModelConsts<S>::make(model, realized);
  const auto frames = load_keypoint_stream(keypoints_path);

  std::vector<PoseRecord> primary, single;
  double geo_diff = 0.0, joint_diff = 0.0;
  long joints_compared = 0;
  for (const auto& [id, frame] : frames) {
    const ForwardResult direct = forward(weights, model, mc, frame);
    if (mirror_test) {
      const ForwardResult averaged =
          mirror_test_infer(weights, model, mc, frame);
      primary.push_back({id, averaged.pose, averaged.shape});
      single.push_back({id, direct.pose, direct.shape});
      for (size_t j = 0; j < direct.pose.local_rotations.size(); ++j) {
        geo_diff += geodesic_distance(direct.pose.local_rotations[j],
                                      averaged.pose.local_rotations[j]);
      }
      joint_diff += (averaged.joints - direct.joints).rowwise().norm().mean();
      joints_compared +=
          static_cast<long>(direct.pose.local_rotations.size());
    } else {
      primary.push_back({id, direct.pose, direct.shape});
    }
  }
  save_pose_records(primary, out_path(g, out_file));
  std::cout << "infer: " << primary.size() << " frames -> "
            << out_path(g, out_file);
  if (mirror_test) {
    save_pose_records(single, out_path(g, "poses_single.jsonl"));
    std::cout << " (mirror test; single-pass in poses_single.jsonl; "
              << "mean rotation difference "
              << (joints_compared > 0 ? geo_diff / joints_compared * 180.0 / kPi
                                      : 0.0)
              << " deg, mean joint shift "
              << (frames.empty()
                      ? 0.0
                      : joint_diff / static_cast<double>(frames.size()) *
                            1000.0)
              << " mm)";
  }
  std::cout << "\n";
  return 0;
}

int cmd_infer(const GlobalOpts& g, const std::string& ckpt_path,
              const std::string& model_path, const std::string& regressor_path,
              const std::string& keypoints_path, bool mirror_test) {
  require_exists(ckpt_path, "infer");
  require_exists(model_path, "infer");
  require_exists(regressor_path, "infer");
  require_exists(keypoints_path, "infer");
  const BodyModel model = load_body_model(model_path);
  auto [reg, layout] = load_regressor(regressor_path);
  const MatXd realized = reg.realized();
  const std::string dtype = checkpoint_dtype(ckpt_path);
  if (dtype == "f32") {
    return run_infer<float>(g, ckpt_path, model, realized, mirror_test,
                            keypoints_path, "poses.jsonl");
  }
  return run_infer<double>(g, ckpt_path, model, realized, mirror_test,
                           keypoints_path, "poses.jsonl");
}

int cmd_triangulate(const GlobalOpts& g, const std::string& calib_path,
                    const std::string& detections_path, double threshold,
                    const std::string& out_file) {
  require_exists(calib_path, "triangulate");
  require_exists(detections_path, "triangulate");
  const auto cams = load_calibration(calib_path);
  const auto det = load_detections(detections_path);
  if (det.camera_names.size() != cams.size()) {
    throw DataError("triangulate: calibration/detections camera count differ");
  }
  std::vector<std::pair<int, KeypointFrame>> frames;
  for (size_t f = 0; f < det.frames.size(); ++f) {
    frames.emplace_back(det.frame_ids[f],
                        triangulate_dlt(cams, det.frames[f], threshold));
  }
  save_keypoint_stream(frames, out_path(g, out_file));
  std::cout << "triangulate: " << frames.size() << " frames from "
            << cams.size() << " cameras -> " << out_path(g, out_file) << "\n";
  return 0;
}

template <typename S>
void add_net_solvers(std::vector<std::pair<std::string, Solver>>& solvers,
                     const std::vector<std::string>& names,
                     const std::string& ckpt_path, const BodyModel& model,
                     const MatXd& realized,
                     std::shared_ptr<const MeanPose> mean,
                     const FitConfig& fit_cfg) {
  auto loaded = std::make_shared<std::pair<SkelNetWeights<S>, CheckpointMeta>>(
      load_checkpoint<S>(ckpt_path));
  auto mc = ad::ModelConsts<S>::make(model, realized);
  auto realized_copy = std::make_shared<const MatXd>(realized);
  for (const auto& name : names) {
    if (name == "net") {
      solvers.emplace_back(name, [&model, mc, loaded](const KeypointFrame& f) {
        const auto r = forward(loaded->first, model, mc, f);
        return SolverOutput{r.pose, r.shape};
      });
    } else if (name == "net+mirror") {
      solvers.emplace_back(name, [&model, mc, loaded](const KeypointFrame& f) {
        const auto r = mirror_test_infer(loaded->first, model, mc, f);
        return SolverOutput{r.pose, r.shape};
      });
    } else if (name == "baseline-netinit") {
      solvers.emplace_back(name, [&model, mc, loaded, realized_copy, mean,
                                  fit_cfg](const KeypointFrame& f) {
        const auto r = forward(loaded->first, model, mc, f);
        const auto fit = fit_frame_initialized(model, *realized_copy, *mean, f,
                                               r.pose, r.shape, fit_cfg);
        return SolverOutput{fit.pose, fit.shape};
      });
    }
  }
}

int cmd_sweep(const GlobalOpts& g, const std::string& dataset_path,
              const std::string& model_path, const std::string& regressor_path,
              const std::string& ckpt_path, const std::string& axis_name,
              const std::string& solver_list, std::vector<std::uint64_t> seeds,
              int max_frames, std::vector<double> values) {
  require_exists(dataset_path, "sweep");
  require_exists(model_path, "sweep");
  require_exists(regressor_path, "sweep");
  const BodyModel model = load_body_model(model_path);
  const Dataset ds = load_dataset(dataset_path);
  auto [reg, layout] = load_regressor(regressor_path);
  const auto realized = std::make_shared<const MatXd>(reg.realized());

  SweepConfig cfg;
  if (axis_name == "noise") {
    cfg.axis = SweepAxis::noise_sigma_mm;
    cfg.values = values.empty() ? SweepConfig::default_noise_grid() : values;
  } else if (axis_name == "occlusion") {
    cfg.axis = SweepAxis::occlusion_frac;
    cfg.values =
        values.empty() ? SweepConfig::default_occlusion_grid() : values;
  } else if (axis_name == "endpoints") {
    cfg.axis = SweepAxis::endpoints;
    cfg.values = values.empty() ? std::vector<double>{static_cast<double>(
                                      ds.layout.endpoints.size())}
                                : values;
  } else {
    throw CLI::ValidationError("--axis must be noise, occlusion or endpoints");
  }
  cfg.seeds = seeds.empty() ? std::vector<std::uint64_t>{g.seed} : seeds;
  cfg.max_frames = max_frames;

  std::vector<std::string> names;
  {
    std::stringstream ss(solver_list);
    std::string item;
    while (std::getline(ss, item, ',')) names.push_back(item);
  }
  auto mean = std::make_shared<const MeanPose>(mean_pose_from_dataset(model, ds));
  FitConfig fit_cfg;

  std::vector<std::pair<std::string, Solver>> solvers;
  bool needs_net = false;
  for (const auto& n : names) {
    if (n == "net" || n == "net+mirror" || n == "baseline-netinit") {
      needs_net = true;
    } else if (n == "baseline") {
      solvers.emplace_back(
          n, [&model, realized, mean, fit_cfg](const KeypointFrame& f) {
            const auto fit = fit_frame(model, *realized, *mean, f, fit_cfg);
            return SolverOutput{fit.pose, fit.shape};
          });
    } else {
      throw CLI::ValidationError("unknown solver '" + n + "'");
    }
  }
  if (needs_net) {
    if (ckpt_path.empty()) {
      throw CLI::ValidationError("net solvers need --checkpoint");
    }
    require_exists(ckpt_path, "sweep");
    if (checkpoint_dtype(ckpt_path) == "f32") {
      add_net_solvers<float>(solvers, names, ckpt_path, model, *realized, mean,
                             fit_cfg);
    } else {
      add_net_solvers<double>(solvers, names, ckpt_path, model, *realized,
                              mean, fit_cfg);
    }
  }
  if (solvers.empty()) throw CLI::ValidationError("no solvers selected");

  SweepReport report = run_sweep(solvers, model, ds, cfg);
  json snapshot;
  snapshot["max_frames"] = cfg.max_frames;
  snapshot["solvers"] = names;
  snapshot["dataset"] = dataset_path;
  snapshot["checkpoint"] = ckpt_path;
  report.config_snapshot = snapshot.dump();

  const std::string base = "sweep_" + axis_name;
  save_sweep_report(report, out_path(g, base + ".json"),
                    out_path(g, base + ".csv"));
  std::cout << "sweep: axis " << to_string(report.axis) << ", "
            << report.points.size() << " points, " << cfg.seeds.size()
            << " seeds -> " << out_path(g, base + ".json") << "\n";
  for (const auto& p : report.points) {
    std::cout << "  value " << p.value << ": gt_noise " << p.gt_noise_mm
              << " mm";
    for (const auto& [name, r] : p.per_solver) {
      std::cout << ", " << name << " MPJPE " << r.mpjpe << " mm";
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skelformer: markerless motion-capture desk pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  if (const char* env = std::getenv("SKELFORMER_OUT_DIR")) g.out_dir = env;
  app.add_option("--seed", g.seed, "root seed for all randomness");
  app.add_option("--threads", g.threads, "worker thread cap (0 = hardware)");
  app.add_option("--preset", g.preset, "config preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--out-dir", g.out_dir,
                 "output directory (env SKELFORMER_OUT_DIR)");
  app.add_option("--set", g.overrides, "config override key=value")
      ->take_all();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  int n = 1000, chain_length = 32;
  std::string model_path, regressor_path;
  gen->add_option("--n", n, "number of frames");
  gen->add_option("--chain-length", chain_length, "frames per motion chain");
  gen->add_option("--model", model_path, "existing body-model file");
  gen->add_option("--regressor", regressor_path, "existing regressor file");

  // fit-regressor
  auto* fit = app.add_subcommand(
      "fit-regressor", "fit the temperature-softmax joint regressor");
  std::string fit_dataset, fit_model;
  int fit_samples = 1000, fit_iters = 500;
  double temperature = 10.0;
  fit->add_option("--dataset", fit_dataset, "dataset file")->required();
  fit->add_option("--model", fit_model, "body-model file")->required();
  fit->add_option("--samples", fit_samples, "training samples");
  fit->add_option("--temperature", temperature, "softmax temperature");
  fit->add_option("--max-iters", fit_iters, "L-BFGS iteration cap");

  // train
  auto* tr = app.add_subcommand("train", "train the skeletal transformer");
  std::string tr_dataset, tr_model, tr_regressor;
  tr->add_option("--dataset", tr_dataset, "dataset file")->required();
  tr->add_option("--model", tr_model, "body-model file")->required();
  tr->add_option("--regressor", tr_regressor, "regressor file")->required();

  // infer
  auto* inf = app.add_subcommand("infer", "keypoints -> pose/shape records");
  std::string inf_ckpt, inf_model, inf_regressor, inf_keypoints;
  bool mirror_test = false;
  inf->add_option("--checkpoint", inf_ckpt, "checkpoint file")->required();
  inf->add_option("--model", inf_model, "body-model file")->required();
  inf->add_option("--regressor", inf_regressor, "regressor file")->required();
  inf->add_option("--keypoints", inf_keypoints, "keypoint stream")->required();
  inf->add_flag("--mirror-test", mirror_test,
                "average with the back-mirrored prediction");

  // triangulate
  auto* tri =
      app.add_subcommand("triangulate", "DLT triangulation of 2D detections");
  std::string tri_calib, tri_det, tri_out = "keypoints.txt";
  double conf_threshold = 0.3;
  tri->add_option("--calibration", tri_calib, "camera calibration file")
      ->required();
  tri->add_option("--detections", tri_det, "detections file")->required();
  tri->add_option("--conf-threshold", conf_threshold,
                  "per-view confidence threshold");
  tri->add_option("--out", tri_out, "output keypoint stream name");

  // sweep
  auto* sw = app.add_subcommand("sweep", "noise/occlusion robustness sweep");
  std::string sw_dataset, sw_model, sw_regressor, sw_ckpt;
  std::string sw_axis = "noise", sw_solvers = "net,baseline";
  std::vector<std::uint64_t> sw_seeds;
  std::vector<double> sw_values;
  int sw_frames = 128;
  sw->add_option("--dataset", sw_dataset, "dataset file")->required();
  sw->add_option("--model", sw_model, "body-model file")->required();
  sw->add_option("--regressor", sw_regressor, "regressor file")->required();
  sw->add_option("--checkpoint", sw_ckpt, "checkpoint (for net solvers)");
  sw->add_option("--axis", sw_axis, "noise, occlusion or endpoints");
  sw->add_option("--solvers", sw_solvers,
                 "comma list: net,net+mirror,baseline,baseline-netinit");
  sw->add_option("--seeds", sw_seeds, "sweep seeds");
  sw->add_option("--values", sw_values, "axis values (default grid)");
  sw->add_option("--max-frames", sw_frames, "test frames per point");

  // plot
  auto* pl = app.add_subcommand("plot", "SVG line chart from a sweep CSV");
  std::string pl_csv, pl_metric = "mpjpe_mm", pl_out = "sweep.svg";
  pl->add_option("--csv", pl_csv, "flat sweep table")->required();
  pl->add_option("--metric", pl_metric, "metric column to plot");
  pl->add_option("--out", pl_out, "output SVG name");

  CLI11_PARSE(app, argc, argv);
  apply_threads(g.threads);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(g, n, chain_length, model_path, regressor_path);
    }
    if (fit->parsed()) {
      return cmd_fit_regressor(g, fit_dataset, fit_model, fit_samples,
                               temperature, fit_iters);
    }
    if (tr->parsed()) return cmd_train(g, tr_dataset, tr_model, tr_regressor);
    if (inf->parsed()) {
      return cmd_infer(g, inf_ckpt, inf_model, inf_regressor, inf_keypoints,
                       mirror_test);
    }
    if (tri->parsed()) {
      return cmd_triangulate(g, tri_calib, tri_det, conf_threshold, tri_out);
    }
    if (sw->parsed()) {
      return cmd_sweep(g, sw_dataset, sw_model, sw_regressor, sw_ckpt, sw_axis,
                       sw_solvers, sw_seeds, sw_frames, sw_values);
    }
    if (pl->parsed()) {
      require_exists(pl_csv, "plot");
      plot_sweep_csv(pl_csv, pl_metric, out_path(g, pl_out));
      std::cout << "plot: " << pl_metric << " -> " << out_path(g, pl_out)
                << "\n";
      return 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeMismatch& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
