#pragma once

#include "mcenet/config.hpp"
#include "mcenet/dataio.hpp"
#include "mcenet/grouping.hpp"
#include "mcenet/heatmap.hpp"
#include "mcenet/metrics.hpp"
#include "mcenet/model.hpp"
#include "mcenet/occupancy.hpp"
#include "mcenet/scene_tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace mcenet {

/// One dataset turned into model-ready samples for a given variant.
struct PreparedDataset {
  std::string name;
  SceneDataset data;  // after resampling
  SplitResult split;
  std::vector<ModelSample> train, test;
  std::shared_ptr<const SceneRaster> raster;  // null when the variant has no scene branch
  int scene_channels = 0;
  int occ_cells = 0;
};

namespace detail {

inline std::set<FrameId> all_frames(const SceneDataset& ds) {
  std::set<FrameId> frames;
  for (const auto& t : ds.tracks)
    for (const auto& p : t.points) frames.insert(p.frame_id);
  return frames;
}

/// DBSCAN labels per frame, computed once and reused across windows.
inline std::map<FrameId, StepClusters> cluster_frames(const SceneDataset& ds,
                                                      const FrameTable& table, double eps,
                                                      int min_pts) {
  std::map<FrameId, StepClusters> out;
  for (FrameId f : all_frames(ds)) {
    StepClusters sc;
    std::vector<Eigen::Vector2d> positions;
    for (const auto& e : table.agents_at(f)) {
      sc.ids.push_back(e.agent_id);
      positions.push_back(e.position);
    }
    sc.labels = dbscan(positions, eps, min_pts);
    out.emplace(f, std::move(sc));
  }
  return out;
}

inline SceneRaster obtain_raster(const DatasetManifest& manifest, RasterKind kind,
                                 const SceneDataset& full, const SplitResult& split,
                                 const ExperimentConfig& cfg) {
  const char* key = kind == RasterKind::kHeatMap ? "heat_map"
                    : kind == RasterKind::kAerial ? "aerial"
                                                  : "segmented";
  auto it = manifest.rasters.find(key);
  if (it != manifest.rasters.end()) {
    SceneRaster raster = load_raster(it->second, kind, manifest.meters_per_pixel);
    if ((manifest.raster_height > 0 && raster.height != manifest.raster_height) ||
        (manifest.raster_width > 0 && raster.width != manifest.raster_width))
      throw ConfigError(it->second + ": raster dimensions do not match the manifest");
    return raster;
  }
  if (kind != RasterKind::kHeatMap)
    throw ConfigError("variant needs a '" + std::string(key) + "' raster but manifest '" +
                      manifest.name + "' does not declare one");
  // heat maps can always be derived from the training split
  int h = manifest.raster_height, w = manifest.raster_width;
  if (h <= 0 || w <= 0) {
    double max_x = 1.0, max_y = 1.0;
    for (const auto& t : full.tracks)
      for (const auto& p : t.points) {
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
      }
    w = std::min(1024, static_cast<int>(std::floor(max_x / manifest.meters_per_pixel)) + 1);
    h = std::min(1024, static_cast<int>(std::floor(max_y / manifest.meters_per_pixel)) + 1);
  }
  return build_heat_maps(split.train.tracks, h, w, manifest.meters_per_pixel,
                         cfg.heat_kernel_std);
}

inline std::uint64_t sample_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(root ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

}  // namespace detail

/// Loads, resamples, splits and windows one dataset, then attaches the
/// contexts the chosen variant needs (grouping-aware occupancy grids, scene
/// tensors). Heat maps are always built from the training split only.
inline PreparedDataset prepare_dataset(const DatasetManifest& manifest,
                                       const ExperimentConfig& cfg) {
  const BranchConfig branches = parse_variant(cfg.variant);
  cfg.grid.validate();

  PreparedDataset prep;
  prep.name = manifest.name;
  prep.data = load_dataset(manifest.trajectory_file, manifest.name, manifest.frame_rate);
  if (manifest.target_fps > 0.0 && manifest.target_fps != manifest.frame_rate)
    prep.data = resample(prep.data, manifest.target_fps);
  prep.split = chronological_split(prep.data, cfg.test_fraction);
  prep.occ_cells = cfg.grid.cells();

  const auto train_windows =
      make_windows(prep.split.train, cfg.model.T, cfg.model.T_prime, cfg.window_stride);
  const auto test_windows =
      make_windows(prep.split.test, cfg.model.T, cfg.model.T_prime, cfg.window_stride);

  // scene context
  std::shared_ptr<const SceneTensor> static_scene;
  if (branches.use_scene) {
    prep.raster = std::make_shared<SceneRaster>(
        detail::obtain_raster(manifest, branches.scene_kind, prep.data, prep.split, cfg));
    prep.scene_channels = prep.raster->channels;
    if (cfg.scene_mode == SceneMode::kStatic) {
      TrainingSample dummy;  // static tensors ignore the sample
      dummy.obs_positions.resize(cfg.model.T, 2);
      dummy.obs_positions.setZero();
      dummy.fut_positions.resize(cfg.model.T_prime, 2);
      dummy.fut_positions.setZero();
      static_scene = std::make_shared<const SceneTensor>(scene_tensor(
          *prep.raster, dummy, SceneMode::kStatic, cfg.crop_size_m, cfg.model.scene_input_size));
    }
  }

  // grouping and occupancy, with per-frame clusters shared across windows
  const FrameTable table(prep.data);
  std::map<FrameId, StepClusters> clusters;
  if (branches.use_occupancy)
    clusters = detail::cluster_frames(prep.data, table, cfg.dbscan_eps, cfg.dbscan_min_pts);

  auto build = [&](const std::vector<TrainingSample>& windows, std::vector<ModelSample>& out) {
    out.reserve(windows.size());
    for (const auto& w : windows) {
      ModelSample ms;
      ms.sample = w;
      if (branches.use_occupancy) {
        std::vector<FrameId> obs_frames, fut_frames;
        for (int s = 0; s < cfg.model.T; ++s) obs_frames.push_back(w.frame_at_step(s));
        for (int s = 0; s < cfg.model.T_prime; ++s)
          fut_frames.push_back(w.frame_at_step(cfg.model.T + s));

        std::vector<StepClusters> obs_clusters;
        for (FrameId f : obs_frames) obs_clusters.push_back(clusters.at(f));
        const GroupAssignment groups = groups_from_labels(obs_clusters, cfg.coexist_rate);

        const auto obs_presence = window_presence(table, obs_frames);
        const auto fut_presence = window_presence(table, fut_frames);
        ms.occ_obs = occupancy_features(
            build_occupancy(w.obs_positions, w.agent_id, obs_presence, groups, cfg.grid));
        ms.occ_fut = occupancy_features(
            build_occupancy(w.fut_positions, w.agent_id, fut_presence, groups, cfg.grid));
      }
      if (branches.use_scene) {
        ms.scene = cfg.scene_mode == SceneMode::kStatic
                       ? static_scene
                       : std::make_shared<const SceneTensor>(
                             scene_tensor(*prep.raster, w, SceneMode::kPerStepCrop,
                                          cfg.crop_size_m, cfg.model.scene_input_size));
      }
      out.push_back(std::move(ms));
    }
  };
  build(train_windows, prep.train);
  build(test_windows, prep.test);
  return prep;
}

inline Standardizer fit_standardizer(const std::vector<ModelSample>& train) {
  std::vector<TrainingSample> samples;
  samples.reserve(train.size());
  for (const auto& ms : train) samples.push_back(ms.sample);
  return Standardizer::fit(samples);
}

struct TrainedModel {
  Mcenet model;
  std::vector<EpochStats> history;
};

inline TrainedModel train_model(const ExperimentConfig& cfg,
                                const std::vector<ModelSample>& train, int scene_channels,
                                int occ_cells) {
  Mcenet model(cfg.model, parse_variant(cfg.variant), scene_channels, occ_cells);
  model.set_standardizer(fit_standardizer(train));
  auto history = model.train(train);
  return {std::move(model), std::move(history)};
}

struct EvaluationResult {
  MetricReport report;
  std::vector<SampleMetrics> per_sample;
  std::vector<PredictionSet> predictions;
};

/// Predicts N ranked trajectories per test sample and averages the
/// most-likely and best-of-k displacement errors.
inline EvaluationResult evaluate_model(const Mcenet& model,
                                       const std::vector<ModelSample>& test, int k,
                                       std::uint64_t seed, const std::string& dataset,
                                       const std::string& variant) {
  if (test.empty()) throw std::invalid_argument("evaluate_model: empty test set");
  const int n_samples = model.config().num_samples;
  if (k < 1 || k > n_samples)
    throw ConfigError("evaluate: k must be in [1, N]; k=" + std::to_string(k) +
                      ", N=" + std::to_string(n_samples));

  EvaluationResult res;
  res.report.dataset = dataset;
  res.report.variant = variant;
  res.report.k = k;
  res.report.sample_count = static_cast<int>(test.size());

  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& ms = test[i];
    PredictionSet pred =
        model.predict(ms, n_samples, detail::sample_seed(seed, static_cast<std::uint64_t>(i)));
    const PointSeq& gt = ms.sample.fut_positions;
    SampleMetrics sm;
    sm.agent_id = ms.sample.agent_id;
    sm.start_frame = ms.sample.start_frame;
    sm.ade_ml = ade(pred.trajectories[static_cast<std::size_t>(pred.most_likely_index)], gt);
    sm.fde_ml = fde(pred.trajectories[static_cast<std::size_t>(pred.most_likely_index)], gt);
    const auto [a, f] = best_of_k(pred, gt, k);
    sm.ade_bk = a;
    sm.fde_bk = f;
    res.per_sample.push_back(sm);
    res.predictions.push_back(std::move(pred));

    res.report.ade_most_likely += sm.ade_ml;
    res.report.fde_most_likely += sm.fde_ml;
    res.report.ade_best_of_k += sm.ade_bk;
    res.report.fde_best_of_k += sm.fde_bk;
  }
  const double n = static_cast<double>(test.size());
  res.report.ade_most_likely /= n;
  res.report.fde_most_likely /= n;
  res.report.ade_best_of_k /= n;
  res.report.fde_best_of_k /= n;
  return res;
}

/// All six fixed variants, trained and evaluated with identical seed and
/// data pipeline. Runs sequentially by default; the parallel mode produces
/// bit-identical reports because each run is self-contained and seeded.
inline std::vector<MetricReport> run_ablation(const DatasetManifest& manifest,
                                              const ExperimentConfig& base,
                                              const std::vector<std::string>& variants,
                                              bool parallel = false) {
  auto run_one = [&manifest, &base](const std::string& tag) {
    ExperimentConfig cfg = base;
    cfg.variant = tag;
    parse_variant(tag);  // validate before the expensive work
    PreparedDataset prep = prepare_dataset(manifest, cfg);
    TrainedModel trained =
        train_model(cfg, prep.train, prep.scene_channels, prep.occ_cells);
    return evaluate_model(trained.model, prep.test, cfg.eval_k, cfg.model.seed, prep.name, tag)
        .report;
  };

  for (const auto& tag : variants) parse_variant(tag);  // fail fast on any unknown tag

  std::vector<MetricReport> reports;
  if (parallel) {
    std::vector<std::future<MetricReport>> futures;
    futures.reserve(variants.size());
    for (const auto& tag : variants)
      futures.push_back(std::async(std::launch::async, run_one, tag));
    for (auto& f : futures) reports.push_back(f.get());
  } else {
    for (const auto& tag : variants) reports.push_back(run_one(tag));
  }
  return reports;
}

/// Trains on every dataset except the target, then per visibility rate
/// fine-tunes on the earliest fraction of the target's training timeline and
/// evaluates on the target's test split. Rate 0 performs no fine-tuning.
inline std::vector<MetricReport> leave_one_out(const std::vector<DatasetManifest>& manifests,
                                               const ExperimentConfig& cfg) {
  if (manifests.size() < 2)
    throw ConfigError("leave_one_out: need at least 2 datasets");

  std::vector<PreparedDataset> prepared;
  prepared.reserve(manifests.size());
  for (const auto& m : manifests) prepared.push_back(prepare_dataset(m, cfg));

  int target_idx = -1;
  for (std::size_t i = 0; i < prepared.size(); ++i)
    if (prepared[i].name == cfg.target) target_idx = static_cast<int>(i);
  if (target_idx < 0)
    throw ConfigError("leave_one_out: target '" + cfg.target + "' not among the datasets");

  int scene_channels = prepared[0].scene_channels;
  for (const auto& p : prepared)
    if (p.scene_channels != scene_channels)
      throw ConfigError("leave_one_out: datasets disagree on scene channels");

  std::vector<ModelSample> pooled_train;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    if (static_cast<int>(i) == target_idx) continue;
    pooled_train.insert(pooled_train.end(), prepared[i].train.begin(), prepared[i].train.end());
  }
  if (pooled_train.empty()) throw ConfigError("leave_one_out: no training samples");

  const TrainedModel base =
      train_model(cfg, pooled_train, scene_channels, prepared[0].occ_cells);
  const PreparedDataset& target = prepared[static_cast<std::size_t>(target_idx)];

  // target training timeline bounds, for the visibility cutoff
  const FrameId lo = target.split.train.min_frame();
  const FrameId hi = target.split.train.max_frame();
  const int finetune_epochs =
      cfg.finetune_epochs > 0 ? cfg.finetune_epochs : std::max(1, cfg.model.epochs / 2);

  std::vector<MetricReport> reports;
  for (double rate : cfg.visibility_rates) {
    if (rate < 0.0 || rate > 1.0)
      throw ConfigError("leave_one_out: visibility rate outside [0,1]");
    Mcenet model = base.model;  // fresh copy of the cross-scene model
    if (rate > 0.0) {
      const FrameId cutoff =
          lo + static_cast<FrameId>(std::llround(rate * static_cast<double>(hi - lo + 1)));
      std::vector<ModelSample> subset;
      for (const auto& ms : target.train) {
        const FrameId last =
            ms.sample.frame_at_step(cfg.model.T + cfg.model.T_prime - 1);
        if (last < cutoff) subset.push_back(ms);
      }
      if (!subset.empty()) model.train(subset, finetune_epochs);
    }
    auto result = evaluate_model(model, target.test, cfg.eval_k, cfg.model.seed, target.name,
                                 cfg.variant + "@r=" + format_double(rate));
    reports.push_back(result.report);
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

inline void write_training_log_csv(const std::vector<EpochStats>& history,
                                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "epoch,mse,kl,total\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out << i << ',' << format_double(history[i].mse) << ',' << format_double(history[i].kl)
        << ',' << format_double(history[i].total) << '\n';
}

inline void write_predictions_csv(const std::string& dataset,
                                  const std::vector<ModelSample>& samples,
                                  const std::vector<PredictionSet>& predictions,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "dataset,agent_id,start_frame,traj_index,score,is_most_likely,step,x,y\n";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& pred = predictions[i];
    const auto& s = samples[i].sample;
    for (int n = 0; n < pred.num_trajectories(); ++n) {
      const auto& traj = pred.trajectories[static_cast<std::size_t>(n)];
      for (Eigen::Index t = 0; t < traj.rows(); ++t) {
        out << dataset << ',' << s.agent_id << ',' << s.start_frame << ',' << n << ','
            << format_double(pred.scores[static_cast<std::size_t>(n)]) << ','
            << (n == pred.most_likely_index ? 1 : 0) << ',' << t << ','
            << format_double(traj(t, 0)) << ',' << format_double(traj(t, 1)) << '\n';
      }
    }
  }
}

inline void write_metrics_json(const std::vector<MetricReport>& reports,
                               const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"dataset", r.dataset},
                   {"variant", r.variant},
                   {"k", r.k},
                   {"ade_ml", r.ade_most_likely},
                   {"fde_ml", r.fde_most_likely},
                   {"ade_bk", r.ade_best_of_k},
                   {"fde_bk", r.fde_best_of_k},
                   {"n_samples", r.sample_count}});
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << arr.dump(2) << "\n";
}

}  // namespace mcenet
