// Command-line front end: dataset preparation, training, prediction,
// evaluation, ablations, leave-one-out runs and plot emission.

#include "mcenet/mcenet.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mcenet;

namespace {

struct CommonArgs {
  std::string out_dir;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 7;
  bool seed_given = false;
};

std::string resolve_out_dir(const std::string& flag_value, const std::string& subcommand) {
  if (!flag_value.empty()) return flag_value;
  const char* root = std::getenv("MCENET_OUTPUT_ROOT");
  const std::string base = root && *root ? root : "./mcenet_out";
  return base + "/" + subcommand;
}

void apply_common(ExperimentConfig& cfg, const CommonArgs& args, const std::string& subcommand) {
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.apply_override(KeyValueConfig::trim(kv.substr(0, eq)),
                       KeyValueConfig::trim(kv.substr(eq + 1)));
  }
  if (args.seed_given) cfg.model.seed = args.seed;
  cfg.out_dir = resolve_out_dir(args.out_dir, subcommand);
  fs::create_directories(cfg.out_dir);
}

void write_snapshot(const ExperimentConfig& cfg) {
  cfg.write_snapshot(cfg.out_dir + "/config_resolved.txt");
}

DatasetManifest load_manifest_checked(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("manifest does not exist: " + path);
  DatasetManifest m = DatasetManifest::load(path);
  if (!fs::exists(m.trajectory_file))
    throw ConfigError("trajectory file does not exist: " + m.trajectory_file);
  return m;
}

/// Picks up the resolved config written next to a checkpoint, so data
/// preparation matches training exactly.
void apply_sibling_config(ExperimentConfig& cfg, const std::string& checkpoint,
                          const std::string& explicit_config) {
  std::string path = explicit_config;
  if (path.empty()) {
    const fs::path sibling = fs::path(checkpoint).parent_path() / "config_resolved.txt";
    if (fs::exists(sibling)) path = sibling.string();
  }
  if (!path.empty()) cfg.apply(KeyValueConfig::parse_file(path));
}

int cmd_prepare(const std::string& manifest_path, int synthetic_agents, int synthetic_frames,
                double synthetic_noise, const CommonArgs& args) {
  ExperimentConfig cfg;
  apply_common(cfg, args, "prepare");

  if (synthetic_agents > 0) {
    SyntheticSpec spec;
    spec.num_agents = synthetic_agents;
    spec.num_frames = synthetic_frames;
    spec.speed_noise = synthetic_noise;
    spec.seed = cfg.model.seed;
    const SceneDataset ds = make_synthetic_dataset(spec);
    const std::string traj = cfg.out_dir + "/synthetic.txt";
    save_dataset(ds, traj);
    std::ofstream manifest(cfg.out_dir + "/synthetic.manifest");
    manifest << "name = synthetic\n"
             << "trajectories = synthetic.txt\n"
             << "frame_rate = " << spec.frame_rate << "\n"
             << "meters_per_pixel = " << spec.meters_per_pixel << "\n";
    write_snapshot(cfg);
    std::cout << "wrote " << traj << " (" << ds.tracks.size() << " agents, frames "
              << ds.min_frame() << ".." << ds.max_frame() << ")\n";
    return 0;
  }

  if (manifest_path.empty()) throw ConfigError("prepare: need --manifest or --synthetic");
  const DatasetManifest manifest = load_manifest_checked(manifest_path);
  cfg.manifests = {manifest_path};
  const PreparedDataset prep = prepare_dataset(manifest, cfg);

  // cache the raster the variant uses (heat maps are derived data)
  if (prep.raster) {
    save_raster_cache(*prep.raster, cfg.out_dir + "/" + prep.name + "_scene.mcra");
    save_pnm(to_image(*prep.raster), cfg.out_dir + "/" + prep.name + "_scene.ppm");
  }

  nlohmann::json summary;
  summary["dataset"] = prep.name;
  summary["frame_rate"] = prep.data.frame_rate;
  summary["boundary_frame"] = prep.split.boundary_frame;
  summary["train_windows"] = prep.train.size();
  summary["test_windows"] = prep.test.size();
  int counts[3] = {0, 0, 0};
  for (const auto& t : prep.data.tracks) ++counts[static_cast<int>(t.agent_type)];
  summary["pedestrians"] = counts[0];
  summary["cyclists"] = counts[1];
  summary["vehicles"] = counts[2];
  std::ofstream(cfg.out_dir + "/summary.json") << summary.dump(2) << "\n";
  write_snapshot(cfg);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& variant,
              const CommonArgs& args) {
  ExperimentConfig cfg;
  cfg.variant = variant;
  apply_common(cfg, args, "train");
  parse_variant(cfg.variant);

  const DatasetManifest manifest = load_manifest_checked(manifest_path);
  cfg.manifests = {manifest_path};
  write_snapshot(cfg);

  const PreparedDataset prep = prepare_dataset(manifest, cfg);
  if (prep.train.empty()) throw ConfigError("train: no training windows in " + prep.name);
  TrainedModel trained = train_model(cfg, prep.train, prep.scene_channels, prep.occ_cells);

  trained.model.save(cfg.out_dir + "/checkpoint.bin");
  write_training_log_csv(trained.history, cfg.out_dir + "/training_log.csv");
  std::cout << "trained " << cfg.variant << " on " << prep.train.size() << " windows; final loss "
            << format_double(trained.history.empty() ? 0.0 : trained.history.back().total)
            << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& manifest_path,
                const std::string& train_config, const std::string& split,
                const CommonArgs& args) {
  ExperimentConfig cfg;
  apply_sibling_config(cfg, checkpoint, train_config);
  apply_common(cfg, args, "predict");

  const Mcenet model = Mcenet::load(checkpoint);
  cfg.model = model.config();
  cfg.variant = variant_tag(model.branches());
  if (args.seed_given) cfg.model.seed = args.seed;

  const DatasetManifest manifest = load_manifest_checked(manifest_path);
  cfg.manifests = {manifest_path};
  write_snapshot(cfg);

  const PreparedDataset prep = prepare_dataset(manifest, cfg);
  const auto& samples = split == "train" ? prep.train : prep.test;
  if (samples.empty()) throw ConfigError("predict: no windows in the " + split + " split");

  std::vector<PredictionSet> predictions;
  predictions.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    predictions.push_back(model.predict(samples[i], model.config().num_samples,
                                        detail::sample_seed(cfg.model.seed, i)));
  write_predictions_csv(prep.name, samples, predictions, cfg.out_dir + "/predictions.csv");
  std::cout << "wrote predictions for " << samples.size() << " windows\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& manifest_path,
                 const std::string& train_config, int k, bool oracle, const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!oracle) apply_sibling_config(cfg, checkpoint, train_config);
  apply_common(cfg, args, "evaluate");
  if (k > 0) cfg.eval_k = k;

  const DatasetManifest manifest = load_manifest_checked(manifest_path);
  cfg.manifests = {manifest_path};

  std::vector<MetricReport> reports;
  std::vector<SampleMetrics> per_sample;

  if (oracle) {
    // pipeline self-check: the predictor replays the ground truth, so every
    // metric must be exactly zero
    cfg.variant = "baseline";
    write_snapshot(cfg);
    const PreparedDataset prep = prepare_dataset(manifest, cfg);
    if (prep.test.empty()) throw ConfigError("evaluate: no test windows");
    MetricReport report;
    report.dataset = prep.name;
    report.variant = "oracle";
    report.k = std::min(cfg.eval_k, cfg.model.num_samples);
    report.sample_count = static_cast<int>(prep.test.size());
    for (const auto& ms : prep.test) {
      PredictionSet pred;
      for (int n = 0; n < cfg.model.num_samples; ++n)
        pred.trajectories.push_back(ms.sample.fut_positions);
      apply_ranking(pred);
      const auto [a, f] = best_of_k(pred, ms.sample.fut_positions, report.k);
      const auto& ml = pred.trajectories[static_cast<std::size_t>(pred.most_likely_index)];
      per_sample.push_back({ms.sample.agent_id, ms.sample.start_frame,
                            ade(ml, ms.sample.fut_positions), fde(ml, ms.sample.fut_positions),
                            a, f});
    }
    for (const auto& sm : per_sample) {
      report.ade_most_likely += sm.ade_ml / per_sample.size();
      report.fde_most_likely += sm.fde_ml / per_sample.size();
      report.ade_best_of_k += sm.ade_bk / per_sample.size();
      report.fde_best_of_k += sm.fde_bk / per_sample.size();
    }
    reports.push_back(report);
  } else {
    const Mcenet model = Mcenet::load(checkpoint);
    cfg.model = model.config();
    cfg.variant = variant_tag(model.branches());
    if (args.seed_given) cfg.model.seed = args.seed;
    write_snapshot(cfg);
    const PreparedDataset prep = prepare_dataset(manifest, cfg);
    if (prep.test.empty()) throw ConfigError("evaluate: no test windows");
    EvaluationResult result = evaluate_model(model, prep.test, cfg.eval_k, cfg.model.seed,
                                             prep.name, cfg.variant);
    reports.push_back(result.report);
    per_sample = std::move(result.per_sample);
    write_predictions_csv(prep.name, prep.test, result.predictions,
                          cfg.out_dir + "/predictions.csv");
  }

  write_metrics_csv(reports, cfg.out_dir + "/metrics.csv");
  write_metrics_json(reports, cfg.out_dir + "/metrics.json");
  write_sample_metrics_csv(per_sample, cfg.out_dir + "/per_sample_metrics.csv");
  std::cout << "dataset=" << reports[0].dataset << " variant=" << reports[0].variant
            << " ade_ml=" << format_double(reports[0].ade_most_likely)
            << " fde_ml=" << format_double(reports[0].fde_most_likely)
            << " ade_bk=" << format_double(reports[0].ade_best_of_k)
            << " fde_bk=" << format_double(reports[0].fde_best_of_k) << "\n";
  return 0;
}

int cmd_ablate(const std::string& manifest_path, const std::string& variants_csv, bool parallel,
               const CommonArgs& args) {
  ExperimentConfig cfg;
  apply_common(cfg, args, "ablate");

  std::vector<std::string> variants;
  std::istringstream ss(variants_csv);
  std::string item;
  while (std::getline(ss, item, ',')) variants.push_back(KeyValueConfig::trim(item));
  if (variants.empty()) throw ConfigError("ablate: empty variant list");

  const DatasetManifest manifest = load_manifest_checked(manifest_path);
  cfg.manifests = {manifest_path};
  write_snapshot(cfg);

  const auto reports = run_ablation(manifest, cfg, variants, parallel);
  write_metrics_csv(reports, cfg.out_dir + "/metrics.csv");
  write_metrics_json(reports, cfg.out_dir + "/metrics.json");
  for (const auto& r : reports)
    std::cout << r.variant << ": ade_ml=" << format_double(r.ade_most_likely)
              << " fde_ml=" << format_double(r.fde_most_likely) << "\n";
  return 0;
}

int cmd_loo(const std::vector<std::string>& manifest_paths, const std::string& target,
            const std::string& rates_csv, const CommonArgs& args) {
  ExperimentConfig cfg;
  cfg.target = target;
  if (!rates_csv.empty()) cfg.apply_override("visibility_rates", rates_csv);
  apply_common(cfg, args, "loo");

  std::vector<DatasetManifest> manifests;
  for (const auto& p : manifest_paths) manifests.push_back(load_manifest_checked(p));
  cfg.manifests = manifest_paths;
  write_snapshot(cfg);

  const auto reports = leave_one_out(manifests, cfg);
  write_metrics_csv(reports, cfg.out_dir + "/metrics.csv");
  write_metrics_json(reports, cfg.out_dir + "/metrics.json");
  for (const auto& r : reports)
    std::cout << r.variant << ": ade_ml=" << format_double(r.ade_most_likely) << "\n";
  return 0;
}

int cmd_plot(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& train_config, int limit, const CommonArgs& args) {
  ExperimentConfig cfg;
  apply_sibling_config(cfg, checkpoint, train_config);
  apply_common(cfg, args, "plot");

  const Mcenet model = Mcenet::load(checkpoint);
  cfg.model = model.config();
  cfg.variant = variant_tag(model.branches());

  const DatasetManifest manifest = load_manifest_checked(manifest_path);
  cfg.manifests = {manifest_path};
  write_snapshot(cfg);

  const PreparedDataset prep = prepare_dataset(manifest, cfg);
  if (prep.test.empty()) throw ConfigError("plot: no test windows");

  std::vector<ModelSample> samples;
  std::vector<PredictionSet> predictions;
  const std::size_t count =
      limit > 0 ? std::min<std::size_t>(prep.test.size(), static_cast<std::size_t>(limit))
                : prep.test.size();
  for (std::size_t i = 0; i < count; ++i) {
    samples.push_back(prep.test[i]);
    predictions.push_back(model.predict(prep.test[i], model.config().num_samples,
                                        detail::sample_seed(cfg.model.seed, i)));
  }
  const auto files = emit_plots(prep.name, samples, predictions, prep.raster.get(),
                                manifest.meters_per_pixel, cfg.out_dir);
  std::cout << "wrote " << files.size() << " plots under " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-path trajectory prediction for mixed traffic"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string manifest, checkpoint, train_config, variant = "hm+gp";
  std::string split = "test", variants_csv = "baseline,gp,hm,hm+gp,ap+gp,sm+gp";
  std::string target, rates_csv;
  std::vector<std::string> manifest_list;
  int k = 0, limit = 0, synthetic_agents = 0, synthetic_frames = 60;
  double synthetic_noise = 0.05;
  bool parallel = false, oracle = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", common.out_dir, "output directory (default: $MCENET_OUTPUT_ROOT)");
    cmd->add_option("--set", common.overrides, "config override key=value")->take_all();
    cmd->add_option("--seed", common.seed, "root random seed")
        ->each([&](const std::string&) { common.seed_given = true; });
  };

  auto* prepare = app.add_subcommand("prepare", "validate a dataset and build caches");
  prepare->add_option("--manifest", manifest, "dataset manifest");
  prepare->add_option("--synthetic", synthetic_agents, "generate a synthetic dataset instead");
  prepare->add_option("--frames", synthetic_frames, "synthetic timeline length");
  prepare->add_option("--noise", synthetic_noise, "synthetic per-step speed noise (m)");
  add_common(prepare);

  auto* train = app.add_subcommand("train", "train a model variant");
  train->add_option("--manifest", manifest, "dataset manifest")->required();
  train->add_option("--variant", variant, "baseline|gp|hm|hm+gp|ap+gp|sm+gp");
  add_common(train);

  auto* predict = app.add_subcommand("predict", "sample trajectories from a checkpoint");
  predict->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict->add_option("--manifest", manifest, "dataset manifest")->required();
  predict->add_option("--train-config", train_config, "resolved config of the training run");
  predict->add_option("--split", split, "test|train");
  add_common(predict);

  auto* evaluate = app.add_subcommand("evaluate", "ADE/FDE evaluation on the test split");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file");
  evaluate->add_option("--manifest", manifest, "dataset manifest")->required();
  evaluate->add_option("--train-config", train_config, "resolved config of the training run");
  evaluate->add_option("--k", k, "best-of-k cutoff (default 10)");
  evaluate->add_flag("--oracle", oracle, "replay ground truth through the metric pipeline");
  add_common(evaluate);

  auto* ablate = app.add_subcommand("ablate", "train and evaluate several variants");
  ablate->add_option("--manifest", manifest, "dataset manifest")->required();
  ablate->add_option("--variants", variants_csv, "comma-separated variant tags");
  ablate->add_flag("--parallel", parallel, "run variants concurrently");
  add_common(ablate);

  auto* loo = app.add_subcommand("loo", "leave-one-out cross-validation with fine-tuning");
  loo->add_option("--manifest", manifest_list, "dataset manifests (repeat)")->required();
  loo->add_option("--target", target, "held-out dataset name")->required();
  loo->add_option("--rates", rates_csv, "visibility rates, e.g. 0,0.5,1");
  add_common(loo);

  auto* plot = app.add_subcommand("plot", "render prediction overlays");
  plot->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  plot->add_option("--manifest", manifest, "dataset manifest")->required();
  plot->add_option("--train-config", train_config, "resolved config of the training run");
  plot->add_option("--limit", limit, "max windows to render (0 = all)");
  add_common(plot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (prepare->parsed())
      return cmd_prepare(manifest, synthetic_agents, synthetic_frames, synthetic_noise, common);
    if (train->parsed()) return cmd_train(manifest, variant, common);
    if (predict->parsed())
      return cmd_predict(checkpoint, manifest, train_config, split, common);
    if (evaluate->parsed()) {
      if (!oracle && checkpoint.empty())
        throw ConfigError("evaluate: need --checkpoint (or --oracle)");
      return cmd_evaluate(checkpoint, manifest, train_config, k, oracle, common);
    }
    if (ablate->parsed()) return cmd_ablate(manifest, variants_csv, parallel, common);
    if (loo->parsed()) return cmd_loo(manifest_list, target, rates_csv, common);
    if (plot->parsed()) return cmd_plot(checkpoint, manifest, train_config, limit, common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
