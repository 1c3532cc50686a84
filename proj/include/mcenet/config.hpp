#pragma once

#include "mcenet/model.hpp"
#include "mcenet/occupancy.hpp"
#include "mcenet/scene_tensor.hpp"
#include "mcenet/types.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace mcenet {

/// Flat key-value text with [sections]; '#' starts a comment. Keys inside a
/// section are addressed as "section.key".
class KeyValueConfig {
 public:
  static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "") {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[' && trimmed.back() == ']') {
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected key = value, got '" + trimmed + "'");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + ": expected number, got '" + it->second + "'");
    }
  }

  long get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + ": expected integer, got '" + it->second + "'");
    }
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& items() const { return values_; }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Declarative description of one dataset: trajectory file, frame rate,
/// georeferencing, raster files. Relative paths resolve against the manifest
/// location.
struct DatasetManifest {
  std::string name;
  std::string trajectory_file;
  double frame_rate = 2.0;
  double target_fps = 0.0;  // 0 = keep as is
  double meters_per_pixel = 1.0;
  int raster_height = 0;  // 0 = derive from data bounds
  int raster_width = 0;
  std::map<std::string, std::string> rasters;  // kind -> path

  static DatasetManifest load(const std::string& path) {
    const KeyValueConfig cfg = KeyValueConfig::parse_file(path);
    const auto dir = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (dir / fp).string();
    };

    DatasetManifest m;
    m.name = cfg.get("name", std::filesystem::path(path).stem().string());
    m.trajectory_file = resolve(cfg.require("trajectories"));
    m.frame_rate = cfg.get_double("frame_rate", 2.0);
    m.target_fps = cfg.get_double("target_fps", 0.0);
    m.meters_per_pixel = cfg.get_double("meters_per_pixel", 1.0);
    m.raster_height = static_cast<int>(cfg.get_int("raster_height", 0));
    m.raster_width = static_cast<int>(cfg.get_int("raster_width", 0));
    for (const char* kind : {"heat_map", "aerial", "segmented"}) {
      const std::string key = std::string("rasters.") + kind;
      if (cfg.has(key)) m.rasters[kind] = resolve(cfg.get(key));
    }
    if (m.frame_rate <= 0) throw ConfigError(path + ": frame_rate must be > 0");
    if (m.meters_per_pixel <= 0) throw ConfigError(path + ": meters_per_pixel must be > 0");
    return m;
  }
};

/// Everything one experiment run needs; file values can be overridden from the
/// command line (last wins).
struct ExperimentConfig {
  std::vector<std::string> manifests;
  std::string variant = "baseline";
  ModelConfig model;
  GridSpec grid;
  SceneMode scene_mode = SceneMode::kStatic;
  double crop_size_m = 16.0;
  double test_fraction = 0.3;
  int window_stride = 1;
  double dbscan_eps = 1.5;
  int dbscan_min_pts = 2;
  double coexist_rate = 0.9;
  double heat_kernel_std = 3.0;
  int eval_k = 10;
  int finetune_epochs = 0;  // 0 = half of epochs
  std::string out_dir;
  std::string target;                  // leave-one-out target dataset
  std::vector<double> visibility_rates{0.0, 0.5, 1.0};

  void apply_override(const std::string& key, const std::string& value) {
    KeyValueConfig kv;
    kv.set(key, value);
    apply(kv);
  }

  void apply(const KeyValueConfig& cfg) {
    for (const auto& [key, value] : cfg.items()) apply_one(key, value);
  }

  /// Resolved snapshot of every effective value, for reproducibility.
  KeyValueConfig resolved() const {
    KeyValueConfig kv;
    std::string joined;
    for (const auto& m : manifests) joined += (joined.empty() ? "" : ",") + m;
    kv.set("manifests", joined);
    kv.set("variant", variant);
    kv.set("out_dir", out_dir);
    kv.set("target", target);
    std::string rates;
    for (double r : visibility_rates)
      rates += (rates.empty() ? "" : ",") + format_num(r);
    kv.set("visibility_rates", rates);
    kv.set("data.test_fraction", format_num(test_fraction));
    kv.set("data.window_stride", std::to_string(window_stride));
    kv.set("data.dbscan_eps", format_num(dbscan_eps));
    kv.set("data.dbscan_min_pts", std::to_string(dbscan_min_pts));
    kv.set("data.coexist_rate", format_num(coexist_rate));
    kv.set("data.heat_kernel_std", format_num(heat_kernel_std));
    kv.set("data.scene_mode", scene_mode == SceneMode::kStatic ? "static" : "per_step_crop");
    kv.set("data.crop_size_m", format_num(crop_size_m));
    kv.set("grid.orientation_bins", std::to_string(grid.num_orientation_bins));
    kv.set("grid.distance_bins", std::to_string(grid.num_distance_bins));
    kv.set("grid.max_radius", format_num(grid.max_radius));
    kv.set("grid.reference_frame",
           grid.reference_frame == GridSpec::Frame::kHeadingRelative ? "heading" : "global");
    kv.set("model.T", std::to_string(model.T));
    kv.set("model.T_prime", std::to_string(model.T_prime));
    kv.set("model.conv1d_kernel", std::to_string(model.conv1d_kernel));
    kv.set("model.conv1d_channels", std::to_string(model.conv1d_channels));
    kv.set("model.cnn_stride", std::to_string(model.cnn_stride));
    kv.set("model.scene_input_size", std::to_string(model.scene_input_size));
    kv.set("model.lstm_hidden", std::to_string(model.lstm_hidden));
    kv.set("model.latent_dim", std::to_string(model.latent_dim));
    kv.set("model.fusion_dim", std::to_string(model.fusion_dim));
    kv.set("model.kl_weight", format_num(model.kl_weight));
    kv.set("model.kl_warmup_frac", format_num(model.kl_warmup_frac));
    kv.set("model.learning_rate", format_num(model.learning_rate));
    kv.set("model.batch_size", std::to_string(model.batch_size));
    kv.set("model.epochs", std::to_string(model.epochs));
    kv.set("model.num_samples", std::to_string(model.num_samples));
    kv.set("model.seed", std::to_string(model.seed));
    kv.set("eval.k", std::to_string(eval_k));
    kv.set("eval.finetune_epochs", std::to_string(finetune_epochs));
    return kv;
  }

  void write_snapshot(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    const KeyValueConfig kv = resolved();
    for (const auto& [key, value] : kv.items()) out << key << " = " << value << "\n";
  }

 private:
  static std::string format_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
  }

  void apply_one(const std::string& key, const std::string& value) {
    auto as_int = [&] {
      try {
        return std::stol(value);
      } catch (...) {
        throw ConfigError("config key " + key + ": expected integer, got '" + value + "'");
      }
    };
    auto as_double = [&] {
      try {
        return std::stod(value);
      } catch (...) {
        throw ConfigError("config key " + key + ": expected number, got '" + value + "'");
      }
    };

    if (key == "manifests") {
      manifests.clear();
      std::istringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) manifests.push_back(KeyValueConfig::trim(item));
    } else if (key == "variant") {
      variant = value;
      parse_variant(variant);  // validate
    } else if (key == "out_dir") {
      out_dir = value;
    } else if (key == "target") {
      target = value;
    } else if (key == "visibility_rates") {
      visibility_rates.clear();
      std::istringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        visibility_rates.push_back(std::stod(KeyValueConfig::trim(item)));
    } else if (key == "data.test_fraction") {
      test_fraction = as_double();
    } else if (key == "data.window_stride") {
      window_stride = static_cast<int>(as_int());
    } else if (key == "data.dbscan_eps") {
      dbscan_eps = as_double();
    } else if (key == "data.dbscan_min_pts") {
      dbscan_min_pts = static_cast<int>(as_int());
    } else if (key == "data.coexist_rate") {
      coexist_rate = as_double();
    } else if (key == "data.heat_kernel_std") {
      heat_kernel_std = as_double();
    } else if (key == "data.scene_mode") {
      scene_mode = parse_scene_mode(value);
    } else if (key == "data.crop_size_m") {
      crop_size_m = as_double();
    } else if (key == "grid.orientation_bins") {
      grid.num_orientation_bins = static_cast<int>(as_int());
    } else if (key == "grid.distance_bins") {
      grid.num_distance_bins = static_cast<int>(as_int());
    } else if (key == "grid.max_radius") {
      grid.max_radius = as_double();
    } else if (key == "grid.reference_frame") {
      if (value == "heading")
        grid.reference_frame = GridSpec::Frame::kHeadingRelative;
      else if (value == "global")
        grid.reference_frame = GridSpec::Frame::kGlobal;
      else
        throw ConfigError("grid.reference_frame: expected 'heading' or 'global'");
    } else if (key == "model.T") {
      model.T = static_cast<int>(as_int());
    } else if (key == "model.T_prime") {
      model.T_prime = static_cast<int>(as_int());
    } else if (key == "model.conv1d_kernel") {
      model.conv1d_kernel = static_cast<int>(as_int());
    } else if (key == "model.conv1d_channels") {
      model.conv1d_channels = static_cast<int>(as_int());
    } else if (key == "model.cnn_stride") {
      model.cnn_stride = static_cast<int>(as_int());
    } else if (key == "model.scene_input_size") {
      model.scene_input_size = static_cast<int>(as_int());
    } else if (key == "model.lstm_hidden") {
      model.lstm_hidden = static_cast<int>(as_int());
    } else if (key == "model.latent_dim") {
      model.latent_dim = static_cast<int>(as_int());
    } else if (key == "model.fusion_dim") {
      model.fusion_dim = static_cast<int>(as_int());
    } else if (key == "model.kl_weight") {
      model.kl_weight = as_double();
    } else if (key == "model.kl_warmup_frac") {
      model.kl_warmup_frac = as_double();
    } else if (key == "model.learning_rate") {
      model.learning_rate = as_double();
    } else if (key == "model.batch_size") {
      model.batch_size = static_cast<int>(as_int());
    } else if (key == "model.epochs") {
      model.epochs = static_cast<int>(as_int());
    } else if (key == "model.num_samples") {
      model.num_samples = static_cast<int>(as_int());
    } else if (key == "model.seed") {
      model.seed = static_cast<std::uint64_t>(as_int());
    } else if (key == "eval.k") {
      eval_k = static_cast<int>(as_int());
    } else if (key == "eval.finetune_epochs") {
      finetune_epochs = static_cast<int>(as_int());
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
};

}  // namespace mcenet
