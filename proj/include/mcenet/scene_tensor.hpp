#pragma once

#include "mcenet/raster.hpp"
#include "mcenet/types.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace mcenet {

enum class SceneMode { kStatic, kPerStepCrop };

inline SceneMode parse_scene_mode(const std::string& s) {
  if (s == "static") return SceneMode::kStatic;
  if (s == "per_step_crop") return SceneMode::kPerStepCrop;
  throw ConfigError("unknown scene mode: '" + s + "'");
}

/// Scene context fed to the model. Static mode holds a single step shared
/// across the window; crop mode holds one crop per window step.
struct SceneTensor {
  int steps = 1;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // ((s * channels + c) * height + y) * width + x

  SceneTensor() = default;
  SceneTensor(int s, int h, int w, int c)
      : steps(s), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(s) * h * w * c, 0.0) {}

  bool is_static() const { return steps == 1; }
  double& at(int s, int c, int y, int x) {
    return data[((static_cast<std::size_t>(s) * channels + c) * height + y) * width + x];
  }
  double at(int s, int c, int y, int x) const {
    return data[((static_cast<std::size_t>(s) * channels + c) * height + y) * width + x];
  }
  /// Flat view of one step, laid out (c * height + y) * width + x.
  const double* step_data(int s) const {
    return data.data() + static_cast<std::size_t>(s) * channels * height * width;
  }
};

namespace detail {

/// Square crop of side crop_px centered at pixel (cx, cy); out-of-raster area
/// is zero (inaccessible / unvisited).
inline void crop_into(const SceneRaster& raster, int cx, int cy, int crop_px, SceneTensor& out,
                      int step) {
  const int origin_x = cx - crop_px / 2;
  const int origin_y = cy - crop_px / 2;
  for (int c = 0; c < raster.channels; ++c)
    for (int y = 0; y < crop_px; ++y)
      for (int x = 0; x < crop_px; ++x) {
        const int sx = origin_x + x;
        const int sy = origin_y + y;
        const bool inside = sx >= 0 && sx < raster.width && sy >= 0 && sy < raster.height;
        out.at(step, c, y, x) = inside ? raster.at(c, sy, sx) : 0.0;
      }
}

}  // namespace detail

/// Builds the scene input for one sample. Static mode downsamples the whole
/// raster to out_size and shares it across steps; per-step-crop mode cuts a
/// square of side crop_size_m centered on the agent position at each window
/// step (observed then future), zero-padded at borders. Crops are emitted at
/// native resolution when round(crop_size_m / mpp) == out_size, else resized.
inline SceneTensor scene_tensor(const SceneRaster& raster, const TrainingSample& sample,
                                SceneMode mode, double crop_size_m, int out_size) {
  if (out_size <= 0) throw std::invalid_argument("scene_tensor: out_size must be > 0");

  if (mode == SceneMode::kStatic) {
    const SceneRaster resized = (raster.height == out_size && raster.width == out_size)
                                    ? raster
                                    : resize_bilinear(raster, out_size, out_size);
    SceneTensor out(1, out_size, out_size, raster.channels);
    for (int c = 0; c < raster.channels; ++c)
      for (int y = 0; y < out_size; ++y)
        for (int x = 0; x < out_size; ++x) out.at(0, c, y, x) = resized.at(c, y, x);
    return out;
  }

  const int total = sample.obs_len() + sample.fut_len();
  const int crop_px =
      std::max(1, static_cast<int>(std::lround(crop_size_m / raster.meters_per_pixel)));
  SceneTensor crops(total, crop_px, crop_px, raster.channels);
  for (int s = 0; s < total; ++s) {
    const Eigen::Vector2d pos = s < sample.obs_len()
                                    ? sample.obs_positions.row(s).transpose()
                                    : sample.fut_positions.row(s - sample.obs_len()).transpose();
    const int cx = static_cast<int>(std::lround(pos.x() / raster.meters_per_pixel));
    const int cy = static_cast<int>(std::lround(pos.y() / raster.meters_per_pixel));
    detail::crop_into(raster, cx, cy, crop_px, crops, s);
  }
  if (crop_px == out_size) return crops;

  // resize each step to the model input size
  SceneTensor out(total, out_size, out_size, raster.channels);
  for (int s = 0; s < total; ++s) {
    SceneRaster tmp(raster.kind, crop_px, crop_px, raster.channels, raster.meters_per_pixel);
    for (int c = 0; c < raster.channels; ++c)
      for (int y = 0; y < crop_px; ++y)
        for (int x = 0; x < crop_px; ++x) tmp.at(c, y, x) = crops.at(s, c, y, x);
    const SceneRaster resized = resize_bilinear(tmp, out_size, out_size);
    for (int c = 0; c < raster.channels; ++c)
      for (int y = 0; y < out_size; ++y)
        for (int x = 0; x < out_size; ++x) out.at(s, c, y, x) = resized.at(c, y, x);
  }
  return out;
}

}  // namespace mcenet
