#pragma once

#include "mcenet/model.hpp"
#include "mcenet/raster.hpp"
#include "mcenet/types.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace mcenet {

namespace detail {

struct Rgb {
  std::uint8_t r, g, b;
};

inline void put_pixel(ImageU8& img, int x, int y, Rgb color) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
  auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
  p[0] = color.r;
  p[1] = color.g;
  p[2] = color.b;
}

inline void draw_line(ImageU8& img, int x0, int y0, int x1, int y1, Rgb color) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put_pixel(img, x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

inline void draw_polyline(ImageU8& img, const PointSeq& points, double mpp, Rgb color) {
  for (Eigen::Index i = 1; i < points.rows(); ++i) {
    const int x0 = static_cast<int>(std::lround(points(i - 1, 0) / mpp));
    const int y0 = static_cast<int>(std::lround(points(i - 1, 1) / mpp));
    const int x1 = static_cast<int>(std::lround(points(i, 0) / mpp));
    const int y1 = static_cast<int>(std::lround(points(i, 1) / mpp));
    draw_line(img, x0, y0, x1, y1, color);
  }
}

}  // namespace detail

/// Renders one overlay image per window: past trajectory in black, ground
/// truth in purple, the N predicted trajectories in per-sample colors, over
/// the raster background (or a blank background with a warning). Returns the
/// written file paths; names follow `<dataset>_<start_frame>_<agent>.ppm`.
inline std::vector<std::string> emit_plots(const std::string& dataset,
                                           const std::vector<ModelSample>& samples,
                                           const std::vector<PredictionSet>& predictions,
                                           const SceneRaster* raster, double meters_per_pixel,
                                           const std::string& out_dir) {
  if (samples.size() != predictions.size())
    throw std::invalid_argument("emit_plots: samples and predictions differ in size");
  std::filesystem::create_directories(out_dir);

  const double mpp = raster ? raster->meters_per_pixel : meters_per_pixel;
  if (!raster)
    std::cerr << "warning: no raster available; plotting on blank background\n";

  // prediction fan palette
  const detail::Rgb palette[] = {{66, 135, 245},  {245, 130, 48}, {60, 180, 75},
                                 {230, 25, 75},   {145, 30, 180}, {70, 240, 240},
                                 {240, 200, 50},  {250, 120, 190}, {0, 128, 128},
                                 {160, 100, 40}};

  std::vector<std::string> written;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i].sample;
    const auto& pred = predictions[i];

    ImageU8 img;
    if (raster) {
      img = to_image(*raster);
      if (img.channels == 1) {
        // promote to RGB
        ImageU8 rgb;
        rgb.height = img.height;
        rgb.width = img.width;
        rgb.channels = 3;
        rgb.pixels.resize(static_cast<std::size_t>(img.height) * img.width * 3);
        for (std::size_t p = 0; p < img.pixels.size(); ++p) {
          rgb.pixels[3 * p] = rgb.pixels[3 * p + 1] = rgb.pixels[3 * p + 2] = img.pixels[p];
        }
        img = std::move(rgb);
      }
    } else {
      double max_x = 1.0, max_y = 1.0;
      for (const PointSeq* seq : {&s.obs_positions, &s.fut_positions})
        for (Eigen::Index r = 0; r < seq->rows(); ++r) {
          max_x = std::max(max_x, (*seq)(r, 0));
          max_y = std::max(max_y, (*seq)(r, 1));
        }
      for (const auto& traj : pred.trajectories)
        for (Eigen::Index r = 0; r < traj.rows(); ++r) {
          max_x = std::max(max_x, traj(r, 0));
          max_y = std::max(max_y, traj(r, 1));
        }
      img.width = std::min(2048, static_cast<int>(std::ceil(max_x / mpp)) + 8);
      img.height = std::min(2048, static_cast<int>(std::ceil(max_y / mpp)) + 8);
      img.channels = 3;
      img.pixels.assign(static_cast<std::size_t>(img.height) * img.width * 3, 255);
    }

    for (int n = 0; n < pred.num_trajectories(); ++n)
      detail::draw_polyline(img, pred.trajectories[static_cast<std::size_t>(n)], mpp,
                            palette[static_cast<std::size_t>(n) % std::size(palette)]);
    detail::draw_polyline(img, s.fut_positions, mpp, {128, 0, 128});
    detail::draw_polyline(img, s.obs_positions, mpp, {0, 0, 0});

    const std::string path = out_dir + "/" + dataset + "_" + std::to_string(s.start_frame) +
                             "_" + std::to_string(s.agent_id) + ".ppm";
    save_pnm(img, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace mcenet
