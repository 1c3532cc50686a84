#pragma once

#include "mcenet/raster.hpp"
#include "mcenet/types.hpp"

#include <cmath>
#include <iostream>
#include <vector>

namespace mcenet {

/// Separable Gaussian blur. The sampled kernel is normalized to sum 1, so
/// total mass is preserved exactly wherever the support stays inside the
/// raster.
inline void gaussian_blur_inplace(std::vector<double>& grid, int height, int width,
                                  double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= sum;

  std::vector<double> tmp(grid.size(), 0.0);
  // horizontal pass
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = x + i;
        if (xx < 0 || xx >= width) continue;
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               grid[static_cast<std::size_t>(y) * width + xx];
      }
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  // vertical pass
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = y + i;
        if (yy < 0 || yy >= height) continue;
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp[static_cast<std::size_t>(yy) * width + x];
      }
      grid[static_cast<std::size_t>(y) * width + x] = acc;
    }
}

/// Visit-count heat map for one agent type: integer rasterization of training
/// track positions, Gaussian blur, then max-normalization to peak 1. A type
/// with no training tracks yields an all-zero channel (with a warning).
inline SceneRaster build_heat_map(const std::vector<AgentTrack>& train_tracks,
                                  AgentType agent_type, int height, int width,
                                  double meters_per_pixel, double kernel_std_pixels = 3.0) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("build_heat_map: raster dimensions must be > 0");
  SceneRaster raster(RasterKind::kHeatMap, height, width, 1, meters_per_pixel);

  bool any = false;
  for (const auto& track : train_tracks) {
    if (track.agent_type != agent_type) continue;
    for (const auto& p : track.points) {
      const int x = static_cast<int>(std::floor(p.x / meters_per_pixel));
      const int y = static_cast<int>(std::floor(p.y / meters_per_pixel));
      if (x < 0 || x >= width || y < 0 || y >= height) continue;
      raster.at(0, y, x) += 1.0;
      any = true;
    }
  }
  if (!any) {
    std::cerr << "warning: no training visits for type " << to_string(agent_type)
              << "; heat map channel is zero\n";
    return raster;
  }

  gaussian_blur_inplace(raster.data, height, width, kernel_std_pixels);
  const double peak = *std::max_element(raster.data.begin(), raster.data.end());
  if (peak > 0.0)
    for (auto& v : raster.data) v /= peak;
  return raster;
}

/// Three-channel heat map, one channel per agent type in enum order.
inline SceneRaster build_heat_maps(const std::vector<AgentTrack>& train_tracks, int height,
                                   int width, double meters_per_pixel,
                                   double kernel_std_pixels = 3.0) {
  SceneRaster out(RasterKind::kHeatMap, height, width, 3, meters_per_pixel);
  for (int c = 0; c < 3; ++c) {
    const SceneRaster channel = build_heat_map(train_tracks, static_cast<AgentType>(c), height,
                                               width, meters_per_pixel, kernel_std_pixels);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = channel.at(0, y, x);
  }
  return out;
}

}  // namespace mcenet
