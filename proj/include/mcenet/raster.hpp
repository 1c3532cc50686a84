#pragma once

#include "mcenet/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mcenet {

enum class RasterKind { kHeatMap, kAerial, kSegmented };

inline const char* to_string(RasterKind k) {
  switch (k) {
    case RasterKind::kHeatMap: return "heat_map";
    case RasterKind::kAerial: return "aerial";
    case RasterKind::kSegmented: return "segmented";
  }
  return "unknown";
}

inline RasterKind parse_raster_kind(const std::string& s) {
  if (s == "heat_map" || s == "hm") return RasterKind::kHeatMap;
  if (s == "aerial" || s == "ap") return RasterKind::kAerial;
  if (s == "segmented" || s == "sm") return RasterKind::kSegmented;
  throw ConfigError("unknown raster kind: '" + s + "'");
}

/// Georeferenced scene raster with values in [0,1]. Data is stored planar:
/// index = (c * height + y) * width + x. Pixel (x=col, y=row) covers world
/// coordinates [x,x+1) * meters_per_pixel in each axis.
struct SceneRaster {
  RasterKind kind = RasterKind::kAerial;
  int height = 0;
  int width = 0;
  int channels = 0;
  double meters_per_pixel = 1.0;
  std::vector<double> data;

  SceneRaster() = default;
  SceneRaster(RasterKind kind_, int h, int w, int c, double mpp)
      : kind(kind_), height(h), width(w), channels(c), meters_per_pixel(mpp),
        data(static_cast<std::size_t>(h) * w * c, 0.0) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// ---------------------------------------------------------------------------
// Netpbm (PGM / PPM) input and output, ASCII and binary, 8-bit.
// ---------------------------------------------------------------------------

namespace detail {

inline int pnm_next_token(std::istream& in) {
  // skips whitespace and '#' comments, returns next integer
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value;
  if (!(in >> value)) throw ParseError("netpbm: truncated header");
  return value;
}

}  // namespace detail

struct ImageU8 {
  int height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;  // interleaved rows: (y * width + x) * channels + c
};

inline ImageU8 load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open raster file: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw ParseError(path + ": unsupported netpbm magic '" + magic + "'");
  const bool color = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";

  ImageU8 img;
  img.width = detail::pnm_next_token(in);
  img.height = detail::pnm_next_token(in);
  const int maxval = detail::pnm_next_token(in);
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
    throw ParseError(path + ": bad netpbm dimensions or maxval");
  img.channels = color ? 3 : 1;

  const std::size_t count =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(count);
  if (binary) {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
      throw ParseError(path + ": truncated pixel data");
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      int v = detail::pnm_next_token(in);
      img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }
  if (maxval != 255)
    for (auto& p : img.pixels)
      p = static_cast<std::uint8_t>(p * 255 / maxval);
  return img;
}

inline void save_pnm(const ImageU8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

/// Decodes a raster file, rescales to [0,1]; segmented rasters are thresholded
/// at 0.5 to binary masks.
inline SceneRaster load_raster(const std::string& path, RasterKind kind,
                               double meters_per_pixel) {
  const ImageU8 img = load_pnm(path);
  SceneRaster raster(kind, img.height, img.width, img.channels, meters_per_pixel);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double v = img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] /
                   255.0;
        if (kind == RasterKind::kSegmented) v = v >= 0.5 ? 1.0 : 0.0;
        raster.at(c, y, x) = v;
      }
  return raster;
}

inline ImageU8 to_image(const SceneRaster& raster) {
  ImageU8 img;
  img.height = raster.height;
  img.width = raster.width;
  img.channels = raster.channels == 1 ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const int src = std::min(c, raster.channels - 1);
        const double v = std::clamp(raster.at(src, y, x), 0.0, 1.0);
        img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

/// Bilinear resize preserving channel count.
inline SceneRaster resize_bilinear(const SceneRaster& src, int out_h, int out_w) {
  SceneRaster out(src.kind, out_h, out_w, src.channels, src.meters_per_pixel);
  out.meters_per_pixel = src.meters_per_pixel * static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1 - wx) * src.at(c, y0, x0) + wx * src.at(c, y0, x1);
        const double bot = (1 - wx) * src.at(c, y1, x0) + wx * src.at(c, y1, x1);
        out.at(c, y, x) = (1 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raster cache: portable binary array with a small header.
// ---------------------------------------------------------------------------

inline void save_raster_cache(const SceneRaster& raster, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  const char magic[4] = {'M', 'C', 'R', 'A'};
  const std::uint32_t version = 1;
  const std::uint32_t kind = static_cast<std::uint32_t>(raster.kind);
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(raster.height),
                                 static_cast<std::uint32_t>(raster.width),
                                 static_cast<std::uint32_t>(raster.channels)};
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&kind), 4);
  out.write(reinterpret_cast<const char*>(dims), 12);
  out.write(reinterpret_cast<const char*>(&raster.meters_per_pixel), 8);
  out.write(reinterpret_cast<const char*>(raster.data.data()),
            static_cast<std::streamsize>(raster.data.size() * sizeof(double)));
}

inline SceneRaster load_raster_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open raster cache: " + path);
  char magic[4];
  std::uint32_t version = 0, kind = 0, dims[3] = {0, 0, 0};
  double mpp = 0.0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&kind), 4);
  in.read(reinterpret_cast<char*>(dims), 12);
  in.read(reinterpret_cast<char*>(&mpp), 8);
  if (!in || std::string(magic, 4) != "MCRA" || version != 1)
    throw ParseError(path + ": not a raster cache file");
  SceneRaster raster(static_cast<RasterKind>(kind), static_cast<int>(dims[0]),
                     static_cast<int>(dims[1]), static_cast<int>(dims[2]), mpp);
  in.read(reinterpret_cast<char*>(raster.data.data()),
          static_cast<std::streamsize>(raster.data.size() * sizeof(double)));
  if (!in) throw ParseError(path + ": truncated raster cache");
  return raster;
}

}  // namespace mcenet
