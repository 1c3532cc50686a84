#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcenet {

/// K x 2 sequence of planar points or offsets, meters. Rows are time steps.
using PointSeq = Eigen::MatrixX2d;

using FrameId = std::int64_t;
using AgentId = std::int64_t;

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class AgentType { kPedestrian = 0, kCyclist = 1, kVehicle = 2 };

inline const char* to_string(AgentType type) {
  switch (type) {
    case AgentType::kPedestrian: return "pedestrian";
    case AgentType::kCyclist: return "cyclist";
    case AgentType::kVehicle: return "vehicle";
  }
  return "unknown";
}

/// Case-insensitive token -> type. Anything outside the enum is a ParseError.
inline AgentType parse_agent_type(std::string token) {
  std::transform(token.begin(), token.end(), token.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (token == "pedestrian") return AgentType::kPedestrian;
  if (token == "cyclist") return AgentType::kCyclist;
  if (token == "vehicle") return AgentType::kVehicle;
  throw ParseError("unknown agent type token: '" + token + "'");
}

/// Fixed convention: pedestrian (1,0,0), cyclist (0,1,0), vehicle (0,0,1).
inline Eigen::Vector3d encode_agent_type(AgentType type) {
  Eigen::Vector3d onehot = Eigen::Vector3d::Zero();
  onehot(static_cast<int>(type)) = 1.0;
  return onehot;
}

struct TrackPoint {
  FrameId frame_id = 0;
  double x = 0.0;  // meters, world frame
  double y = 0.0;
};

/// One agent's typed, time-stamped world-coordinate path.
/// frame_ids are strictly increasing; after resampling the spacing is uniform.
struct AgentTrack {
  AgentId agent_id = 0;
  AgentType agent_type = AgentType::kPedestrian;
  std::vector<TrackPoint> points;

  std::size_t size() const { return points.size(); }
  Eigen::Vector2d position(std::size_t i) const {
    return {points[i].x, points[i].y};
  }
};

/// A trajectory dataset for one scene.
struct SceneDataset {
  std::string name;
  double frame_rate = 0.0;  // Hz
  /// Uniform frame-id spacing between consecutive samples of a track.
  FrameId frame_step = 1;
  double meters_per_pixel = 1.0;
  std::vector<AgentTrack> tracks;
  /// Raster kind ("heat_map", "aerial", "segmented") -> file path, per manifest.
  std::map<std::string, std::string> raster_paths;

  bool empty() const { return tracks.empty(); }

  const AgentTrack* find_track(AgentId id) const {
    for (const auto& t : tracks)
      if (t.agent_id == id) return &t;
    return nullptr;
  }

  FrameId min_frame() const {
    FrameId m = std::numeric_limits<FrameId>::max();
    for (const auto& t : tracks)
      if (!t.points.empty()) m = std::min(m, t.points.front().frame_id);
    return m;
  }

  FrameId max_frame() const {
    FrameId m = std::numeric_limits<FrameId>::min();
    for (const auto& t : tracks)
      if (!t.points.empty()) m = std::max(m, t.points.back().frame_id);
    return m;
  }
};

/// One sliding window over a track: T observed steps and T' future steps.
struct TrainingSample {
  AgentId agent_id = 0;
  AgentType agent_type = AgentType::kPedestrian;
  Eigen::Vector3d type_onehot = Eigen::Vector3d::Zero();
  PointSeq obs_positions;  // T x 2
  PointSeq fut_positions;  // T' x 2
  PointSeq obs_offsets;    // (T-1) x 2, consecutive differences
  PointSeq fut_offsets;    // T' x 2, first one measured from the last observed position
  /// Co-present agent ids at each of the T + T' window frames (self excluded).
  std::vector<std::vector<AgentId>> neighbor_ids_per_step;
  FrameId start_frame = 0;  // frame id of the first observed step
  FrameId frame_step = 1;

  int obs_len() const { return static_cast<int>(obs_positions.rows()); }
  int fut_len() const { return static_cast<int>(fut_positions.rows()); }
  Eigen::Vector2d last_obs_position() const {
    return obs_positions.row(obs_positions.rows() - 1).transpose();
  }
  FrameId frame_at_step(int step) const { return start_frame + step * frame_step; }
};

/// Chronological split. Test is the earliest part of the timeline, train the rest;
/// tracks spanning the boundary are truncated so no window can straddle it.
struct SplitResult {
  SceneDataset train;
  SceneDataset test;
  FrameId boundary_frame = 0;
};

/// N sampled future trajectories for one window. Scores and the most-likely
/// index are filled by the ranking step.
struct PredictionSet {
  std::vector<PointSeq> trajectories;  // N entries, each T' x 2 world positions
  std::vector<double> scores;          // empty until ranked
  int most_likely_index = -1;

  int num_trajectories() const { return static_cast<int>(trajectories.size()); }
};

}  // namespace mcenet
