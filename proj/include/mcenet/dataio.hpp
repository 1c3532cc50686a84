#pragma once

#include "mcenet/types.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace mcenet {

// ---------------------------------------------------------------------------
// Offsets <-> positions
// ---------------------------------------------------------------------------

/// Consecutive differences of a K x 2 position sequence (K >= 2).
inline PointSeq positions_to_offsets(const PointSeq& positions) {
  const auto k = positions.rows();
  if (k < 2) throw std::invalid_argument("positions_to_offsets: need at least 2 positions");
  return positions.bottomRows(k - 1) - positions.topRows(k - 1);
}

/// Running sum of offsets from an origin. Row k of the result is the position
/// after applying offsets 0..k; the origin itself is not included.
inline PointSeq offsets_to_positions(const Eigen::Vector2d& origin, const PointSeq& offsets) {
  PointSeq out(offsets.rows(), 2);
  Eigen::Vector2d acc = origin;
  for (Eigen::Index k = 0; k < offsets.rows(); ++k) {
    acc += offsets.row(k).transpose();
    out.row(k) = acc.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------------
// One record per line: `frame_id agent_id x y type`, whitespace or comma
// delimited. Lines starting with '#' are ignored.

inline SceneDataset load_dataset(const std::string& path, std::string name = "",
                                 double frame_rate = 1.0) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trajectory file: " + path);

  struct Row {
    FrameId frame;
    double x, y;
    AgentType type;
  };
  std::map<AgentId, std::vector<Row>> rows_by_agent;
  std::map<AgentId, std::map<FrameId, int>> seen;  // duplicate detection

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments and blanks
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    FrameId frame_id;
    AgentId agent_id;
    double x, y;
    std::string type_token;
    if (!(ss >> frame_id >> agent_id >> x >> y >> type_token)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed record: '" + line + "'");
    }
    AgentType type;
    try {
      type = parse_agent_type(type_token);
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (seen[agent_id].count(frame_id)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": duplicate record for agent " +
                       std::to_string(agent_id) + " at frame " + std::to_string(frame_id));
    }
    seen[agent_id][frame_id] = 1;
    rows_by_agent[agent_id].push_back({frame_id, x, y, type});
  }

  SceneDataset ds;
  ds.name = name.empty() ? path : std::move(name);
  ds.frame_rate = frame_rate;
  for (auto& [agent_id, rows] : rows_by_agent) {
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.frame < b.frame; });
    AgentTrack track;
    track.agent_id = agent_id;
    track.agent_type = rows.front().type;
    for (const Row& r : rows) track.points.push_back({r.frame, r.x, r.y});
    ds.tracks.push_back(std::move(track));
  }

  // Natural frame spacing: the smallest positive consecutive difference.
  FrameId step = 0;
  for (const auto& t : ds.tracks)
    for (std::size_t i = 1; i < t.points.size(); ++i) {
      const FrameId d = t.points[i].frame_id - t.points[i - 1].frame_id;
      if (d > 0 && (step == 0 || d < step)) step = d;
    }
  ds.frame_step = step > 0 ? step : 1;
  return ds;
}

/// Writes the record set back in the canonical `frame agent x y type` shape.
inline void save_dataset(const SceneDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << "# frame_id agent_id x y type\n";
  char buf[128];
  for (const auto& track : ds.tracks) {
    for (const auto& p : track.points) {
      std::snprintf(buf, sizeof(buf), "%lld %lld %.9g %.9g %s\n",
                    static_cast<long long>(p.frame_id), static_cast<long long>(track.agent_id),
                    p.x, p.y, to_string(track.agent_type));
      out << buf;
    }
  }
}

// ---------------------------------------------------------------------------
// Resampling and splitting
// ---------------------------------------------------------------------------

/// Integer-stride subsampling to a lower rate, starting at each track's first
/// frame. No interpolation: the source rate must be an integer multiple.
inline SceneDataset resample(const SceneDataset& ds, double target_fps) {
  if (target_fps <= 0.0) throw std::invalid_argument("resample: target_fps must be > 0");
  const double ratio = ds.frame_rate / target_fps;
  const auto stride = static_cast<long long>(std::llround(ratio));
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9) {
    throw std::invalid_argument("resample: frame_rate " + std::to_string(ds.frame_rate) +
                                " is not an integer multiple of target " +
                                std::to_string(target_fps));
  }
  SceneDataset out = ds;
  out.frame_rate = target_fps;
  out.frame_step = ds.frame_step * stride;
  for (auto& track : out.tracks) {
    std::vector<TrackPoint> kept;
    for (std::size_t i = 0; i < track.points.size(); i += static_cast<std::size_t>(stride))
      kept.push_back(track.points[i]);
    track.points = std::move(kept);
  }
  return out;
}

/// Splits on the test_fraction quantile of the global frame range: the
/// earliest part of the timeline is test, the remainder train.
inline SplitResult chronological_split(const SceneDataset& ds, double test_fraction) {
  if (ds.empty()) throw std::invalid_argument("chronological_split: empty dataset");
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("chronological_split: fraction must be in (0,1)");

  const FrameId lo = ds.min_frame();
  const FrameId hi = ds.max_frame();
  const FrameId boundary =
      lo + static_cast<FrameId>(std::llround(test_fraction * static_cast<double>(hi - lo + 1)));

  SplitResult split;
  split.boundary_frame = boundary;
  split.test = ds;
  split.test.tracks.clear();
  split.train = split.test;

  for (const auto& track : ds.tracks) {
    AgentTrack before = track, after = track;
    before.points.clear();
    after.points.clear();
    for (const auto& p : track.points)
      (p.frame_id < boundary ? before : after).points.push_back(p);
    if (!before.points.empty()) split.test.tracks.push_back(std::move(before));
    if (!after.points.empty()) split.train.tracks.push_back(std::move(after));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Sliding windows
// ---------------------------------------------------------------------------

/// Frame -> co-present agents, for neighbor lookups.
class FrameTable {
 public:
  struct Entry {
    AgentId agent_id;
    AgentType type;
    Eigen::Vector2d position;
  };

  explicit FrameTable(const SceneDataset& ds) {
    for (const auto& track : ds.tracks)
      for (const auto& p : track.points)
        table_[p.frame_id].push_back({track.agent_id, track.agent_type, {p.x, p.y}});
  }

  const std::vector<Entry>& agents_at(FrameId frame) const {
    static const std::vector<Entry> kEmpty;
    auto it = table_.find(frame);
    return it == table_.end() ? kEmpty : it->second;
  }

 private:
  std::unordered_map<FrameId, std::vector<Entry>> table_;
};

/// One TrainingSample per contiguous run of T + T' frames per track, advancing
/// by `stride`. Tracks shorter than T + T' contribute nothing.
inline std::vector<TrainingSample> make_windows(const SceneDataset& ds, int T, int T_prime,
                                                int stride = 1) {
  if (T < 2 || T_prime < 1 || stride < 1)
    throw std::invalid_argument("make_windows: need T >= 2, T' >= 1, stride >= 1");

  const FrameTable frames(ds);
  const int total = T + T_prime;
  std::vector<TrainingSample> samples;

  for (const auto& track : ds.tracks) {
    const auto n = track.points.size();
    if (n < static_cast<std::size_t>(total)) continue;
    // contiguous runs: consecutive samples exactly frame_step apart
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= n; ++i) {
      const bool broken =
          i == n || track.points[i].frame_id - track.points[i - 1].frame_id != ds.frame_step;
      if (!broken) continue;
      const std::size_t run_len = i - run_start;
      for (std::size_t w = run_start;
           run_len >= static_cast<std::size_t>(total) && w + total <= i;
           w += static_cast<std::size_t>(stride)) {
        TrainingSample s;
        s.agent_id = track.agent_id;
        s.agent_type = track.agent_type;
        s.type_onehot = encode_agent_type(track.agent_type);
        s.start_frame = track.points[w].frame_id;
        s.frame_step = ds.frame_step;
        s.obs_positions.resize(T, 2);
        s.fut_positions.resize(T_prime, 2);
        for (int k = 0; k < total; ++k) {
          const auto& p = track.points[w + k];
          if (k < T)
            s.obs_positions.row(k) << p.x, p.y;
          else
            s.fut_positions.row(k - T) << p.x, p.y;
          std::vector<AgentId> neighbors;
          for (const auto& e : frames.agents_at(p.frame_id))
            if (e.agent_id != track.agent_id) neighbors.push_back(e.agent_id);
          s.neighbor_ids_per_step.push_back(std::move(neighbors));
        }
        s.obs_offsets = positions_to_offsets(s.obs_positions);
        PointSeq all(1 + T_prime, 2);
        all.row(0) = s.obs_positions.row(T - 1);
        all.bottomRows(T_prime) = s.fut_positions;
        s.fut_offsets = positions_to_offsets(all);
        samples.push_back(std::move(s));
      }
      run_start = i;
    }
  }
  return samples;
}

}  // namespace mcenet
