#pragma once

#include "mcenet/grouping.hpp"
#include "mcenet/types.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mcenet {

/// Polar grid discretization around a target agent.
struct GridSpec {
  enum class Frame { kHeadingRelative, kGlobal };

  int num_orientation_bins = 8;
  int num_distance_bins = 8;
  double max_radius = 8.0;  // meters; 1 m rings with the defaults
  Frame reference_frame = Frame::kHeadingRelative;

  void validate() const {
    if (num_orientation_bins < 1 || num_distance_bins < 1)
      throw std::invalid_argument("GridSpec: bins must be >= 1");
    if (max_radius <= 0.0) throw std::invalid_argument("GridSpec: max_radius must be > 0");
  }
  int cells() const { return num_orientation_bins * num_distance_bins; }
};

/// Per-timestep polar counts of non-group neighbors.
struct OccupancyGrid {
  int steps = 0;
  int orientation_bins = 0;
  int distance_bins = 0;
  std::vector<int> counts;  // steps x R x D, row-major

  OccupancyGrid() = default;
  OccupancyGrid(int steps_, int r, int d)
      : steps(steps_), orientation_bins(r), distance_bins(d),
        counts(static_cast<std::size_t>(steps_) * r * d, 0) {}

  int& at(int t, int r, int d) {
    return counts[(static_cast<std::size_t>(t) * orientation_bins + r) * distance_bins + d];
  }
  int at(int t, int r, int d) const {
    return counts[(static_cast<std::size_t>(t) * orientation_bins + r) * distance_bins + d];
  }
  int step_total(int t) const {
    int sum = 0;
    for (int r = 0; r < orientation_bins; ++r)
      for (int d = 0; d < distance_bins; ++d) sum += at(t, r, d);
    return sum;
  }
};

/// Heading angle per step, from the most recent nonzero offset at or before
/// the step. The first steps fall back to the first nonzero offset anywhere in
/// the segment; a fully stationary segment uses the global +x axis (angle 0).
inline std::vector<double> step_headings(const PointSeq& positions) {
  const auto k = positions.rows();
  std::vector<double> headings(static_cast<std::size_t>(k), 0.0);
  double initial = 0.0;
  for (Eigen::Index i = 1; i < k; ++i) {
    const Eigen::Vector2d d = (positions.row(i) - positions.row(i - 1)).transpose();
    if (d.norm() > 1e-12) {
      initial = std::atan2(d.y(), d.x());
      break;
    }
  }
  double current = initial;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (i >= 1) {
      const Eigen::Vector2d d = (positions.row(i) - positions.row(i - 1)).transpose();
      if (d.norm() > 1e-12) current = std::atan2(d.y(), d.x());
    }
    headings[static_cast<std::size_t>(i)] = current;
  }
  return headings;
}

/// Maps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

/// Counts, for each step, the co-present non-group neighbors per polar cell
/// around the target. Angular bins are half-open starting at -pi; distance
/// rings are half-open [lo, hi) except that a neighbor at exactly max_radius
/// falls into the outermost ring. Neighbors beyond max_radius are ignored;
/// group members contribute nothing.
inline OccupancyGrid build_occupancy(const PointSeq& target_positions, AgentId target_id,
                                     const std::vector<StepPresence>& neighbors,
                                     const GroupAssignment& groups, const GridSpec& spec) {
  spec.validate();
  const int steps = static_cast<int>(target_positions.rows());
  if (static_cast<std::size_t>(steps) != neighbors.size())
    throw std::invalid_argument("build_occupancy: target steps and neighbor steps differ");

  const int R = spec.num_orientation_bins;
  const int D = spec.num_distance_bins;
  OccupancyGrid grid(steps, R, D);
  const auto headings = spec.reference_frame == GridSpec::Frame::kHeadingRelative
                            ? step_headings(target_positions)
                            : std::vector<double>(static_cast<std::size_t>(steps), 0.0);
  const double ring_width = spec.max_radius / D;
  const double sector_width = 2.0 * std::numbers::pi / R;
  const auto& group_set = groups.of(target_id);

  for (int t = 0; t < steps; ++t) {
    const Eigen::Vector2d center = target_positions.row(t).transpose();
    const auto& step = neighbors[static_cast<std::size_t>(t)];
    for (std::size_t j = 0; j < step.ids.size(); ++j) {
      const AgentId id = step.ids[j];
      if (id == target_id || group_set.count(id)) continue;
      const Eigen::Vector2d rel = step.positions[j] - center;
      const double dist = rel.norm();
      if (dist > spec.max_radius) continue;
      const double angle = wrap_angle(std::atan2(rel.y(), rel.x()) - headings[t]);
      int r = static_cast<int>(std::floor((angle + std::numbers::pi) / sector_width));
      r = std::min(std::max(r, 0), R - 1);
      const int d = std::min(static_cast<int>(std::floor(dist / ring_width)), D - 1);
      ++grid.at(t, r, d);
    }
  }
  return grid;
}

}  // namespace mcenet
