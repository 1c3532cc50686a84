#include "mcenet/occupancy.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace mcenet;

namespace {

// Direct evaluation of the per-cell indicator sum: for every cell, count the
// co-present non-group neighbors whose polar coordinates land in it. Loops
// over cells rather than neighbors, so the binning arithmetic is independent
// of the implementation path.
OccupancyGrid brute_force_occupancy(const PointSeq& target, AgentId target_id,
                                    const std::vector<StepPresence>& neighbors,
                                    const GroupAssignment& groups, const GridSpec& spec) {
  const int steps = static_cast<int>(target.rows());
  OccupancyGrid grid(steps, spec.num_orientation_bins, spec.num_distance_bins);
  const auto headings = spec.reference_frame == GridSpec::Frame::kHeadingRelative
                            ? step_headings(target)
                            : std::vector<double>(static_cast<std::size_t>(steps), 0.0);
  const double ring = spec.max_radius / spec.num_distance_bins;
  const double sector = 2.0 * std::numbers::pi / spec.num_orientation_bins;

  for (int t = 0; t < steps; ++t)
    for (int r = 0; r < spec.num_orientation_bins; ++r)
      for (int d = 0; d < spec.num_distance_bins; ++d) {
        int count = 0;
        const auto& step = neighbors[static_cast<std::size_t>(t)];
        for (std::size_t j = 0; j < step.ids.size(); ++j) {
          const AgentId id = step.ids[j];
          if (id == target_id || groups.of(target_id).count(id)) continue;
          const Eigen::Vector2d rel = step.positions[j] - target.row(t).transpose();
          const double dist = rel.norm();
          if (dist > spec.max_radius) continue;
          double angle = std::atan2(rel.y(), rel.x()) - headings[static_cast<std::size_t>(t)];
          while (angle < -std::numbers::pi) angle += 2.0 * std::numbers::pi;
          while (angle >= std::numbers::pi) angle -= 2.0 * std::numbers::pi;
          // half-open cell intervals; the outermost ring is closed above
          const double a_lo = -std::numbers::pi + r * sector;
          const double a_hi = a_lo + sector;
          const double d_lo = d * ring;
          const double d_hi = d_lo + ring;
          const bool in_angle = angle >= a_lo && angle < a_hi;
          const bool in_dist = (dist >= d_lo && dist < d_hi) ||
                               (d == spec.num_distance_bins - 1 && dist == spec.max_radius);
          if (in_angle && in_dist) ++count;
        }
        grid.at(t, r, d) = count;
      }
  return grid;
}

GroupAssignment make_groups(AgentId target, const std::vector<AgentId>& members) {
  GroupAssignment g;
  for (AgentId m : members) {
    g.members[target].insert(m);
    g.members[m].insert(target);
  }
  return g;
}

}  // namespace

TEST_CASE("one non-group neighbor ahead fills exactly one cell") {
  PointSeq target(2, 2);
  target << 0, 0, 1, 0;  // heading +x from step 1; step 0 borrows it
  std::vector<StepPresence> steps(2);
  for (auto& s : steps) {
    s.ids = {2};
    s.positions = {{3.0, 0.0}};
  }
  GridSpec spec;
  const OccupancyGrid grid = build_occupancy(target, 1, steps, GroupAssignment{}, spec);
  int total = 0;
  for (int c : grid.counts) total += c;
  CHECK(total == 2);  // one hit per step
  CHECK(grid.step_total(0) == 1);
  CHECK(grid.step_total(1) == 1);
}

TEST_CASE("group members contribute nothing") {
  PointSeq target(2, 2);
  target << 0, 0, 1, 0;
  std::vector<StepPresence> steps(2);
  for (std::size_t t = 0; t < 2; ++t) {
    steps[t].ids = {2};
    steps[t].positions = {{2.0 + static_cast<double>(t), 0.0}};
  }
  const GroupAssignment groups = make_groups(1, {2});
  const OccupancyGrid grid = build_occupancy(target, 1, steps, groups, GridSpec{});
  for (int c : grid.counts) CHECK(c == 0);
}

TEST_CASE("two neighbors in the same polar bin count twice") {
  PointSeq target(1, 2);
  target << 0, 0;
  std::vector<StepPresence> steps(1);
  steps[0].ids = {2, 3};
  steps[0].positions = {{2.0, 0.1}, {2.2, 0.2}};  // same sector, same ring
  GridSpec spec;
  spec.reference_frame = GridSpec::Frame::kGlobal;
  const OccupancyGrid grid = build_occupancy(target, 1, steps, GroupAssignment{}, spec);
  const OccupancyGrid oracle = brute_force_occupancy(target, 1, steps, GroupAssignment{}, spec);
  CHECK(grid.counts == oracle.counts);
  int max_cell = 0;
  for (int c : grid.counts) max_cell = std::max(max_cell, c);
  CHECK(max_cell == 2);
}

TEST_CASE("neighbors beyond max_radius are ignored; the boundary lands in the outer ring") {
  PointSeq target(1, 2);
  target << 0, 0;
  GridSpec spec;
  spec.reference_frame = GridSpec::Frame::kGlobal;

  std::vector<StepPresence> beyond(1);
  beyond[0].ids = {2};
  beyond[0].positions = {{spec.max_radius + 0.001, 0.0}};
  CHECK(build_occupancy(target, 1, beyond, GroupAssignment{}, spec).step_total(0) == 0);

  std::vector<StepPresence> at_edge(1);
  at_edge[0].ids = {2};
  at_edge[0].positions = {{spec.max_radius, 0.0}};
  const OccupancyGrid grid = build_occupancy(target, 1, at_edge, GroupAssignment{}, spec);
  CHECK(grid.step_total(0) == 1);
  int hit_d = -1;
  for (int r = 0; r < spec.num_orientation_bins; ++r)
    for (int d = 0; d < spec.num_distance_bins; ++d)
      if (grid.at(0, r, d) > 0) hit_d = d;
  CHECK(hit_d == spec.num_distance_bins - 1);

  // an interior ring boundary belongs to the outer of the two rings
  std::vector<StepPresence> ring_edge(1);
  ring_edge[0].ids = {2};
  ring_edge[0].positions = {{2.0, 0.0}};  // exactly at the 1m-ring boundary 2.0
  const OccupancyGrid g2 = build_occupancy(target, 1, ring_edge, GroupAssignment{}, spec);
  int d_hit = -1;
  for (int r = 0; r < spec.num_orientation_bins; ++r)
    for (int d = 0; d < spec.num_distance_bins; ++d)
      if (g2.at(0, r, d) > 0) d_hit = d;
  CHECK(d_hit == 2);  // rings [0,1), [1,2), [2,3): 2.0 falls in the third
}

TEST_CASE("a stationary target falls back to the +x axis") {
  PointSeq target(3, 2);
  target.setZero();
  std::vector<StepPresence> steps(3);
  for (auto& s : steps) {
    s.ids = {2};
    s.positions = {{1.5, 0.0}};
  }
  GridSpec spec;  // heading-relative
  const OccupancyGrid grid = build_occupancy(target, 1, steps, GroupAssignment{}, spec);
  // angle 0 relative to +x: sector containing 0 is bin R/2 (bins start at -pi)
  const int expected_r = spec.num_orientation_bins / 2;
  for (int t = 0; t < 3; ++t) CHECK(grid.at(t, expected_r, 1) == 1);
}

TEST_CASE("build_occupancy equals the brute-force indicator sum on random configurations") {
  std::mt19937 rng(505);
  std::uniform_real_distribution<double> coord(-10.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int steps = std::uniform_int_distribution<int>(1, 8)(rng);
    const int neighbors = std::uniform_int_distribution<int>(0, 15)(rng);

    PointSeq target(steps, 2);
    for (int t = 0; t < steps; ++t) {
      target(t, 0) = coord(rng);
      target(t, 1) = coord(rng);
    }
    std::vector<StepPresence> presence(static_cast<std::size_t>(steps));
    for (auto& p : presence)
      for (int j = 0; j < neighbors; ++j) {
        if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.2) continue;
        p.ids.push_back(j + 2);
        p.positions.push_back({coord(rng), coord(rng)});
      }
    std::vector<AgentId> members;
    for (int j = 0; j < neighbors; ++j)
      if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.3) members.push_back(j + 2);
    const GroupAssignment groups = make_groups(1, members);

    GridSpec spec;
    spec.num_orientation_bins = std::uniform_int_distribution<int>(1, 10)(rng);
    spec.num_distance_bins = std::uniform_int_distribution<int>(1, 10)(rng);
    spec.max_radius = std::uniform_real_distribution<double>(2.0, 12.0)(rng);
    spec.reference_frame = trial % 2 == 0 ? GridSpec::Frame::kHeadingRelative
                                          : GridSpec::Frame::kGlobal;

    const OccupancyGrid fast = build_occupancy(target, 1, presence, groups, spec);
    const OccupancyGrid oracle = brute_force_occupancy(target, 1, presence, groups, spec);
    REQUIRE(fast.counts == oracle.counts);
  }
}

TEST_CASE("step totals count co-present non-group neighbors within range") {
  std::mt19937 rng(606);
  std::uniform_real_distribution<double> coord(-6.0, 6.0);
  for (int trial = 0; trial < 50; ++trial) {
    PointSeq target(4, 2);
    for (int t = 0; t < 4; ++t) {
      target(t, 0) = coord(rng);
      target(t, 1) = coord(rng);
    }
    std::vector<StepPresence> presence(4);
    for (auto& p : presence)
      for (int j = 0; j < 10; ++j) {
        p.ids.push_back(j + 2);
        p.positions.push_back({coord(rng), coord(rng)});
      }
    GridSpec spec;
    const OccupancyGrid grid = build_occupancy(target, 1, presence, GroupAssignment{}, spec);
    for (int t = 0; t < 4; ++t) {
      int expected = 0;
      for (std::size_t j = 0; j < presence[static_cast<std::size_t>(t)].ids.size(); ++j) {
        const double dist =
            (presence[static_cast<std::size_t>(t)].positions[j] - target.row(t).transpose())
                .norm();
        if (dist <= spec.max_radius) ++expected;
      }
      CHECK(grid.step_total(t) == expected);
    }
  }
}

TEST_CASE("headings follow the most recent nonzero offset") {
  PointSeq p(4, 2);
  p << 0, 0, 1, 0, 1, 0, 1, 1;  // move +x, pause, move +y
  const auto h = step_headings(p);
  CHECK(h[0] == Catch::Approx(0.0));  // borrowed from the first nonzero offset
  CHECK(h[1] == Catch::Approx(0.0));
  CHECK(h[2] == Catch::Approx(0.0));  // pause keeps the previous heading
  CHECK(h[3] == Catch::Approx(std::numbers::pi / 2));
}
