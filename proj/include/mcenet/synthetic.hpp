#pragma once

#include "mcenet/types.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mcenet {

/// Constant-velocity mixed-type scene: straight paths with per-step speed
/// noise along the heading. Useful as a controllable fixture with a known
/// noise floor.
struct SyntheticSpec {
  int num_agents = 200;
  int num_frames = 60;
  double frame_rate = 2.0;
  double speed_noise = 0.05;  // std of the per-step speed perturbation, meters
  double area = 80.0;         // start positions are uniform in [area/4, 3*area/4]^2
  double meters_per_pixel = 1.0;
  std::uint64_t seed = 1;
};

inline SceneDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> pos(spec.area * 0.25, spec.area * 0.75);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, spec.speed_noise);

  // per-step base speed by type, meters/step
  const double base_speed[3] = {0.6, 1.5, 2.5};

  SceneDataset ds;
  ds.name = "synthetic";
  ds.frame_rate = spec.frame_rate;
  ds.frame_step = 1;
  ds.meters_per_pixel = spec.meters_per_pixel;

  for (int a = 0; a < spec.num_agents; ++a) {
    AgentTrack track;
    track.agent_id = a + 1;
    track.agent_type = static_cast<AgentType>(a % 3);
    const double theta = angle(rng);
    const Eigen::Vector2d dir(std::cos(theta), std::sin(theta));
    const double speed = base_speed[a % 3];
    // center each path's midpoint in the area so agent density stays
    // comparable across the timeline
    const Eigen::Vector2d midpoint(pos(rng), pos(rng));
    Eigen::Vector2d p = midpoint - dir * (speed * spec.num_frames / 2.0);
    for (int f = 0; f < spec.num_frames; ++f) {
      track.points.push_back({f, p.x(), p.y()});
      p += dir * (speed + noise(rng));
    }
    ds.tracks.push_back(std::move(track));
  }
  return ds;
}

}  // namespace mcenet
