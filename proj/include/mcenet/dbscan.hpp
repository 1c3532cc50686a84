#pragma once

#include <Eigen/Dense>

#include <queue>
#include <stdexcept>
#include <vector>

namespace mcenet {

constexpr int kDbscanNoise = -1;

/// Density-based clustering over 2-D points. Core points have at least
/// min_pts points (self included) within eps; clusters are the transitive
/// closure of density-reachability. Returns one label per point, noise = -1.
inline std::vector<int> dbscan(const std::vector<Eigen::Vector2d>& points, double eps,
                               int min_pts) {
  if (eps <= 0.0) throw std::invalid_argument("dbscan: eps must be > 0");
  if (min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");

  const int n = static_cast<int>(points.size());
  constexpr int kUnvisited = -2;
  std::vector<int> labels(n, kUnvisited);
  const double eps2 = eps * eps;

  auto neighbors_of = [&](int p) {
    std::vector<int> out;
    for (int q = 0; q < n; ++q)
      if ((points[p] - points[q]).squaredNorm() <= eps2) out.push_back(q);
    return out;  // includes p itself
  };

  int next_label = 0;
  for (int p = 0; p < n; ++p) {
    if (labels[p] != kUnvisited) continue;
    auto seeds = neighbors_of(p);
    if (static_cast<int>(seeds.size()) < min_pts) {
      labels[p] = kDbscanNoise;
      continue;
    }
    const int cluster = next_label++;
    labels[p] = cluster;
    std::queue<int> frontier;
    for (int q : seeds) frontier.push(q);
    while (!frontier.empty()) {
      const int q = frontier.front();
      frontier.pop();
      if (labels[q] == kDbscanNoise) labels[q] = cluster;  // border point
      if (labels[q] != kUnvisited) continue;
      labels[q] = cluster;
      auto qn = neighbors_of(q);
      if (static_cast<int>(qn.size()) >= min_pts)
        for (int r : qn) frontier.push(r);
    }
  }
  return labels;
}

}  // namespace mcenet
