#pragma once

#include "mcenet/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mcenet {

/// Per-timestep distribution fitted over the N predicted positions.
struct BivariateGaussian {
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  Eigen::Vector2d sigma = Eigen::Vector2d::Ones();
  double rho = 0.0;

  static constexpr double kSigmaFloor = 1e-6;
  static constexpr double kRhoClamp = 0.999;
};

/// Maximum-likelihood moments (denominator N), with the sigma floor and rho
/// clamp applied. A degenerate cloud gets floored sigmas and rho = 0.
inline BivariateGaussian fit_bivariate_gaussian(const std::vector<Eigen::Vector2d>& points) {
  const auto n = points.size();
  if (n < 2) throw std::invalid_argument("fit_bivariate_gaussian: need at least 2 points");

  BivariateGaussian g;
  g.mu.setZero();
  for (const auto& p : points) g.mu += p;
  g.mu /= static_cast<double>(n);

  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (const auto& p : points) {
    const Eigen::Vector2d d = p - g.mu;
    vx += d.x() * d.x();
    vy += d.y() * d.y();
    cov += d.x() * d.y();
  }
  vx /= static_cast<double>(n);
  vy /= static_cast<double>(n);
  cov /= static_cast<double>(n);

  const double sx = std::sqrt(vx);
  const double sy = std::sqrt(vy);
  const bool degenerate = sx < BivariateGaussian::kSigmaFloor ||
                          sy < BivariateGaussian::kSigmaFloor;
  g.sigma.x() = std::max(sx, BivariateGaussian::kSigmaFloor);
  g.sigma.y() = std::max(sy, BivariateGaussian::kSigmaFloor);
  g.rho = degenerate ? 0.0
                     : std::clamp(cov / (sx * sy), -BivariateGaussian::kRhoClamp,
                                  BivariateGaussian::kRhoClamp);
  return g;
}

inline double log_pdf(const BivariateGaussian& g, const Eigen::Vector2d& p) {
  const double dx = (p.x() - g.mu.x()) / g.sigma.x();
  const double dy = (p.y() - g.mu.y()) / g.sigma.y();
  const double one_minus_r2 = 1.0 - g.rho * g.rho;
  const double quad = (dx * dx - 2.0 * g.rho * dx * dy + dy * dy) / one_minus_r2;
  return -std::log(2.0 * std::numbers::pi * g.sigma.x() * g.sigma.y() *
                   std::sqrt(one_minus_r2)) -
         0.5 * quad;
}

struct RankedPredictions {
  std::vector<int> order;      // permutation of 0..N-1, best first
  std::vector<double> scores;  // summed per-step log-densities, index-aligned
  int best_index = -1;
};

/// Fits one bivariate Gaussian per future step across the N trajectories and
/// scores each trajectory by its summed log-density; ties break on the lower
/// index.
inline RankedPredictions rank_predictions(const PredictionSet& pred) {
  const int n = pred.num_trajectories();
  if (n < 2) throw std::invalid_argument("rank_predictions: need at least 2 trajectories");
  const auto t_prime = pred.trajectories[0].rows();
  if (t_prime < 1) throw std::invalid_argument("rank_predictions: empty trajectories");
  for (const auto& traj : pred.trajectories) {
    if (traj.rows() != t_prime)
      throw std::invalid_argument("rank_predictions: trajectory length mismatch");
    if (!traj.allFinite())
      throw std::invalid_argument("rank_predictions: non-finite position");
  }

  RankedPredictions ranked;
  ranked.scores.assign(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index t = 0; t < t_prime; ++t) {
    std::vector<Eigen::Vector2d> cloud;
    cloud.reserve(static_cast<std::size_t>(n));
    for (const auto& traj : pred.trajectories) cloud.push_back(traj.row(t).transpose());
    const BivariateGaussian g = fit_bivariate_gaussian(cloud);
    for (int i = 0; i < n; ++i)
      ranked.scores[static_cast<std::size_t>(i)] += log_pdf(g, cloud[static_cast<std::size_t>(i)]);
  }

  ranked.order.resize(static_cast<std::size_t>(n));
  std::iota(ranked.order.begin(), ranked.order.end(), 0);
  std::stable_sort(ranked.order.begin(), ranked.order.end(), [&](int a, int b) {
    return ranked.scores[static_cast<std::size_t>(a)] > ranked.scores[static_cast<std::size_t>(b)];
  });
  ranked.best_index = ranked.order[0];
  return ranked;
}

/// Fills a PredictionSet's scores and most-likely index in place.
inline void apply_ranking(PredictionSet& pred) {
  if (pred.num_trajectories() == 1) {
    pred.scores = {0.0};
    pred.most_likely_index = 0;
    return;
  }
  const RankedPredictions ranked = rank_predictions(pred);
  pred.scores = ranked.scores;
  pred.most_likely_index = ranked.best_index;
}

}  // namespace mcenet
