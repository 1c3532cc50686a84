#include "mcenet/metrics.hpp"
#include "mcenet/ranking.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace mcenet;

namespace {

PointSeq straight(double x0, double y0, double dx, double dy, int steps) {
  PointSeq p(steps, 2);
  for (int t = 0; t < steps; ++t) p.row(t) << x0 + dx * (t + 1), y0 + dy * (t + 1);
  return p;
}

PredictionSet cloud_around(const PointSeq& center, int n, double spread, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  PredictionSet pred;
  for (int i = 0; i < n; ++i) {
    PointSeq traj = center;
    for (Eigen::Index t = 0; t < traj.rows(); ++t) {
      traj(t, 0) += noise(rng);
      traj(t, 1) += noise(rng);
    }
    pred.trajectories.push_back(traj);
  }
  return pred;
}

}  // namespace

TEST_CASE("fitting a degenerate cloud floors the sigmas") {
  std::vector<Eigen::Vector2d> pts(5, Eigen::Vector2d(2.0, -1.0));
  const BivariateGaussian g = fit_bivariate_gaussian(pts);
  CHECK(g.mu.x() == Catch::Approx(2.0));
  CHECK(g.mu.y() == Catch::Approx(-1.0));
  CHECK(g.sigma.x() == BivariateGaussian::kSigmaFloor);
  CHECK(g.sigma.y() == BivariateGaussian::kSigmaFloor);
  CHECK(g.rho == 0.0);
  CHECK(std::isfinite(log_pdf(g, pts[0])));
}

TEST_CASE("a symmetric four-point cloud has zero correlation") {
  const std::vector<Eigen::Vector2d> pts = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  const BivariateGaussian g = fit_bivariate_gaussian(pts);
  CHECK(g.rho == Catch::Approx(0.0).margin(1e-12));
  CHECK(g.mu.norm() == Catch::Approx(0.0).margin(1e-12));
  // denominator-N moments: var = (1+1+0+0)/4
  CHECK(g.sigma.x() == Catch::Approx(std::sqrt(0.5)));
}

TEST_CASE("moments recover a known gaussian within 5 percent") {
  std::mt19937 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  const double sx = 2.0, sy = 0.7, rho = 0.6;
  const Eigen::Vector2d mu(3.0, -2.0);
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 10000; ++i) {
    const double u = n(rng), v = n(rng);
    pts.push_back({mu.x() + sx * u, mu.y() + sy * (rho * u + std::sqrt(1 - rho * rho) * v)});
  }
  const BivariateGaussian g = fit_bivariate_gaussian(pts);
  CHECK(std::abs(g.mu.x() - mu.x()) < 0.05 * sx);
  CHECK(std::abs(g.mu.y() - mu.y()) < 0.05 * sy);
  CHECK(std::abs(g.sigma.x() - sx) / sx < 0.05);
  CHECK(std::abs(g.sigma.y() - sy) / sy < 0.05);
  CHECK(std::abs(g.rho - rho) < 0.05);
  CHECK_THROWS_AS(fit_bivariate_gaussian({Eigen::Vector2d(0, 0)}), std::invalid_argument);
}

TEST_CASE("the per-step mean trajectory ranks first") {
  const PointSeq mean_traj = straight(0, 0, 1.0, 0.5, 8);
  PredictionSet pred = cloud_around(mean_traj, 6, 0.4, 11);
  // recenter the cloud so trajectory 0 is exactly the per-step sample mean
  for (Eigen::Index t = 0; t < mean_traj.rows(); ++t) {
    Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
    for (const auto& traj : pred.trajectories) mean += traj.row(t);
    mean /= static_cast<double>(pred.num_trajectories());
    const Eigen::RowVector2d shift = mean - pred.trajectories[0].row(t);
    pred.trajectories[0].row(t) += shift;
  }
  const RankedPredictions ranked = rank_predictions(pred);
  CHECK(ranked.best_index == 0);
}

TEST_CASE("identical trajectories rank by index") {
  PredictionSet pred;
  for (int i = 0; i < 4; ++i) pred.trajectories.push_back(straight(0, 0, 1, 0, 5));
  const RankedPredictions ranked = rank_predictions(pred);
  CHECK(ranked.order == std::vector<int>{0, 1, 2, 3});
  CHECK(ranked.best_index == 0);
}

TEST_CASE("an outlier trajectory ranks last") {
  PredictionSet pred = cloud_around(straight(0, 0, 1, 0, 6), 7, 0.1, 13);
  pred.trajectories.push_back(straight(10, 10, 1, 0, 6));  // 10 m off at every step
  const RankedPredictions ranked = rank_predictions(pred);
  CHECK(ranked.order.back() == 7);
}

TEST_CASE("scores are invariant under rigid translation") {
  PredictionSet pred = cloud_around(straight(0, 0, 0.7, -0.2, 5), 9, 0.3, 17);
  const RankedPredictions base = rank_predictions(pred);
  PredictionSet moved = pred;
  for (auto& traj : moved.trajectories) {
    traj.col(0).array() += 123.0;
    traj.col(1).array() -= 45.0;
  }
  const RankedPredictions shifted = rank_predictions(moved);
  for (std::size_t i = 0; i < base.scores.size(); ++i)
    CHECK(base.scores[i] == Catch::Approx(shifted.scores[i]).margin(1e-9));
  CHECK(base.order == shifted.order);
}

TEST_CASE("the ranking permutation is invariant under uniform scaling") {
  PredictionSet pred = cloud_around(straight(0, 0, 1.0, 0.3, 6), 8, 0.5, 19);
  const RankedPredictions base = rank_predictions(pred);
  PredictionSet scaled = pred;
  for (auto& traj : scaled.trajectories) traj *= 3.7;
  CHECK(rank_predictions(scaled).order == base.order);
}

TEST_CASE("ranking matches a brute-force log-density evaluation") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 12)(rng);
    const int steps = std::uniform_int_distribution<int>(1, 8)(rng);
    PredictionSet pred = cloud_around(straight(0, 0, 1, 0, steps), n, 0.8,
                                      static_cast<unsigned>(100 + trial));

    // direct per-step refit and density sum, straight from the formulas
    std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
    for (int t = 0; t < steps; ++t) {
      double mx = 0, my = 0;
      for (const auto& traj : pred.trajectories) {
        mx += traj(t, 0);
        my += traj(t, 1);
      }
      mx /= n;
      my /= n;
      double vx = 0, vy = 0, cov = 0;
      for (const auto& traj : pred.trajectories) {
        vx += (traj(t, 0) - mx) * (traj(t, 0) - mx);
        vy += (traj(t, 1) - my) * (traj(t, 1) - my);
        cov += (traj(t, 0) - mx) * (traj(t, 1) - my);
      }
      vx /= n;
      vy /= n;
      cov /= n;
      const double sx = std::max(std::sqrt(vx), 1e-6);
      const double sy = std::max(std::sqrt(vy), 1e-6);
      const double rho = std::clamp(cov / (sx * sy), -0.999, 0.999);
      for (int i = 0; i < n; ++i) {
        const double dx = (pred.trajectories[static_cast<std::size_t>(i)](t, 0) - mx) / sx;
        const double dy = (pred.trajectories[static_cast<std::size_t>(i)](t, 1) - my) / sy;
        const double q = (dx * dx - 2 * rho * dx * dy + dy * dy) / (1 - rho * rho);
        scores[static_cast<std::size_t>(i)] +=
            -std::log(2 * std::numbers::pi * sx * sy * std::sqrt(1 - rho * rho)) - 0.5 * q;
      }
    }
    std::vector<int> expected(static_cast<std::size_t>(n));
    std::iota(expected.begin(), expected.end(), 0);
    std::stable_sort(expected.begin(), expected.end(), [&](int a, int b) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });

    const RankedPredictions ranked = rank_predictions(pred);
    CHECK(ranked.order == expected);
    for (int i = 0; i < n; ++i)
      CHECK(ranked.scores[static_cast<std::size_t>(i)] ==
            Catch::Approx(scores[static_cast<std::size_t>(i)]).margin(1e-9));
  }
}

TEST_CASE("rank_predictions rejects bad input") {
  PredictionSet one;
  one.trajectories.push_back(straight(0, 0, 1, 0, 4));
  CHECK_THROWS_AS(rank_predictions(one), std::invalid_argument);

  PredictionSet bad = cloud_around(straight(0, 0, 1, 0, 4), 3, 0.1, 29);
  bad.trajectories[1](2, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(rank_predictions(bad), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

TEST_CASE("ade and fde on hand-computed fixtures") {
  const PointSeq gt = straight(0, 0, 1, 0, 2);

  CHECK(ade(gt, gt) == 0.0);
  CHECK(fde(gt, gt) == 0.0);

  PointSeq shifted = gt;
  shifted.col(0).array() += 1.0;
  CHECK(ade(shifted, gt) == Catch::Approx(1.0));

  PointSeq mixed = gt;
  mixed(0, 0) += 3.0;
  mixed(0, 1) += 4.0;  // error 5 then 0
  CHECK(ade(mixed, gt) == Catch::Approx(2.5));
  CHECK(fde(mixed, gt) == Catch::Approx(0.0));

  PointSeq last = gt;
  last(1, 0) += 3.0;
  last(1, 1) += 4.0;
  CHECK(fde(last, gt) == Catch::Approx(5.0));

  PointSeq wrong(3, 2);
  CHECK_THROWS_AS(ade(wrong, gt), std::invalid_argument);
  CHECK_THROWS_AS(fde(PointSeq(0, 2), PointSeq(0, 2)), std::invalid_argument);
}

TEST_CASE("fde ignores non-final steps") {
  std::mt19937 rng(31);
  std::normal_distribution<double> n(0.0, 2.0);
  const PointSeq gt = straight(0, 0, 1, 1, 6);
  PointSeq pred = gt;
  const double base = fde(pred, gt);
  for (int trial = 0; trial < 20; ++trial) {
    PointSeq perturbed = pred;
    for (Eigen::Index t = 0; t < perturbed.rows() - 1; ++t) {
      perturbed(t, 0) += n(rng);
      perturbed(t, 1) += n(rng);
    }
    CHECK(fde(perturbed, gt) == base);
  }
}

TEST_CASE("best_of_k picks the per-metric minimum over the top-k") {
  const PointSeq gt = straight(0, 0, 1, 0, 5);
  PredictionSet pred = cloud_around(gt, 6, 0.5, 37);
  pred.trajectories[3] = gt;  // exact hit among candidates
  apply_ranking(pred);

  const auto [a_all, f_all] = best_of_k(pred, gt, 6);
  CHECK(a_all == Catch::Approx(0.0).margin(1e-12));
  CHECK(f_all == Catch::Approx(0.0).margin(1e-12));

  // k = 1 equals the most-likely trajectory's metrics
  const auto [a1, f1] = best_of_k(pred, gt, 1);
  const auto& ml = pred.trajectories[static_cast<std::size_t>(pred.most_likely_index)];
  CHECK(a1 == Catch::Approx(ade(ml, gt)));
  CHECK(f1 == Catch::Approx(fde(ml, gt)));

  CHECK_THROWS_AS(best_of_k(pred, gt, 0), std::invalid_argument);
  CHECK_THROWS_AS(best_of_k(pred, gt, 7), std::invalid_argument);
  PredictionSet unranked = cloud_around(gt, 3, 0.1, 38);
  CHECK_THROWS_AS(best_of_k(unranked, gt, 2), std::invalid_argument);
}

TEST_CASE("best_of_k equals a brute-force scan and is monotone in k") {
  std::mt19937 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 10)(rng);
    const int steps = std::uniform_int_distribution<int>(1, 8)(rng);
    const PointSeq gt = straight(0, 0, 0.5, 0.2, steps);
    PredictionSet pred =
        cloud_around(gt, n, 1.0, static_cast<unsigned>(1000 + trial));
    apply_ranking(pred);

    double prev_ade = std::numeric_limits<double>::infinity();
    double prev_fde = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= n; ++k) {
      const auto [a, f] = best_of_k(pred, gt, k);
      // brute force over the k top-ranked candidates
      std::vector<int> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return pred.scores[static_cast<std::size_t>(x)] > pred.scores[static_cast<std::size_t>(y)];
      });
      double ba = std::numeric_limits<double>::infinity();
      double bf = std::numeric_limits<double>::infinity();
      for (int i = 0; i < k; ++i) {
        ba = std::min(ba, ade(pred.trajectories[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])], gt));
        bf = std::min(bf, fde(pred.trajectories[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])], gt));
      }
      CHECK(a == Catch::Approx(ba).margin(1e-12));
      CHECK(f == Catch::Approx(bf).margin(1e-12));
      CHECK(a <= prev_ade + 1e-12);  // monotone: more candidates never hurt
      CHECK(f <= prev_fde + 1e-12);
      prev_ade = a;
      prev_fde = f;
    }
  }
}

TEST_CASE("metric csv columns are stable") {
  MetricReport r;
  r.dataset = "demo";
  r.variant = "hm+gp";
  r.k = 10;
  r.ade_most_likely = 0.5;
  r.fde_most_likely = 1.0;
  r.ade_best_of_k = 0.25;
  r.fde_best_of_k = 0.75;
  r.sample_count = 42;
  const auto path = (std::filesystem::temp_directory_path() / "mcenet_metrics.csv").string();
  write_metrics_csv({r}, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "dataset,variant,k,ade_ml,fde_ml,ade_bk,fde_bk,n_samples");
  CHECK(row == "demo,hm+gp,10,0.5,1,0.25,0.75,42");
}
