#pragma once

#include "mcenet/ranking.hpp"
#include "mcenet/types.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace mcenet {

/// Mean pairwise L2 distance over all steps.
inline double ade(const PointSeq& pred, const PointSeq& gt) {
  if (pred.rows() != gt.rows() || pred.rows() < 1)
    throw std::invalid_argument("ade: trajectory length mismatch or empty");
  double sum = 0.0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t) sum += (pred.row(t) - gt.row(t)).norm();
  return sum / static_cast<double>(pred.rows());
}

/// L2 distance at the final step only.
inline double fde(const PointSeq& pred, const PointSeq& gt) {
  if (pred.rows() != gt.rows() || pred.rows() < 1)
    throw std::invalid_argument("fde: trajectory length mismatch or empty");
  return (pred.row(pred.rows() - 1) - gt.row(gt.rows() - 1)).norm();
}

/// Among the k highest-scoring trajectories, the smallest ADE and the smallest
/// FDE, selected independently per metric.
inline std::pair<double, double> best_of_k(const PredictionSet& pred, const PointSeq& gt,
                                           int k) {
  const int n = pred.num_trajectories();
  if (k < 1) throw std::invalid_argument("best_of_k: k must be >= 1");
  if (k > n) throw std::invalid_argument("best_of_k: k exceeds the number of trajectories");
  if (static_cast<int>(pred.scores.size()) != n)
    throw std::invalid_argument("best_of_k: ranking scores missing");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return pred.scores[static_cast<std::size_t>(a)] > pred.scores[static_cast<std::size_t>(b)];
  });

  double best_ade = std::numeric_limits<double>::infinity();
  double best_fde = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const auto& traj = pred.trajectories[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    best_ade = std::min(best_ade, ade(traj, gt));
    best_fde = std::min(best_fde, fde(traj, gt));
  }
  return {best_ade, best_fde};
}

struct MetricReport {
  std::string dataset;
  std::string variant;
  int k = 10;
  double ade_most_likely = 0.0;
  double fde_most_likely = 0.0;
  double ade_best_of_k = 0.0;
  double fde_best_of_k = 0.0;
  int sample_count = 0;
};

/// Per-sample metric row, exported alongside the aggregate report.
struct SampleMetrics {
  AgentId agent_id = 0;
  FrameId start_frame = 0;
  double ade_ml = 0.0, fde_ml = 0.0, ade_bk = 0.0, fde_bk = 0.0;
};

inline std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_metrics_csv(const std::vector<MetricReport>& reports,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "dataset,variant,k,ade_ml,fde_ml,ade_bk,fde_bk,n_samples\n";
  for (const auto& r : reports) {
    out << r.dataset << ',' << r.variant << ',' << r.k << ',' << format_double(r.ade_most_likely)
        << ',' << format_double(r.fde_most_likely) << ',' << format_double(r.ade_best_of_k)
        << ',' << format_double(r.fde_best_of_k) << ',' << r.sample_count << '\n';
  }
}

inline void write_sample_metrics_csv(const std::vector<SampleMetrics>& rows,
                                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "agent_id,start_frame,ade_ml,fde_ml,ade_bk,fde_bk\n";
  for (const auto& r : rows) {
    out << r.agent_id << ',' << r.start_frame << ',' << format_double(r.ade_ml) << ','
        << format_double(r.fde_ml) << ',' << format_double(r.ade_bk) << ','
        << format_double(r.fde_bk) << '\n';
  }
}

}  // namespace mcenet
