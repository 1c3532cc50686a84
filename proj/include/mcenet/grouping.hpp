#pragma once

#include "mcenet/dataio.hpp"
#include "mcenet/dbscan.hpp"
#include "mcenet/types.hpp"

#include <map>
#include <set>
#include <vector>

namespace mcenet {

/// Agents present at one window step.
struct StepPresence {
  std::vector<AgentId> ids;
  std::vector<Eigen::Vector2d> positions;
};

/// Per target agent, the set of agents judged group members over a window.
/// Symmetric and irreflexive by construction.
struct GroupAssignment {
  std::map<AgentId, std::set<AgentId>> members;

  bool are_grouped(AgentId a, AgentId b) const {
    auto it = members.find(a);
    return it != members.end() && it->second.count(b) > 0;
  }
  const std::set<AgentId>& of(AgentId a) const {
    static const std::set<AgentId> kEmpty;
    auto it = members.find(a);
    return it == members.end() ? kEmpty : it->second;
  }
};

/// Presence of every agent at the given window frames.
inline std::vector<StepPresence> window_presence(const FrameTable& frames,
                                                 const std::vector<FrameId>& window_frames) {
  std::vector<StepPresence> steps;
  steps.reserve(window_frames.size());
  for (FrameId f : window_frames) {
    StepPresence sp;
    for (const auto& e : frames.agents_at(f)) {
      sp.ids.push_back(e.agent_id);
      sp.positions.push_back(e.position);
    }
    steps.push_back(std::move(sp));
  }
  return steps;
}

/// Cluster labels of the agents present at one step.
struct StepClusters {
  std::vector<AgentId> ids;
  std::vector<int> labels;
};

/// Co-existence-rate aggregation: two agents are group members iff they share
/// a cluster on at least coexist_rate of the steps. Steps where either agent
/// is absent (or is noise) do not count as co-clustered.
inline GroupAssignment groups_from_labels(const std::vector<StepClusters>& steps,
                                          double coexist_rate) {
  if (steps.empty())
    throw std::invalid_argument("groups_from_labels: need at least one step");

  std::map<std::pair<AgentId, AgentId>, int> co_clustered;
  std::set<AgentId> all_ids;
  for (const auto& step : steps) {
    for (AgentId id : step.ids) all_ids.insert(id);
    const auto n = step.ids.size();
    for (std::size_t a = 0; a < n; ++a) {
      if (step.labels[a] == kDbscanNoise) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (step.labels[b] != step.labels[a]) continue;
        auto key = std::minmax(step.ids[a], step.ids[b]);
        ++co_clustered[{key.first, key.second}];
      }
    }
  }

  GroupAssignment groups;
  for (AgentId id : all_ids) groups.members[id];  // ensure every agent has an entry
  const double num_steps = static_cast<double>(steps.size());
  for (const auto& [pair, count] : co_clustered) {
    if (static_cast<double>(count) / num_steps >= coexist_rate - 1e-12) {
      groups.members[pair.first].insert(pair.second);
      groups.members[pair.second].insert(pair.first);
    }
  }
  return groups;
}

/// DBSCAN runs per observed step over all present agents, then the
/// co-existence rate decides group membership.
inline GroupAssignment detect_groups(const std::vector<StepPresence>& observed_steps,
                                     double eps = 1.5, int min_pts = 2,
                                     double coexist_rate = 0.9) {
  if (observed_steps.empty())
    throw std::invalid_argument("detect_groups: need at least one observed step");
  std::vector<StepClusters> clustered;
  clustered.reserve(observed_steps.size());
  for (const auto& step : observed_steps)
    clustered.push_back({step.ids, dbscan(step.positions, eps, min_pts)});
  return groups_from_labels(clustered, coexist_rate);
}

}  // namespace mcenet
