#pragma once

// Rollout-group diversity.
//
// For one group of g rollouts:
//   distinct  number of different (task, tool) step sequences
//   order     distinct task sequences whose task multiset is shared with at
//             least one other distinct task sequence (same tasks, other order)
//   tool      distinct trajectories minus distinct task sequences (same task
//             sequence, different tools)
//   identical rollouts whose exact trajectory occurs more than once
//
// order and tool count disjoint categories, so order + tool <= distinct.

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "toolrl/demo.hpp"

namespace toolrl {

struct GroupDiversity {
  int size = 0;
  int distinct = 0;
  int order = 0;
  int tool = 0;
  int identical = 0;
};

struct DiversityReport {
  std::vector<GroupDiversity> groups;
  double distinct_fraction = 0.0;
  double order_fraction = 0.0;
  double tool_fraction = 0.0;
  double identical_fraction = 0.0;
  ToolEntropy tool_entropy;
};

inline GroupDiversity group_diversity(std::span<const Trajectory> group) {
  GroupDiversity out;
  out.size = static_cast<int>(group.size());
  std::map<std::vector<Step>, int> seen;
  for (const Trajectory& t : group) ++seen[t.steps];
  out.distinct = static_cast<int>(seen.size());
  for (const auto& [steps, n] : seen)
    if (n > 1) out.identical += n;

  std::set<std::vector<int>> task_seqs;
  for (const auto& [steps, n] : seen) {
    std::vector<int> tasks;
    tasks.reserve(steps.size());
    for (const Step& s : steps) tasks.push_back(s.task);
    task_seqs.insert(std::move(tasks));
  }
  std::map<std::vector<int>, int> orderings;  // task multiset -> distinct orderings
  for (const auto& seq : task_seqs) {
    std::vector<int> key = seq;
    std::sort(key.begin(), key.end());
    ++orderings[key];
  }
  for (const auto& [key, k] : orderings)
    if (k > 1) out.order += k;
  out.tool = out.distinct - static_cast<int>(task_seqs.size());
  return out;
}

/// `rollouts` holds consecutive groups of `group_size`.
inline DiversityReport diversity_stats(const EnvConfig& config, std::span<const Trajectory> rollouts,
                                       std::size_t group_size) {
  DiversityReport rep;
  if (group_size == 0 || rollouts.empty()) return rep;
  for (std::size_t start = 0; start + group_size <= rollouts.size(); start += group_size) {
    const GroupDiversity g = group_diversity(rollouts.subspan(start, group_size));
    rep.distinct_fraction += static_cast<double>(g.distinct) / g.size;
    rep.order_fraction += static_cast<double>(g.order) / g.size;
    rep.tool_fraction += static_cast<double>(g.tool) / g.size;
    rep.identical_fraction += static_cast<double>(g.identical) / g.size;
    rep.groups.push_back(g);
  }
  const double n = static_cast<double>(rep.groups.size());
  if (n > 0) {
    rep.distinct_fraction /= n;
    rep.order_fraction /= n;
    rep.tool_fraction /= n;
    rep.identical_fraction /= n;
  }
  std::vector<const Trajectory*> ptrs;
  ptrs.reserve(rollouts.size());
  for (const Trajectory& t : rollouts) ptrs.push_back(&t);
  rep.tool_entropy = tool_entropy(counts_by_task(config, ptrs));
  return rep;
}

}  // namespace toolrl
