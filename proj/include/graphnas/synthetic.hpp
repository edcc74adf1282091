#pragma once

#include <cstdint>
#include <string>

#include "graphnas/graph.hpp"

namespace graphnas {

enum class SyntheticTask {
  kTriangleThreshold,  // label 1 iff triangle count >= threshold
  kDegreeParity,       // label 1 iff at least half the nodes have odd degree
};

enum class FeatureMode {
  kConstant,  // every node carries the all-ones vector
  kDegree,    // one-hot degree, clamped to the last slot
};

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::kTriangleThreshold;
  std::size_t num_graphs = 500;
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 16;
  double edge_prob = 0.3;
  std::size_t threshold = 6;
  /// Defaults: constant features for the triangle task, degree one-hot for parity.
  std::optional<FeatureMode> features;
  std::size_t feature_dim = 0;  // 0 picks 1 (constant) or max_nodes (degree)

  void validate() const;
  FeatureMode feature_mode() const;
  std::size_t resolved_feature_dim() const;
};

SyntheticTask parse_synthetic_task(std::string_view name);
std::string_view synthetic_task_name(SyntheticTask task);
FeatureMode parse_feature_mode(std::string_view name);
std::string_view feature_mode_name(FeatureMode mode);

/// Erdos-Renyi graphs with exactly counted labels and a stratified 80/10/10 split.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

std::size_t count_triangles(const Graph& g);
std::size_t synthetic_label(const SyntheticSpec& spec, const Graph& g);

}  // namespace graphnas
