#include "graphnas/synthetic.hpp"

#include <algorithm>
#include <set>

#include "graphnas/errors.hpp"
#include "graphnas/rng.hpp"

namespace graphnas {

void SyntheticSpec::validate() const {
  if (num_graphs < 10) throw ConfigError("synthetic: num_graphs must be at least 10");
  if (min_nodes < 1 || min_nodes > max_nodes)
    throw ConfigError("synthetic: need 1 <= min_nodes <= max_nodes");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0))
    throw ConfigError("synthetic: edge_prob must lie in [0, 1]");
  if (features && *features == FeatureMode::kDegree && feature_dim == 1)
    throw ConfigError("synthetic: degree features need feature_dim >= 2");
}

FeatureMode SyntheticSpec::feature_mode() const {
  if (features) return *features;
  return task == SyntheticTask::kTriangleThreshold ? FeatureMode::kConstant : FeatureMode::kDegree;
}

std::size_t SyntheticSpec::resolved_feature_dim() const {
  if (feature_dim > 0) return feature_dim;
  return feature_mode() == FeatureMode::kConstant ? 1 : max_nodes;
}

SyntheticTask parse_synthetic_task(std::string_view name) {
  if (name == "triangle-threshold") return SyntheticTask::kTriangleThreshold;
  if (name == "degree-parity") return SyntheticTask::kDegreeParity;
  throw ConfigError("unknown synthetic task '" + std::string(name) +
                    "' (expected triangle-threshold or degree-parity)");
}

std::string_view synthetic_task_name(SyntheticTask task) {
  return task == SyntheticTask::kTriangleThreshold ? "triangle-threshold" : "degree-parity";
}

FeatureMode parse_feature_mode(std::string_view name) {
  if (name == "constant") return FeatureMode::kConstant;
  if (name == "degree") return FeatureMode::kDegree;
  throw ConfigError("unknown feature mode '" + std::string(name) + "' (expected constant or degree)");
}

std::string_view feature_mode_name(FeatureMode mode) {
  return mode == FeatureMode::kConstant ? "constant" : "degree";
}

std::size_t count_triangles(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (const Edge& e : g.edges) {
    if (e.src == e.dst) continue;
    adj[e.src][e.dst] = adj[e.dst][e.src] = 1;
  }
  std::size_t count = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      if (!adj[a][b]) continue;
      for (std::size_t c = b + 1; c < n; ++c) count += adj[a][c] && adj[b][c];
    }
  return count;
}

std::size_t synthetic_label(const SyntheticSpec& spec, const Graph& g) {
  if (spec.task == SyntheticTask::kTriangleThreshold)
    return count_triangles(g) >= spec.threshold ? 1 : 0;
  const auto deg = compute_degrees(g);
  const auto odd = static_cast<std::size_t>(
      std::count_if(deg.begin(), deg.end(), [](std::size_t d) { return d % 2 == 1; }));
  return 2 * odd >= deg.size() ? 1 : 0;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(sub_seed(seed, "synthetic.graphs"));
  const FeatureMode mode = spec.feature_mode();
  const std::size_t width = spec.resolved_feature_dim();

  Dataset ds;
  ds.task = TaskDescriptor{TaskType::kBinary, 1, std::nullopt};
  ds.graphs.reserve(spec.num_graphs);
  for (std::size_t gi = 0; gi < spec.num_graphs; ++gi) {
    const std::size_t n =
        spec.min_nodes + uniform_index(rng, spec.max_nodes - spec.min_nodes + 1);
    Graph g;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v) {
        if (uniform01(rng) < spec.edge_prob) {
          g.edges.push_back({u, v});
          g.edges.push_back({v, u});
        }
      }
    g.node_features = Matrix(n, width, mode == FeatureMode::kConstant ? 1.0 : 0.0);
    if (mode == FeatureMode::kDegree) {
      const auto deg = compute_degrees(n, g.edges);
      for (std::size_t u = 0; u < n; ++u) g.node_features(u, std::min(deg[u], width - 1)) = 1.0;
    }
    g.label = std::vector<BinaryTarget>{synthetic_label(spec, g) ? BinaryTarget::kPositive
                                                                 : BinaryTarget::kNegative};
    ds.graphs.push_back(std::move(g));
  }

  // Stratify: order by (class, random rank), then deal positions 0-7 of every
  // run of ten to train, 8 to valid and 9 to test.
  Rng split_rng(sub_seed(seed, "synthetic.splits"));
  std::vector<std::size_t> order(spec.num_graphs);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order.begin(), order.end(), split_rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& la = std::get<std::vector<BinaryTarget>>(ds.graphs[a].label)[0];
    const auto& lb = std::get<std::vector<BinaryTarget>>(ds.graphs[b].label)[0];
    return la < lb;
  });
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t slot = pos % 10;
    (slot < 8 ? ds.splits.train : slot == 8 ? ds.splits.valid : ds.splits.test).push_back(order[pos]);
  }
  std::sort(ds.splits.train.begin(), ds.splits.train.end());
  std::sort(ds.splits.valid.begin(), ds.splits.valid.end());
  std::sort(ds.splits.test.begin(), ds.splits.test.end());
  ds.validate();
  return ds;
}

}  // namespace graphnas
