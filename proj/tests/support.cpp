#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>

#include <sys/wait.h>
#include <unistd.h>

namespace graphnas::testing {

Graph random_graph(Rng& rng, std::size_t min_nodes, std::size_t max_nodes, double edge_prob,
                   std::size_t feature_dim, std::size_t edge_dim) {
  Graph g;
  const std::size_t n = min_nodes + uniform_index(rng, max_nodes - min_nodes + 1);
  g.node_features = Matrix(n, feature_dim);
  for (double& x : g.node_features.values) x = 2.0 * uniform01(rng) - 1.0;
  Matrix ef(0, edge_dim);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (uniform01(rng) >= edge_prob) continue;
      g.edges.push_back({u, v});
      g.edges.push_back({v, u});
      if (edge_dim > 0) {
        std::vector<double> f(edge_dim);
        for (double& x : f) x = uniform01(rng);
        ef.values.insert(ef.values.end(), f.begin(), f.end());
        ef.values.insert(ef.values.end(), f.begin(), f.end());
        ef.rows += 2;
      }
    }
  }
  if (edge_dim > 0) g.edge_features = ef;
  g.label = std::vector<BinaryTarget>{uniform01(rng) < 0.5 ? BinaryTarget::kNegative
                                                           : BinaryTarget::kPositive};
  return g;
}

Dataset random_dataset(std::uint64_t seed, std::size_t num_graphs, std::size_t feature_dim,
                       std::size_t edge_dim) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < num_graphs; ++i)
    d.graphs.push_back(random_graph(rng, 3, 8, 0.4, feature_dim, edge_dim));
  // Guarantee both classes in every split.
  for (std::size_t i = 0; i < num_graphs; ++i) {
    d.graphs[i].label = std::vector<BinaryTarget>{i % 2 == 0 ? BinaryTarget::kNegative
                                                             : BinaryTarget::kPositive};
    const std::size_t slot = (i / 2) % 5;
    (slot < 3 ? d.splits.train : slot == 3 ? d.splits.valid : d.splits.test).push_back(i);
  }
  return d;
}

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, bool requires_grad) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return Tensor::from(rows, cols, std::move(v), requires_grad);
}

Graph permute_nodes(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph out = g;
  const std::size_t d = g.feature_dim();
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    for (std::size_t c = 0; c < d; ++c) out.node_features(perm[i], c) = g.node_features(i, c);
  for (Edge& e : out.edges) e = Edge{perm[e.src], perm[e.dst]};
  return out;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  graphnas::shuffle(p.begin(), p.end(), rng);
  return p;
}

std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "graphnas_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

double brute_ap(const std::vector<double>& s, const std::vector<int>& y) {
  auto ahead = [&](std::size_t j, std::size_t i) { return s[j] > s[i] || (s[j] == s[i] && j < i); };
  std::map<std::size_t, double> by_rank;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    std::size_t rank = 1, hits = 1;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!ahead(j, i)) continue;
      ++rank;
      if (y[j] == 1) ++hits;
    }
    by_rank[rank] = static_cast<double>(hits) / static_cast<double>(rank);
  }
  double total = 0.0;
  for (const auto& [rank, p] : by_rank) total += p;
  return total / static_cast<double>(by_rank.size());
}

CliRun run_cli(const std::string& args, bool merge_stderr) {
  const auto log = std::filesystem::temp_directory_path() /
                   ("graphnas_cli_" + std::to_string(::getpid()) + ".log");
  const std::string command = std::string(GRAPHNAS_CLI_PATH) + " " + args + " > " + log.string() +
                              (merge_stderr ? " 2>&1" : " 2>/dev/null");
  const int status = std::system(command.c_str());
  CliRun run;
  run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  run.output = read_file(log.string());
  std::filesystem::remove(log);
  return run;
}

}  // namespace graphnas::testing
