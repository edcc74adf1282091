#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphnas/graph.hpp"
#include "graphnas/rng.hpp"
#include "graphnas/tensor.hpp"

namespace graphnas::testing {

/// Random undirected graph stored with both edge directions.
Graph random_graph(Rng& rng, std::size_t min_nodes, std::size_t max_nodes, double edge_prob,
                   std::size_t feature_dim, std::size_t edge_dim = 0);

/// Binary-task dataset of random graphs with random labels, split 60/20/20.
Dataset random_dataset(std::uint64_t seed, std::size_t num_graphs, std::size_t feature_dim,
                       std::size_t edge_dim = 0);

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, bool requires_grad = false);

/// Relabels nodes: node i becomes perm[i]. Edge order is kept.
Graph permute_nodes(const Graph& g, const std::vector<std::size_t>& perm);

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n);

/// Empty scratch directory unique to `name`.
std::string scratch_dir(const std::string& name);

double max_abs_diff(const Tensor& a, const Tensor& b);

std::string read_file(const std::string& path);

/// ROC AUC over every positive/negative pair: 1 for a win, 1/2 for a tie.
double brute_auc(const std::vector<double>& scores, const std::vector<int>& labels);
/// Average precision with ties ranked by input index, precisions summed in rank order.
double brute_ap(const std::vector<double>& scores, const std::vector<int>& labels);

struct CliRun {
  int exit_code = -1;
  std::string output;  // stdout, plus stderr when merged
};

/// Runs the graphnas executable with `args` through the shell.
CliRun run_cli(const std::string& args, bool merge_stderr = true);

}  // namespace graphnas::testing
