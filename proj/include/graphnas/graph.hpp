#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "graphnas/tensor.hpp"

namespace graphnas {

/// Plain row-major matrix used for immutable graph data.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  Tensor to_tensor() const { return Tensor::from(rows, cols, values); }

  bool operator==(const Matrix&) const = default;
};

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  bool operator==(const Edge&) const = default;
};

/// Binary target with an explicit missing marker; never a silent zero.
enum class BinaryTarget : std::int8_t { kNegative = 0, kPositive = 1, kMissing = -1 };

/// A class index (multi-class tasks) or one target per binary task.
using Label = std::variant<std::size_t, std::vector<BinaryTarget>>;

struct Graph {
  Matrix node_features;  // N x d_in
  std::vector<Edge> edges;
  std::optional<Matrix> edge_features;  // E x d_e
  Label label = std::size_t{0};

  std::size_t num_nodes() const { return node_features.rows; }
  std::size_t feature_dim() const { return node_features.cols; }
  std::size_t edge_feature_dim() const { return edge_features ? edge_features->cols : 0; }

  /// Throws ValidationError when an invariant is broken.
  void validate() const;
  bool operator==(const Graph&) const = default;
};

enum class TaskType { kBinary, kMultiBinary, kMultiClass };

std::string_view task_type_name(TaskType type);
TaskType parse_task_type(std::string_view name);

struct TaskDescriptor {
  TaskType type = TaskType::kBinary;
  /// K binary targets, or C classes. Ignored (treated as 1) for kBinary.
  std::size_t num_tasks = 1;
  /// Optional splits file. Without one every graph lands in the train split.
  std::optional<std::string> splits_path;

  /// Width of the classifier head.
  std::size_t output_width() const;
  void validate() const;
};

struct Splits {
  IndexVec train;
  IndexVec valid;
  IndexVec test;
  bool operator==(const Splits&) const = default;
};

enum class SplitName { kTrain, kValid, kTest };
std::string_view split_name(SplitName split);

struct Dataset {
  std::vector<Graph> graphs;
  TaskDescriptor task;
  Splits splits;

  const IndexVec& split(SplitName name) const;
  /// Checks every graph, label domains, shared feature widths and split coverage.
  void validate() const;
};

/// Reads a JSON-lines graph file (one graph per line).
Dataset load_dataset(const std::string& path, const TaskDescriptor& task);
Splits load_splits(const std::string& path);

/// Parses one JSON-lines record; `line` is used in error messages.
Graph parse_graph_record(std::string_view text, const TaskDescriptor& task, std::size_t line);
std::string graph_to_json_line(const Graph& graph);

/// Writes the graphs as JSON-lines and the splits as JSON.
void save_dataset(const Dataset& dataset, const std::string& graphs_path,
                  const std::string& splits_path);

/// Block-diagonal union of several graphs plus the indices message passing needs.
struct GraphBatch {
  std::size_t num_nodes = 0;
  std::size_t num_graphs = 0;
  Matrix node_features;
  std::vector<Edge> edges;
  std::optional<Matrix> edge_features;
  IndexVec graph_ids;  // node -> graph position
  std::vector<Label> labels;
  IndexVec node_offsets;  // num_graphs + 1 entries
  IndexVec edge_offsets;  // num_graphs + 1 entries

  IndexPtr src;
  IndexPtr dst;
  /// Edge lists with one self loop per node appended after the real edges.
  IndexPtr src_with_loops;
  IndexPtr dst_with_loops;
  IndexPtr graph_index;
  /// compute_degrees per node, batch-wide.
  std::vector<std::size_t> degrees;
  /// Number of edges whose destination is each node.
  std::vector<std::size_t> in_degrees;

  /// Reconstructs graph `g` exactly as it was passed to batch_graphs.
  Graph graph(std::size_t g) const;
};

GraphBatch batch_graphs(std::span<const Graph* const> graphs);
GraphBatch batch_graphs(std::span<const Graph> graphs);

/// Appends a zero-feature node connected in both directions to every node.
Graph add_virtual_node(const Graph& g);

/// Undirected degree: a stored (u,v)/(v,u) pair counts once.
std::vector<std::size_t> compute_degrees(const Graph& g);
std::vector<std::size_t> compute_degrees(std::size_t num_nodes, std::span<const Edge> edges);

}  // namespace graphnas
