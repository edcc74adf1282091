#include "graphnas/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "graphnas/errors.hpp"

namespace graphnas {

using nlohmann::json;

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

Matrix parse_matrix(const json& j, const char* field, std::size_t line) {
  if (!j.is_array()) throw ParseError(at_line(line) + "'" + field + "' must be an array of rows");
  Matrix m;
  m.rows = j.size();
  for (std::size_t r = 0; r < j.size(); ++r) {
    const json& row = j[r];
    if (!row.is_array()) throw ParseError(at_line(line) + "'" + field + "' row is not an array");
    if (r == 0) {
      m.cols = row.size();
    } else if (row.size() != m.cols) {
      throw ValidationError(at_line(line) + "inconsistent widths in '" + field + "' (" +
                            std::to_string(row.size()) + " vs " + std::to_string(m.cols) + ")");
    }
    for (const json& v : row) {
      if (!v.is_number()) throw ParseError(at_line(line) + "non-numeric value in '" + field + "'");
      m.values.push_back(v.get<double>());
    }
  }
  return m;
}

BinaryTarget parse_binary_target(const json& v, std::size_t line) {
  if (v.is_null()) return BinaryTarget::kMissing;
  if (!v.is_number()) throw ParseError(at_line(line) + "binary label must be a number or null");
  const double x = v.get<double>();
  if (x == 0.0) return BinaryTarget::kNegative;
  if (x == 1.0) return BinaryTarget::kPositive;
  throw ValidationError(at_line(line) + "binary label " + v.dump() + " is not 0, 1 or null");
}

Label parse_label(const json& j, const TaskDescriptor& task, std::size_t line) {
  switch (task.type) {
    case TaskType::kBinary: {
      if (j.is_array()) {
        if (j.size() != 1)
          throw ValidationError(at_line(line) + "binary task expects a single label");
        return std::vector<BinaryTarget>{parse_binary_target(j[0], line)};
      }
      return std::vector<BinaryTarget>{parse_binary_target(j, line)};
    }
    case TaskType::kMultiBinary: {
      if (!j.is_array() || j.size() != task.num_tasks) {
        throw ValidationError(at_line(line) + "multi-binary task expects an array of " +
                              std::to_string(task.num_tasks) + " labels");
      }
      std::vector<BinaryTarget> targets;
      for (const json& v : j) targets.push_back(parse_binary_target(v, line));
      return targets;
    }
    case TaskType::kMultiClass: {
      if (!j.is_number()) throw ParseError(at_line(line) + "multi-class label must be a number");
      const double x = j.get<double>();
      if (x < 0 || x != std::floor(x) || x >= static_cast<double>(task.num_tasks)) {
        throw ValidationError(at_line(line) + "class label " + j.dump() + " outside [0, " +
                              std::to_string(task.num_tasks) + ")");
      }
      return static_cast<std::size_t>(x);
    }
  }
  throw ParseError(at_line(line) + "unknown task type");
}

void check_label(const Label& label, const TaskDescriptor& task) {
  if (task.type == TaskType::kMultiClass) {
    const auto* c = std::get_if<std::size_t>(&label);
    if (!c || *c >= task.num_tasks) throw ValidationError("class label outside task range");
    return;
  }
  const auto* t = std::get_if<std::vector<BinaryTarget>>(&label);
  if (!t || t->size() != task.output_width())
    throw ValidationError("binary label count does not match the task");
}

// Adds the reverse of every directed edge whose partner is absent.
void symmetrize(Graph& g) {
  std::set<std::pair<std::size_t, std::size_t>> present;
  for (const Edge& e : g.edges) present.emplace(e.src, e.dst);
  const std::size_t original = g.edges.size();
  for (std::size_t i = 0; i < original; ++i) {
    const Edge e = g.edges[i];
    if (e.src == e.dst || present.count({e.dst, e.src})) continue;
    present.emplace(e.dst, e.src);
    g.edges.push_back({e.dst, e.src});
    if (g.edge_features) {
      Matrix& ef = *g.edge_features;
      std::vector<double> row(ef.row(i).begin(), ef.row(i).end());
      ef.values.insert(ef.values.end(), row.begin(), row.end());
      ++ef.rows;
    }
  }
}

json label_to_json(const Label& label) {
  if (const auto* c = std::get_if<std::size_t>(&label)) return *c;
  const auto& targets = std::get<std::vector<BinaryTarget>>(label);
  if (targets.size() == 1 && targets[0] != BinaryTarget::kMissing)
    return static_cast<int>(targets[0]);
  json arr = json::array();
  for (BinaryTarget t : targets) {
    if (t == BinaryTarget::kMissing) {
      arr.push_back(nullptr);
    } else {
      arr.push_back(static_cast<int>(t));
    }
  }
  return arr;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (double v : m.row(r)) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

IndexVec parse_index_list(const json& j, const char* name) {
  if (!j.is_array()) throw ParseError(std::string("splits: '") + name + "' must be an array");
  IndexVec out;
  for (const json& v : j) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ParseError(std::string("splits: '") + name + "' holds a non-index value");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void Graph::validate() const {
  const std::size_t n = num_nodes();
  if (n == 0) throw ValidationError("graph has no nodes");
  if (node_features.values.size() != node_features.rows * node_features.cols)
    throw ValidationError("node feature storage does not match its shape");
  for (const Edge& e : edges) {
    if (e.src >= n || e.dst >= n) {
      throw ValidationError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                            ") out of range for " + std::to_string(n) + " nodes");
    }
  }
  if (edge_features && edge_features->rows != edges.size()) {
    throw ValidationError("edge_feat has " + std::to_string(edge_features->rows) +
                          " rows for " + std::to_string(edges.size()) + " edges");
  }
  if (const auto* targets = std::get_if<std::vector<BinaryTarget>>(&label)) {
    for (BinaryTarget t : *targets) {
      if (t != BinaryTarget::kNegative && t != BinaryTarget::kPositive &&
          t != BinaryTarget::kMissing)
        throw ValidationError("binary target outside {0, 1, missing}");
    }
  }
}

std::string_view task_type_name(TaskType type) {
  switch (type) {
    case TaskType::kBinary: return "binary";
    case TaskType::kMultiBinary: return "multi-binary";
    case TaskType::kMultiClass: return "multi-class";
  }
  return "unknown";
}

TaskType parse_task_type(std::string_view name) {
  if (name == "binary") return TaskType::kBinary;
  if (name == "multi-binary") return TaskType::kMultiBinary;
  if (name == "multi-class") return TaskType::kMultiClass;
  throw ConfigError("unknown task type '" + std::string(name) +
                    "' (expected binary, multi-binary or multi-class)");
}

std::size_t TaskDescriptor::output_width() const {
  return type == TaskType::kBinary ? 1 : num_tasks;
}

void TaskDescriptor::validate() const {
  if (type == TaskType::kMultiBinary && num_tasks == 0)
    throw ConfigError("multi-binary task needs at least one target");
  if (type == TaskType::kMultiClass && num_tasks < 2)
    throw ConfigError("multi-class task needs at least two classes");
}

std::string_view split_name(SplitName split) {
  switch (split) {
    case SplitName::kTrain: return "train";
    case SplitName::kValid: return "valid";
    case SplitName::kTest: return "test";
  }
  return "unknown";
}

const IndexVec& Dataset::split(SplitName name) const {
  switch (name) {
    case SplitName::kTrain: return splits.train;
    case SplitName::kValid: return splits.valid;
    case SplitName::kTest: return splits.test;
  }
  return splits.train;
}

void Dataset::validate() const {
  task.validate();
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const Graph& g = graphs[i];
    try {
      g.validate();
      check_label(g.label, task);
    } catch (const ValidationError& e) {
      throw ValidationError("graph " + std::to_string(i) + ": " + e.what());
    }
    if (g.feature_dim() != graphs.front().feature_dim() ||
        g.edge_feature_dim() != graphs.front().edge_feature_dim() ||
        g.edge_features.has_value() != graphs.front().edge_features.has_value()) {
      throw ValidationError("graph " + std::to_string(i) + ": feature widths differ from graph 0");
    }
  }
  std::vector<int> seen(graphs.size(), 0);
  for (const IndexVec* part : {&splits.train, &splits.valid, &splits.test}) {
    for (std::size_t idx : *part) {
      if (idx >= graphs.size())
        throw ValidationError("split index " + std::to_string(idx) + " out of range");
      if (seen[idx]++)
        throw ValidationError("graph " + std::to_string(idx) + " appears in more than one split");
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw ValidationError("graph " + std::to_string(i) + " is in no split");
  }
}

Graph parse_graph_record(std::string_view text, const TaskDescriptor& task, std::size_t line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(at_line(line) + "malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ParseError(at_line(line) + "record is not a JSON object");
  for (const char* key : {"num_nodes", "node_feat", "edges", "label"}) {
    if (!j.contains(key)) throw ParseError(at_line(line) + "missing field '" + key + "'");
  }
  if (!j["num_nodes"].is_number_integer() || j["num_nodes"].get<long long>() < 0)
    throw ParseError(at_line(line) + "'num_nodes' must be a non-negative integer");

  Graph g;
  const auto n = j["num_nodes"].get<std::size_t>();
  g.node_features = parse_matrix(j["node_feat"], "node_feat", line);
  if (g.node_features.rows != n) {
    throw ValidationError(at_line(line) + "node_feat has " + std::to_string(g.node_features.rows) +
                          " rows for " + std::to_string(n) + " nodes");
  }
  const json& edges = j["edges"];
  if (!edges.is_array()) throw ParseError(at_line(line) + "'edges' must be an array");
  for (const json& e : edges) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
      throw ParseError(at_line(line) + "edge must be a [src, dst] integer pair");
    const long long s = e[0].get<long long>();
    const long long d = e[1].get<long long>();
    if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(d) >= n) {
      throw ValidationError(at_line(line) + "edge (" + std::to_string(s) + "," +
                            std::to_string(d) + ") out of range for " + std::to_string(n) +
                            " nodes");
    }
    g.edges.push_back({static_cast<std::size_t>(s), static_cast<std::size_t>(d)});
  }
  if (j.contains("edge_feat") && !j["edge_feat"].is_null()) {
    g.edge_features = parse_matrix(j["edge_feat"], "edge_feat", line);
    if (g.edge_features->rows == 0 && !g.edges.empty())
      throw ValidationError(at_line(line) + "edge_feat is empty for a graph with edges");
  }
  g.label = parse_label(j["label"], task, line);
  try {
    g.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(at_line(line) + e.what());
  }
  symmetrize(g);
  return g;
}

std::string graph_to_json_line(const Graph& graph) {
  json j;
  j["num_nodes"] = graph.num_nodes();
  j["node_feat"] = matrix_to_json(graph.node_features);
  json edges = json::array();
  for (const Edge& e : graph.edges) edges.push_back({e.src, e.dst});
  j["edges"] = std::move(edges);
  j["edge_feat"] = graph.edge_features ? matrix_to_json(*graph.edge_features) : json(nullptr);
  j["label"] = label_to_json(graph.label);
  return j.dump();
}

Dataset load_dataset(const std::string& path, const TaskDescriptor& task) {
  task.validate();
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  Dataset ds;
  ds.task = task;
  std::string text;
  std::size_t line = 0;
  std::size_t feature_dim = 0;
  std::size_t edge_dim = 0;
  bool has_edge_features = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Graph g = parse_graph_record(text, task, line);
    if (ds.graphs.empty()) {
      feature_dim = g.feature_dim();
      edge_dim = g.edge_feature_dim();
      has_edge_features = g.edge_features.has_value();
    } else if (g.feature_dim() != feature_dim) {
      throw ValidationError(at_line(line) + "node feature width " +
                            std::to_string(g.feature_dim()) + " differs from " +
                            std::to_string(feature_dim));
    } else if (g.edge_features.has_value() != has_edge_features || g.edge_feature_dim() != edge_dim) {
      throw ValidationError(at_line(line) + "edge feature width differs from earlier records");
    }
    ds.graphs.push_back(std::move(g));
  }
  if (task.splits_path) {
    ds.splits = load_splits(*task.splits_path);
  } else {
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) ds.splits.train.push_back(i);
  }
  ds.validate();
  return ds;
}

Splits load_splits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open splits file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("splits file '" + path + "': " + e.what());
  }
  Splits s;
  if (j.contains("train")) s.train = parse_index_list(j["train"], "train");
  if (j.contains("valid")) s.valid = parse_index_list(j["valid"], "valid");
  if (j.contains("test")) s.test = parse_index_list(j["test"], "test");
  return s;
}

void save_dataset(const Dataset& dataset, const std::string& graphs_path,
                  const std::string& splits_path) {
  std::ofstream out(graphs_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + graphs_path + "'");
  for (const Graph& g : dataset.graphs) out << graph_to_json_line(g) << '\n';
  if (!out) throw ConfigError("failed writing '" + graphs_path + "'");

  std::ofstream sp(splits_path, std::ios::binary);
  if (!sp) throw ConfigError("cannot write '" + splits_path + "'");
  json j;
  j["train"] = dataset.splits.train;
  j["valid"] = dataset.splits.valid;
  j["test"] = dataset.splits.test;
  sp << j.dump() << '\n';
  if (!sp) throw ConfigError("failed writing '" + splits_path + "'");
}

// ---------------------------------------------------------------------------
// Batching

GraphBatch batch_graphs(std::span<const Graph* const> graphs) {
  if (graphs.empty()) throw ValidationError("batch_graphs: no graphs");
  const Graph& first = *graphs.front();
  GraphBatch b;
  b.num_graphs = graphs.size();
  std::size_t total_nodes = 0, total_edges = 0;
  for (const Graph* g : graphs) {
    if (g->feature_dim() != first.feature_dim() ||
        g->edge_features.has_value() != first.edge_features.has_value() ||
        g->edge_feature_dim() != first.edge_feature_dim()) {
      throw ValidationError("batch_graphs: graphs have mixed feature widths");
    }
    total_nodes += g->num_nodes();
    total_edges += g->edges.size();
  }
  b.num_nodes = total_nodes;
  b.node_features = Matrix(total_nodes, first.feature_dim());
  if (first.edge_features) b.edge_features = Matrix(total_edges, first.edge_feature_dim());
  b.edges.reserve(total_edges);
  b.graph_ids.reserve(total_nodes);
  b.node_offsets.push_back(0);
  b.edge_offsets.push_back(0);

  std::size_t node_base = 0, edge_base = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = *graphs[gi];
    std::copy(g.node_features.values.begin(), g.node_features.values.end(),
              b.node_features.values.begin() + node_base * first.feature_dim());
    for (const Edge& e : g.edges) b.edges.push_back({e.src + node_base, e.dst + node_base});
    if (g.edge_features) {
      std::copy(g.edge_features->values.begin(), g.edge_features->values.end(),
                b.edge_features->values.begin() + edge_base * first.edge_feature_dim());
    }
    b.graph_ids.insert(b.graph_ids.end(), g.num_nodes(), gi);
    b.labels.push_back(g.label);
    node_base += g.num_nodes();
    edge_base += g.edges.size();
    b.node_offsets.push_back(node_base);
    b.edge_offsets.push_back(edge_base);
  }

  IndexVec src, dst;
  src.reserve(total_edges + total_nodes);
  dst.reserve(total_edges + total_nodes);
  for (const Edge& e : b.edges) {
    src.push_back(e.src);
    dst.push_back(e.dst);
  }
  b.src = std::make_shared<const IndexVec>(src);
  b.dst = std::make_shared<const IndexVec>(dst);
  for (std::size_t v = 0; v < total_nodes; ++v) {
    src.push_back(v);
    dst.push_back(v);
  }
  b.src_with_loops = std::make_shared<const IndexVec>(std::move(src));
  b.dst_with_loops = std::make_shared<const IndexVec>(std::move(dst));
  b.graph_index = std::make_shared<const IndexVec>(b.graph_ids);

  b.degrees.reserve(total_nodes);
  for (const Graph* g : graphs) {
    auto deg = compute_degrees(*g);
    b.degrees.insert(b.degrees.end(), deg.begin(), deg.end());
  }
  b.in_degrees.assign(total_nodes, 0);
  for (const Edge& e : b.edges) ++b.in_degrees[e.dst];
  return b;
}

GraphBatch batch_graphs(std::span<const Graph> graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const Graph& g : graphs) ptrs.push_back(&g);
  return batch_graphs(std::span<const Graph* const>(ptrs));
}

Graph GraphBatch::graph(std::size_t g) const {
  const std::size_t n0 = node_offsets.at(g), n1 = node_offsets.at(g + 1);
  const std::size_t e0 = edge_offsets.at(g), e1 = edge_offsets.at(g + 1);
  Graph out;
  out.node_features = Matrix(n1 - n0, node_features.cols);
  std::copy(node_features.values.begin() + n0 * node_features.cols,
            node_features.values.begin() + n1 * node_features.cols,
            out.node_features.values.begin());
  for (std::size_t e = e0; e < e1; ++e) out.edges.push_back({edges[e].src - n0, edges[e].dst - n0});
  if (edge_features) {
    Matrix ef(e1 - e0, edge_features->cols);
    std::copy(edge_features->values.begin() + e0 * edge_features->cols,
              edge_features->values.begin() + e1 * edge_features->cols, ef.values.begin());
    out.edge_features = std::move(ef);
  }
  out.label = labels.at(g);
  return out;
}

// ---------------------------------------------------------------------------

Graph add_virtual_node(const Graph& g) {
  Graph out = g;
  const std::size_t n = g.num_nodes();
  const std::size_t v = n;
  out.node_features.rows = n + 1;
  out.node_features.values.resize((n + 1) * g.feature_dim(), 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    out.edges.push_back({v, u});
    out.edges.push_back({u, v});
  }
  if (out.edge_features) {
    out.edge_features->rows += 2 * n;
    out.edge_features->values.resize(out.edge_features->rows * out.edge_features->cols, 0.0);
  }
  return out;
}

std::vector<std::size_t> compute_degrees(std::size_t num_nodes, std::span<const Edge> edges) {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const Edge& e : edges) pairs.emplace(std::min(e.src, e.dst), std::max(e.src, e.dst));
  std::vector<std::size_t> deg(num_nodes, 0);
  for (const auto& [u, v] : pairs) {
    ++deg[u];
    if (v != u) ++deg[v];
  }
  return deg;
}

std::vector<std::size_t> compute_degrees(const Graph& g) {
  return compute_degrees(g.num_nodes(), g.edges);
}

}  // namespace graphnas
