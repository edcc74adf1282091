#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "graphnas/errors.hpp"
#include "graphnas/graph.hpp"
#include "support.hpp"

using namespace graphnas;

namespace {

Graph path_graph(std::size_t n, std::size_t d = 1) {
  Graph g;
  g.node_features = Matrix(n, d, 1.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    g.edges.push_back({i, i + 1});
    g.edges.push_back({i + 1, i});
  }
  g.label = std::vector<BinaryTarget>{BinaryTarget::kPositive};
  return g;
}

std::string write_lines(const std::string& name, const std::vector<std::string>& lines) {
  const auto path = std::filesystem::path(graphnas::testing::scratch_dir(name)) / "graphs.jsonl";
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
  return path.string();
}

template <typename E>
std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST(Loader, KeepsFileOrder) {
  const auto path = write_lines("loader_order", {
      R"({"num_nodes":2,"node_feat":[[1],[2]],"edges":[[0,1],[1,0]],"edge_feat":null,"label":1})",
      R"({"num_nodes":3,"node_feat":[[3],[4],[5]],"edges":[],"edge_feat":null,"label":0})"});
  const Dataset d = load_dataset(path, TaskDescriptor{});
  ASSERT_EQ(d.graphs.size(), 2u);
  EXPECT_EQ(d.graphs[0].num_nodes(), 2u);
  EXPECT_EQ(d.graphs[1].node_features(2, 0), 5.0);
  EXPECT_EQ(d.splits.train, (IndexVec{0, 1}));
}

TEST(Loader, EdgeOutOfRangeNamesLine) {
  const auto path = write_lines("loader_range", {
      R"({"num_nodes":1,"node_feat":[[1]],"edges":[],"edge_feat":null,"label":1})",
      R"({"num_nodes":3,"node_feat":[[1],[1],[1]],"edges":[[0,5]],"edge_feat":null,"label":1})"});
  const std::string msg =
      error_of<ValidationError>([&] { load_dataset(path, TaskDescriptor{}); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(Loader, FractionalBinaryLabelIsRejected) {
  const auto path = write_lines("loader_label", {
      R"({"num_nodes":1,"node_feat":[[1]],"edges":[],"edge_feat":null,"label":0.5})"});
  EXPECT_THROW(load_dataset(path, TaskDescriptor{}), ValidationError);
}

TEST(Loader, MalformedJsonIsAParseErrorWithLine) {
  const auto path = write_lines("loader_json", {
      R"({"num_nodes":1,"node_feat":[[1]],"edges":[],"edge_feat":null,"label":1})",
      R"({"num_nodes":1,"node_feat":[[1]],)"});
  const std::string msg = error_of<ParseError>([&] { load_dataset(path, TaskDescriptor{}); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(Loader, InconsistentFeatureWidthIsRejected) {
  const auto path = write_lines("loader_width", {
      R"({"num_nodes":1,"node_feat":[[1]],"edges":[],"edge_feat":null,"label":1})",
      R"({"num_nodes":1,"node_feat":[[1,2]],"edges":[],"edge_feat":null,"label":1})"});
  EXPECT_THROW(load_dataset(path, TaskDescriptor{}), ValidationError);
}

TEST(Loader, MultiBinaryKeepsMissingTargets) {
  const auto path = write_lines("loader_multi", {
      R"({"num_nodes":1,"node_feat":[[1]],"edges":[],"edge_feat":null,"label":[1,null,0]})"});
  TaskDescriptor task{TaskType::kMultiBinary, 3, std::nullopt};
  const Dataset d = load_dataset(path, task);
  EXPECT_EQ(std::get<std::vector<BinaryTarget>>(d.graphs[0].label),
            (std::vector<BinaryTarget>{BinaryTarget::kPositive, BinaryTarget::kMissing,
                                       BinaryTarget::kNegative}));
}

TEST(Loader, AddsMissingReverseEdges) {
  const auto path = write_lines("loader_sym", {
      R"({"num_nodes":3,"node_feat":[[1],[1],[1]],"edges":[[0,1],[1,2],[2,1]],"edge_feat":[[1],[2],[2]],"label":1})"});
  const Dataset d = load_dataset(path, TaskDescriptor{});
  EXPECT_EQ(d.graphs[0].edges.size(), 4u);
  EXPECT_EQ(d.graphs[0].edge_features->rows, 4u);
}

TEST(Loader, SplitsFileIsValidated) {
  const std::string dir = graphnas::testing::scratch_dir("loader_splits");
  const auto path = write_lines("loader_splits_graphs", {
      R"({"num_nodes":1,"node_feat":[[1]],"edges":[],"edge_feat":null,"label":1})",
      R"({"num_nodes":1,"node_feat":[[1]],"edges":[],"edge_feat":null,"label":0})"});
  const std::string splits = dir + "/splits.json";
  std::ofstream(splits) << R"({"train":[0],"valid":[0,1],"test":[]})";
  TaskDescriptor task;
  task.splits_path = splits;
  EXPECT_THROW(load_dataset(path, task), ValidationError);
}

TEST(Loader, SaveThenLoadRoundTrips) {
  const Dataset d = graphnas::testing::random_dataset(7, 10, 3, 2);
  const std::string dir = graphnas::testing::scratch_dir("loader_roundtrip");
  save_dataset(d, dir + "/g.jsonl", dir + "/s.json");
  TaskDescriptor task;
  task.splits_path = dir + "/s.json";
  const Dataset back = load_dataset(dir + "/g.jsonl", task);
  ASSERT_EQ(back.graphs.size(), d.graphs.size());
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    EXPECT_EQ(back.graphs[i].node_features, d.graphs[i].node_features);
    EXPECT_EQ(back.graphs[i].edges.size(), d.graphs[i].edges.size());
    EXPECT_EQ(back.graphs[i].label, d.graphs[i].label);
  }
  EXPECT_EQ(back.splits, d.splits);
}

TEST(Batch, OffsetsAndGraphIds) {
  const std::vector<Graph> graphs = {path_graph(2), path_graph(3)};
  const GraphBatch b = batch_graphs(std::span<const Graph>(graphs));
  EXPECT_EQ(b.num_nodes, 5u);
  EXPECT_EQ(b.graph_ids, (IndexVec{0, 0, 1, 1, 1}));
  // First edge of the second graph is (0,1), shifted by two nodes.
  EXPECT_EQ(b.edges[2].src, 2u);
  EXPECT_EQ(b.edges[2].dst, 3u);
}

TEST(Batch, SingleGraphIsUnchanged) {
  const std::vector<Graph> graphs = {path_graph(4)};
  const GraphBatch b = batch_graphs(std::span<const Graph>(graphs));
  EXPECT_EQ(b.graph_ids, (IndexVec{0, 0, 0, 0}));
  EXPECT_EQ(b.node_features, graphs[0].node_features);
  EXPECT_EQ(b.edges.size(), graphs[0].edges.size());
}

TEST(Batch, MixedWidthsAreRejected) {
  const std::vector<Graph> graphs = {path_graph(2, 1), path_graph(2, 2)};
  EXPECT_THROW(batch_graphs(std::span<const Graph>(graphs)), ValidationError);
}

TEST(Batch, RoundTripReproducesEveryGraph) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Graph> graphs;
    const std::size_t count = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < count; ++i)
      graphs.push_back(graphnas::testing::random_graph(rng, 1, 7, 0.5, 3, 2));
    const GraphBatch b = batch_graphs(std::span<const Graph>(graphs));
    for (std::size_t i = 0; i < count; ++i) {
      const Graph g = b.graph(i);
      EXPECT_EQ(g.node_features, graphs[i].node_features);
      ASSERT_EQ(g.edges.size(), graphs[i].edges.size());
      for (std::size_t e = 0; e < g.edges.size(); ++e) {
        EXPECT_EQ(g.edges[e].src, graphs[i].edges[e].src);
        EXPECT_EQ(g.edges[e].dst, graphs[i].edges[e].dst);
      }
      EXPECT_EQ(g.edge_features, graphs[i].edge_features);
      EXPECT_EQ(g.label, graphs[i].label);
    }
  }
}

TEST(VirtualNode, ThreeNodePath) {
  const Graph g = add_virtual_node(path_graph(3));
  EXPECT_EQ(g.num_nodes(), 4u);
  EXPECT_EQ(g.edges.size(), 4u + 6u);
  for (std::size_t c = 0; c < g.feature_dim(); ++c) EXPECT_EQ(g.node_features(3, c), 0.0);
}

TEST(VirtualNode, SingleNode) {
  const Graph g = add_virtual_node(path_graph(1));
  EXPECT_EQ(g.num_nodes(), 2u);
  EXPECT_EQ(g.edges.size(), 2u);
}

TEST(VirtualNode, NotIdempotent) {
  EXPECT_EQ(add_virtual_node(add_virtual_node(path_graph(3))).num_nodes(), 5u);
}

TEST(VirtualNode, AddsOneNodeAndTwoEdgesPerNode) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Graph g = graphnas::testing::random_graph(rng, 1, 10, 0.4, 2, 1);
    const Graph v = add_virtual_node(g);
    EXPECT_EQ(v.num_nodes(), g.num_nodes() + 1);
    EXPECT_EQ(v.edges.size(), g.edges.size() + 2 * g.num_nodes());
    EXPECT_EQ(v.edge_features->rows, v.edges.size());
  }
}

TEST(Degrees, Examples) {
  Graph tri;
  tri.node_features = Matrix(3, 1, 1.0);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t v = 0; v < 3; ++v)
      if (u != v) tri.edges.push_back({u, v});
  EXPECT_EQ(compute_degrees(tri), (std::vector<std::size_t>{2, 2, 2}));

  const std::vector<Edge> star = {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {0, 3}, {3, 0}};
  EXPECT_EQ(compute_degrees(5, star), (std::vector<std::size_t>{3, 1, 1, 1, 0}));
}
