#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "graphnas/errors.hpp"
#include "graphnas/supernet.hpp"
#include "support.hpp"

using namespace graphnas;
using graphnas::testing::max_abs_diff;
using graphnas::testing::random_graph;

namespace {

std::vector<double> relaxed(std::vector<double> alpha, double lambda) {
  return arch_weights(std::span<const double>(alpha), lambda);
}

SupernetSpec full_spec(std::size_t blocks, std::size_t in_dim, std::size_t edge_dim) {
  SupernetSpec s = SupernetSpec::uniform(blocks, module_ops(Module::kFusion),
                                         module_ops(Module::kAggregation),
                                         module_ops(Module::kReadout));
  s.hidden = 4;
  s.input_dim = in_dim;
  s.edge_dim = edge_dim;
  s.output_dim = 2;
  return s;
}

template <class T>
T pick(Rng& rng, std::span<const T> items) {
  return items[uniform_index(rng, items.size())];
}

ArchEncoding random_encoding(Rng& rng, std::size_t blocks) {
  ArchEncoding a;
  for (std::size_t b = 1; b <= blocks; ++b) {
    BlockChoice c;
    do {
      c.select.clear();
      for (std::size_t j = 0; j < b; ++j) c.select.push_back(uniform_index(rng, 2) == 1);
    } while (std::none_of(c.select.begin(), c.select.end(), [](bool v) { return v; }));
    c.fusion = pick(rng, module_ops(Module::kFusion));
    c.aggregation = pick(rng, module_ops(Module::kAggregation));
    a.blocks.push_back(c);
  }
  a.readout = pick(rng, module_ops(Module::kReadout));
  return a;
}

GraphBatch random_batch(Rng& rng, std::size_t count, std::size_t in_dim, std::size_t edge_dim) {
  std::vector<Graph> gs;
  for (std::size_t i = 0; i < count; ++i) gs.push_back(random_graph(rng, 2, 7, 0.4, in_dim, edge_dim));
  return batch_graphs(std::span<const Graph>(gs));
}

}  // namespace

// ---------------------------------------------------------------------------
// Relaxation weights

TEST(ArchWeights, Examples) {
  const auto uniform = relaxed({0, 0}, 1.0);
  EXPECT_DOUBLE_EQ(uniform[0], 0.5);
  EXPECT_DOUBLE_EQ(uniform[1], 0.5);
  const auto two_thirds = relaxed({std::log(2.0), 0}, 1.0);
  EXPECT_NEAR(two_thirds[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(two_thirds[1], 1.0 / 3.0, 1e-15);
  EXPECT_GT(relaxed({1, 0}, 0.05)[0], 0.99);
}

TEST(ArchWeights, RejectsNonPositiveTemperature) {
  EXPECT_THROW(relaxed({1, 0}, 0.0), ConfigError);
  EXPECT_THROW(relaxed({1, 0}, -1.0), ConfigError);
  EXPECT_THROW(arch_weights(Tensor::zeros(1, 2), 0.0), ConfigError);
}

TEST(ArchWeights, TensorAndPlainVersionsAgree) {
  const Tensor alpha = Tensor::from(1, 3, {0.2, -1.0, 0.7});
  const auto plain = relaxed({0.2, -1.0, 0.7}, 0.3);
  const Tensor t = arch_weights(alpha, 0.3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(t.at(0, i), plain[i], 1e-15);
}

TEST(ArchWeights, SumToOneAndShiftInvariant) {
  Rng rng(51);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + uniform_index(rng, 8);
    std::vector<double> alpha(k);
    for (double& a : alpha) a = 20.0 * (uniform01(rng) - 0.5);
    const double lambda = 0.01 + 2.0 * uniform01(rng);
    const double shift = 100.0 * (uniform01(rng) - 0.5);
    const auto w = relaxed(alpha, lambda);
    double total = 0.0;
    for (double v : w) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
    std::vector<double> shifted = alpha;
    for (double& a : shifted) a += shift;
    const auto ws = relaxed(shifted, lambda);
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(w[i], ws[i], 1e-9);
  }
}

TEST(ArchWeights, LowerTemperatureSharpensMaximum) {
  Rng rng(52);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> alpha(4);
    for (double& a : alpha) a = 2.0 * uniform01(rng);
    alpha[uniform_index(rng, 4)] += 0.5;  // unique max
    double previous = 0.0;
    for (double lambda = 2.0; lambda > 0.05; lambda *= 0.7) {
      const auto w = relaxed(alpha, lambda);
      const double top = *std::max_element(w.begin(), w.end());
      EXPECT_GT(top, previous);
      previous = top;
    }
  }
}

// ---------------------------------------------------------------------------
// Mixed op

TEST(MixedOp, Examples) {
  const Tensor x = Tensor::from(1, 1, {2.0});
  const std::vector<Tensor> outs = {x, Tensor::zeros(1, 1)};
  EXPECT_DOUBLE_EQ(mixed_op(outs, Tensor::from(1, 2, {0.5, 0.5})).item(), 1.0);
  EXPECT_DOUBLE_EQ(mixed_op(outs, Tensor::from(1, 2, {1.0, 0.0})).item(), 2.0);
  const std::vector<Tensor> same = {x, x, x};
  EXPECT_NEAR(mixed_op(same, Tensor::full(1, 3, 1.0 / 3.0)).item(), 2.0, 1e-15);
}

TEST(MixedOp, ShapeErrors) {
  const std::vector<Tensor> outs = {Tensor::zeros(2, 2), Tensor::zeros(2, 3)};
  EXPECT_THROW(mixed_op(outs, Tensor::full(1, 2, 0.5)), ShapeError);
  const std::vector<Tensor> ok = {Tensor::zeros(2, 2), Tensor::zeros(2, 2)};
  EXPECT_THROW(mixed_op(ok, Tensor::full(1, 3, 0.5)), ShapeError);
  EXPECT_THROW(mixed_op(std::span<const Tensor>{}, Tensor::full(1, 1, 1.0)), ShapeError);
}

// ---------------------------------------------------------------------------
// Encoding

TEST(ArchEncoding, JsonRoundTrip) {
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const ArchEncoding a = random_encoding(rng, 1 + uniform_index(rng, 14));
    EXPECT_EQ(arch_from_json(arch_to_json(a)), a);
  }
}

TEST(ArchEncoding, JsonLayout) {
  ArchEncoding a;
  a.blocks.push_back(BlockChoice{{true}, OpKind::kSum, OpKind::kGin});
  a.readout = OpKind::kGlobalMean;
  EXPECT_EQ(nlohmann::ordered_json::parse(arch_to_json(a)).dump(),
            R"({"num_blocks":1,"blocks":[{"select":[1],"fusion":"SUM","agg":"GIN"}],"readout":"GLOBAL_MEAN"})");
}

TEST(ArchEncoding, ValidationErrors) {
  ArchEncoding a;
  EXPECT_THROW(a.validate(), ValidationError);
  a.blocks.push_back(BlockChoice{{true, true}, OpKind::kSum, OpKind::kGin});
  EXPECT_THROW(a.validate(), ValidationError);  // block 1 has one input
  a.blocks[0].select = {false};
  EXPECT_THROW(a.validate(), ValidationError);  // nothing selected
  a.blocks[0].select = {true};
  a.blocks[0].fusion = OpKind::kGcn;
  EXPECT_THROW(a.validate(), ValidationError);
  a.blocks[0].fusion = OpKind::kSum;
  a.readout = OpKind::kMax;
  EXPECT_THROW(a.validate(), ValidationError);
  a.readout = OpKind::kGlobalSum;
  EXPECT_NO_THROW(a.validate());

  EXPECT_THROW(arch_from_json("{"), ParseError);
  EXPECT_THROW(
      arch_from_json(
          R"({"num_blocks":2,"blocks":[{"select":[1],"fusion":"SUM","agg":"GIN"}],"readout":"GLOBAL_SUM"})"),
      ValidationError);
  EXPECT_THROW(
      arch_from_json(
          R"({"num_blocks":1,"blocks":[{"select":[1],"fusion":"SUM","agg":"SAGE"}],"readout":"GLOBAL_SUM"})"),
      Error);
  EXPECT_THROW(
      arch_from_json(
          R"({"num_blocks":1,"blocks":[{"select":[2],"fusion":"SUM","agg":"GIN"}],"readout":"GLOBAL_SUM"})"),
      ValidationError);
}

// ---------------------------------------------------------------------------
// Forward

// i = 1, GIN(eps=0, identity MLP) on the 2-cycle [1], [2] gives [3], [3].
TEST(Supernet, SingleBlockComposition) {
  ArchEncoding a;
  a.blocks.push_back(BlockChoice{{true}, OpKind::kSum, OpKind::kGin});
  a.readout = OpKind::kGlobalSum;
  SupernetSpec spec = SupernetSpec::for_architecture(a);
  spec.hidden = 1;
  spec.input_dim = 1;
  Supernet net(spec, 1);
  for (auto& [name, t] : net.weights().entries()) {
    Tensor leaf = t;
    auto v = leaf.mutable_data();
    if (name.find("w1") != std::string::npos || name.find("w2") != std::string::npos)
      std::fill(v.begin(), v.end(), 1.0);
    else if (name.find("GIN") != std::string::npos)
      std::fill(v.begin(), v.end(), 0.0);
  }
  Graph g;
  g.node_features = Matrix(2, 1);
  g.node_features.values = {1, 2};
  g.edges = {{0, 1}, {1, 0}};
  g.label = std::vector<BinaryTarget>{BinaryTarget::kPositive};
  const std::vector<Graph> gs = {g};
  const GraphBatch batch = batch_graphs(std::span<const Graph>(gs));
  const std::vector<Tensor> history = {Tensor::from(2, 1, {1, 2})};
  const Tensor out = net.block_forward(1, history, batch, DiscreteMode{a});
  EXPECT_DOUBLE_EQ(out.at(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(out.at(1, 0), 3.0);
}

TEST(Supernet, ZeroSelectionAggregatesZeroMatrix) {
  ArchEncoding a;
  a.blocks.push_back(BlockChoice{{true}, OpKind::kSum, OpKind::kGcn});
  a.readout = OpKind::kGlobalSum;
  SupernetSpec spec = SupernetSpec::for_architecture(a);
  spec.hidden = 3;
  spec.input_dim = 3;
  Supernet net(spec, 2);
  net.set_one_hot(a);
  Tensor sel = net.selection_alpha(1, 0);
  sel.mutable_data()[0] = 1e6;  // ZERO
  sel.mutable_data()[1] = -1e6;
  Rng rng(54);
  const GraphBatch batch = random_batch(rng, 1, 3, 0);
  const std::vector<Tensor> history = {graphnas::testing::random_tensor(rng, batch.num_nodes, 3)};
  const Tensor out = net.block_forward(1, history, batch, RelaxedMode{1.0});
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Supernet, OneHotRelaxedMatchesDiscrete) {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t blocks = 1 + uniform_index(rng, 4);
    const std::size_t edge_dim = trial % 2 == 0 ? 0 : 2;
    Supernet net(full_spec(blocks, 3, edge_dim), 60 + trial);
    const ArchEncoding a = random_encoding(rng, blocks);
    net.set_one_hot(a);
    const GraphBatch batch = random_batch(rng, 3, 3, edge_dim);
    const double lambda = 0.1 + uniform01(rng);
    const Tensor relaxed_out = net.forward(batch, RelaxedMode{lambda});
    const Tensor discrete_out = net.forward(batch, DiscreteMode{a});
    EXPECT_LT(max_abs_diff(relaxed_out, discrete_out), 1e-5) << arch_to_json(a);
  }
}

TEST(Supernet, DuplicatedGraphGivesIdenticalRows) {
  Rng rng(56);
  Supernet net(full_spec(3, 2, 0), 7);
  const Graph g = random_graph(rng, 3, 8, 0.5, 2);
  const std::vector<Graph> gs = {g, g};
  const Tensor out = net.forward(batch_graphs(std::span<const Graph>(gs)), RelaxedMode{0.7});
  for (std::size_t c = 0; c < out.cols(); ++c) EXPECT_EQ(out.at(0, c), out.at(1, c));
}

TEST(Supernet, RejectsWrongInputWidthAndForeignArchitecture) {
  Rng rng(57);
  Supernet net(full_spec(2, 3, 0), 8);
  EXPECT_THROW(net.forward(random_batch(rng, 1, 4, 0), RelaxedMode{1.0}), ShapeError);
  const ArchEncoding three = random_encoding(rng, 3);
  EXPECT_THROW(net.set_one_hot(three), ValidationError);
  EXPECT_THROW(net.forward(random_batch(rng, 1, 3, 0), DiscreteMode{three}), Error);
}

// ---------------------------------------------------------------------------
// Derivation

TEST(Derive, PerSiteArgmaxWithFirstIndexTies) {
  Supernet net(full_spec(2, 1, 0), 9);
  Tensor sel = net.selection_alpha(1, 0);
  sel.mutable_data()[0] = 0.1;
  sel.mutable_data()[1] = 2.3;
  // Every fusion/aggregation/readout logit is zero, so ties resolve to index 0.
  const ArchEncoding a = net.derive();
  EXPECT_TRUE(a.blocks[0].select[0]);
  EXPECT_EQ(a.blocks[0].fusion, module_ops(Module::kFusion)[0]);
  EXPECT_EQ(a.blocks[1].aggregation, module_ops(Module::kAggregation)[0]);
  EXPECT_EQ(a.readout, module_ops(Module::kReadout)[0]);
  EXPECT_NO_THROW(a.validate());
}

TEST(Derive, AllZeroBlockForcesLargestIdentityLogit) {
  Supernet net(full_spec(3, 1, 0), 10);
  const double identity_logits[] = {-0.5, 0.4, -0.1};
  for (std::size_t j = 0; j < 3; ++j) {
    Tensor sel = net.selection_alpha(3, j);
    sel.mutable_data()[0] = 1.0;
    sel.mutable_data()[1] = identity_logits[j];
  }
  const ArchEncoding a = net.derive();
  EXPECT_EQ(a.blocks[2].select, (std::vector<bool>{false, true, false}));
}

TEST(Derive, ConstantOffsetAtEverySiteKeepsChoice) {
  Rng rng(59);
  for (int trial = 0; trial < 30; ++trial) {
    Supernet net(full_spec(3, 1, 0), 40 + trial);
    for (auto& [name, t] : net.alphas().entries()) {
      Tensor leaf = t;
      for (double& v : leaf.mutable_data()) v = uniform01(rng);
    }
    const ArchEncoding before = net.derive();
    for (auto& [name, t] : net.alphas().entries()) {
      Tensor leaf = t;
      const double c = 10.0 * (uniform01(rng) - 0.5);
      for (double& v : leaf.mutable_data()) v += c;
    }
    // Selection fallback compares IDENTITY logits across sites, so it can move;
    // every other site must keep its choice.
    const ArchEncoding after = net.derive();
    for (std::size_t b = 0; b < 3; ++b) {
      EXPECT_EQ(before.blocks[b].fusion, after.blocks[b].fusion);
      EXPECT_EQ(before.blocks[b].aggregation, after.blocks[b].aggregation);
    }
    EXPECT_EQ(before.readout, after.readout);
  }
}

TEST(Derive, OneHotLogitsRecoverEncoding) {
  Rng rng(60);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t blocks = 1 + uniform_index(rng, 5);
    Supernet net(full_spec(blocks, 1, 0), trial);
    const ArchEncoding a = random_encoding(rng, blocks);
    net.set_one_hot(a, 3.0);
    EXPECT_EQ(net.derive(), a);
  }
}
