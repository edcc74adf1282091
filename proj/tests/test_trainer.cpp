#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "graphnas/errors.hpp"
#include "graphnas/synthetic.hpp"
#include "graphnas/trainer.hpp"
#include "support.hpp"

using namespace graphnas;
namespace fs = std::filesystem;

namespace {

ArchEncoding one_block(OpKind agg, OpKind readout = OpKind::kGlobalMean) {
  ArchEncoding a;
  a.blocks.push_back(BlockChoice{{true}, OpKind::kSum, agg});
  a.readout = readout;
  return a;
}

ArchEncoding two_blocks() {
  ArchEncoding a;
  a.blocks.push_back(BlockChoice{{true}, OpKind::kConcat, OpKind::kGcn});
  a.blocks.push_back(BlockChoice{{true, true}, OpKind::kLstm, OpKind::kGen});
  a.readout = OpKind::kGlobalSum;
  return a;
}

Dataset parity_dataset() {
  SyntheticSpec spec;
  spec.task = SyntheticTask::kDegreeParity;
  spec.num_graphs = 200;
  return generate_synthetic(spec, 11);
}

// Fraction of nodes whose one-hot degree slot is odd.
double odd_fraction(const Graph& g) {
  double odd = 0.0;
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    for (std::size_t k = 1; k < g.feature_dim(); k += 2) odd += g.node_features.values[v * g.feature_dim() + k];
  return odd / static_cast<double>(g.num_nodes());
}

double binary_label(const Graph& g) {
  return std::get<std::vector<BinaryTarget>>(g.label)[0] == BinaryTarget::kPositive ? 1.0 : 0.0;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

// Logistic regression on one pooled degree feature, fitted by gradient descent.
TEST(Trainer, DegreeParityIsLinearlyDecidable) {
  const Dataset d = parity_dataset();
  double w = 0.0, b = 0.0;
  for (int it = 0; it < 5000; ++it) {
    double gw = 0.0, gb = 0.0;
    for (std::size_t i : d.splits.train) {
      const double x = odd_fraction(d.graphs[i]);
      const double p = 1.0 / (1.0 + std::exp(-(w * x + b)));
      gw += (p - binary_label(d.graphs[i])) * x;
      gb += p - binary_label(d.graphs[i]);
    }
    w -= 2.0 * gw / static_cast<double>(d.splits.train.size());
    b -= 2.0 * gb / static_cast<double>(d.splits.train.size());
  }
  double correct = 0.0;
  for (std::size_t i : d.splits.valid)
    correct += ((w * odd_fraction(d.graphs[i]) + b > 0.0) ? 1.0 : 0.0) == binary_label(d.graphs[i]);
  EXPECT_GT(correct / static_cast<double>(d.splits.valid.size()), 0.9);
}

TEST(Trainer, OneBlockLearnsDegreeParity) {
  const Dataset d = parity_dataset();
  HParams hp;
  hp.epochs = 50;
  hp.metric = Metric::kAccuracy;
  const TrainResult r = train_discrete(one_block(OpKind::kGcn), d, hp);
  EXPECT_GT(r.report(SplitName::kValid)->value, 0.9);
  EXPECT_EQ(r.history.size(), 50u);
}

TEST(Trainer, BestEpochIsEarliestMaximum) {
  const Dataset d = graphnas::testing::random_dataset(3, 40, 3);
  HParams hp;
  hp.epochs = 6;
  hp.hidden = 8;
  const TrainResult r = train_discrete(two_blocks(), d, hp);
  std::size_t best = 0;
  for (std::size_t e = 1; e < r.history.size(); ++e)
    if (*r.history[e].valid_metric > *r.history[best].valid_metric) best = e;
  EXPECT_EQ(r.best_epoch, r.history[best].epoch);
  // The restored model reproduces the logged valid metric.
  const EvalReport again = evaluate(*r.model, DiscreteMode{r.arch}, d, SplitName::kValid,
                                    r.report(SplitName::kValid)->metric);
  EXPECT_EQ(again.value, *r.history[best].valid_metric);
}

TEST(Trainer, ZeroEpochsEvaluatesInitialModel) {
  const Dataset d = graphnas::testing::random_dataset(4, 30, 3);
  HParams hp;
  hp.epochs = 0;
  hp.hidden = 8;
  const TrainResult a = train_discrete(two_blocks(), d, hp);
  ASSERT_EQ(a.history.size(), 1u);
  EXPECT_EQ(a.history[0].epoch, 0u);
  EXPECT_EQ(a.best_epoch, 0u);
  ASSERT_EQ(a.reports.size(), 3u);
  for (const EvalReport& r : a.reports) {
    const EvalReport fresh = evaluate(*a.model, DiscreteMode{a.arch}, d, r.split, r.metric);
    EXPECT_EQ(fresh.value, r.value);
    EXPECT_EQ(fresh.loss, r.loss);
  }
  // One epoch of training moves the weights away from the zero-epoch ones.
  hp.epochs = 1;
  const TrainResult b = train_discrete(two_blocks(), d, hp);
  const auto wa = a.model->weights().tensors(), wb = b.model->weights().tensors();
  double diff = 0.0;
  for (std::size_t i = 0; i < wa.size(); ++i) diff += graphnas::testing::max_abs_diff(wa[i], wb[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(Trainer, SameSeedGivesIdenticalReports) {
  const Dataset d = graphnas::testing::random_dataset(5, 40, 3, 2);
  HParams hp;
  hp.epochs = 3;
  hp.hidden = 8;
  hp.dropout = 0.2;
  const TrainResult a = train_discrete(two_blocks(), d, hp);
  const TrainResult b = train_discrete(two_blocks(), d, hp);
  EXPECT_EQ(report_to_json(a.reports, a.best_epoch), report_to_json(b.reports, b.best_epoch));
  hp.seed = 1;
  const TrainResult c = train_discrete(two_blocks(), d, hp);
  EXPECT_NE(report_to_json(a.reports, a.best_epoch), report_to_json(c.reports, c.best_epoch));
}

TEST(Trainer, MultiClassAndMultiBinaryTasks) {
  Rng rng(6);
  Dataset mc;
  mc.task = TaskDescriptor{TaskType::kMultiClass, 3, std::nullopt};
  Dataset mb;
  mb.task = TaskDescriptor{TaskType::kMultiBinary, 2, std::nullopt};
  for (std::size_t i = 0; i < 30; ++i) {
    Graph g = graphnas::testing::random_graph(rng, 3, 6, 0.5, 2);
    g.label = std::size_t{i % 3};
    mc.graphs.push_back(g);
    const BinaryTarget second = i % 4 == 0 ? BinaryTarget::kMissing
                                           : (i % 2 ? BinaryTarget::kPositive : BinaryTarget::kNegative);
    g.label = std::vector<BinaryTarget>{i % 3 ? BinaryTarget::kPositive : BinaryTarget::kNegative, second};
    mb.graphs.push_back(g);
    (i < 20 ? mc.splits.train : mc.splits.valid).push_back(i);
  }
  mb.splits = mc.splits;
  HParams hp;
  hp.epochs = 2;
  hp.hidden = 4;
  const TrainResult a = train_discrete(one_block(OpKind::kGin), mc, hp);
  EXPECT_EQ(a.report(SplitName::kValid)->metric, Metric::kAccuracy);
  EXPECT_EQ(a.report(SplitName::kTest), nullptr);
  const TrainResult b = train_discrete(one_block(OpKind::kMf), mb, hp);
  EXPECT_EQ(b.report(SplitName::kValid)->metric, Metric::kAveragePrecision);
  EXPECT_EQ(b.report(SplitName::kValid)->per_task.size(), 2u);
  hp.metric = Metric::kRocAuc;
  EXPECT_THROW(train_discrete(one_block(OpKind::kGin), mc, hp), ConfigError);
}

TEST(Trainer, HParamErrors) {
  const Dataset d = graphnas::testing::random_dataset(7, 20, 2);
  HParams hp;
  hp.learning_rate = 0.0;
  EXPECT_THROW(train_discrete(one_block(OpKind::kGin), d, hp), ConfigError);
  hp = HParams{};
  hp.dropout = 1.0;
  EXPECT_THROW(train_discrete(one_block(OpKind::kGin), d, hp), ConfigError);
  hp = HParams{};
  Dataset empty_train = d;
  empty_train.splits.train.clear();
  EXPECT_THROW(train_discrete(one_block(OpKind::kGin), empty_train, hp), ValidationError);
}

TEST(Trainer, VirtualNodesAddOneNodePerGraph) {
  const Dataset d = graphnas::testing::random_dataset(8, 10, 2);
  const Dataset v = with_virtual_nodes(d);
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    EXPECT_EQ(v.graphs[i].num_nodes(), d.graphs[i].num_nodes() + 1);
    EXPECT_EQ(v.graphs[i].label, d.graphs[i].label);
  }
  HParams hp;
  hp.epochs = 1;
  hp.hidden = 4;
  hp.virtual_node = true;
  EXPECT_NO_THROW(train_discrete(one_block(OpKind::kGat), d, hp));
}

// ---------------------------------------------------------------------------
// Model files

TEST(ModelFiles, RoundTripReproducesLogits) {
  const Dataset d = graphnas::testing::random_dataset(9, 20, 3, 2);
  HParams hp;
  hp.epochs = 2;
  hp.hidden = 6;
  const TrainResult r = train_discrete(two_blocks(), d, hp);
  const std::string dir = graphnas::testing::scratch_dir("model_round_trip");
  const std::string bin = dir + "/model.bin", manifest = dir + "/model.manifest.json";
  save_model(*r.model, ModelInfo{r.arch, r.model->spec(), d.task, false}, bin, manifest);
  EXPECT_EQ(fs::file_size(bin), r.model->weights().num_values() * sizeof(double));

  const LoadedModel m = load_model(bin, manifest);
  EXPECT_EQ(m.info.arch, r.arch);
  const auto batches = make_batches(d, d.splits.valid, 8);
  for (const GraphBatch& b : batches) {
    EXPECT_EQ(graphnas::testing::max_abs_diff(r.model->forward(b, DiscreteMode{r.arch}),
                                              m.model->forward(b, DiscreteMode{m.info.arch})),
              0.0);
  }
  // Saving the loaded model reproduces both files byte for byte.
  save_model(*m.model, m.info, dir + "/again.bin", dir + "/again.json");
  EXPECT_EQ(read_file(bin), read_file(dir + "/again.bin"));
  EXPECT_EQ(read_file(manifest), read_file(dir + "/again.json"));
}

TEST(ModelFiles, CorruptFilesAreRejected) {
  const Dataset d = graphnas::testing::random_dataset(10, 20, 3);
  HParams hp;
  hp.epochs = 0;
  hp.hidden = 4;
  const TrainResult r = train_discrete(one_block(OpKind::kExpC), d, hp);
  const std::string dir = graphnas::testing::scratch_dir("model_corrupt");
  const std::string bin = dir + "/model.bin", manifest = dir + "/model.manifest.json";
  save_model(*r.model, ModelInfo{r.arch, r.model->spec(), d.task, false}, bin, manifest);
  const std::string good = read_file(bin);

  std::ofstream(bin, std::ios::binary) << good.substr(0, good.size() - 8);
  EXPECT_THROW(load_model(bin, manifest), ValidationError);
  std::ofstream(bin, std::ios::binary) << good << "x";
  EXPECT_THROW(load_model(bin, manifest), ValidationError);
  std::ofstream(bin, std::ios::binary) << good;
  EXPECT_NO_THROW(load_model(bin, manifest));

  const std::string text = read_file(manifest);
  std::string renamed = text;
  renamed.replace(renamed.find("EXPC.expand"), 11, "EXPC.expanD");
  std::ofstream(manifest) << renamed;
  EXPECT_THROW(load_model(bin, manifest), ValidationError);
  std::ofstream(manifest) << "{";
  EXPECT_THROW(load_model(bin, manifest), ParseError);
  EXPECT_THROW(load_model(dir + "/missing.bin", dir + "/missing.json"), ParseError);
}

TEST(ModelFiles, InputWidthMismatchIsAnError) {
  const Dataset d = graphnas::testing::random_dataset(11, 20, 3);
  HParams hp;
  hp.epochs = 0;
  hp.hidden = 4;
  const TrainResult r = train_discrete(one_block(OpKind::kGcn), d, hp);
  const Dataset wider = graphnas::testing::random_dataset(12, 20, 5);
  EXPECT_THROW(evaluate(*r.model, DiscreteMode{r.arch}, wider, SplitName::kValid, Metric::kRocAuc),
               ShapeError);
}
