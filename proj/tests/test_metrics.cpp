#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "graphnas/errors.hpp"
#include "graphnas/grad_check.hpp"
#include "graphnas/metrics.hpp"
#include "graphnas/rng.hpp"
#include "support.hpp"

using namespace graphnas;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores drawn from a small grid so ties are common; both classes present.
Instance random_instance(Rng& rng) {
  Instance inst;
  const std::size_t n = 2 + uniform_index(rng, 11);
  do {
    inst.scores.clear();
    inst.labels.clear();
    for (std::size_t i = 0; i < n; ++i) {
      inst.scores.push_back(static_cast<double>(uniform_index(rng, 5)) * 0.25 - 0.3);
      inst.labels.push_back(static_cast<int>(uniform_index(rng, 2)));
    }
  } while (std::count(inst.labels.begin(), inst.labels.end(), 1) == 0 ||
           std::count(inst.labels.begin(), inst.labels.end(), 0) == 0);
  return inst;
}

double auc(std::vector<double> s, std::vector<int> y) { return roc_auc(s, y); }
double ap(std::vector<double> s, std::vector<int> y) { return average_precision(s, y); }

}  // namespace

// ---------------------------------------------------------------------------
// Losses

TEST(BceMasked, Examples) {
  const std::vector<int> one = {1};
  EXPECT_NEAR(bce_masked(Tensor::scalar(0.0), one).item(), std::log(2.0), 1e-15);
  const std::vector<int> masked = {1, -1};
  EXPECT_NEAR(bce_masked(Tensor::from(1, 2, {0.0, 5.0}), masked).item(), std::log(2.0), 1e-15);
  const double big = bce_masked(Tensor::scalar(50.0), one).item();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_LT(big, 1e-20);
  const std::vector<int> zero = {0};
  EXPECT_NEAR(bce_masked(Tensor::scalar(-800.0), zero).item(), 0.0, 1e-300);
  EXPECT_NEAR(bce_masked(Tensor::scalar(800.0), zero).item(), 800.0, 1e-9);
}

TEST(BceMasked, Errors) {
  const std::vector<int> missing = {-1, -1};
  EXPECT_THROW(bce_masked(Tensor::zeros(1, 2), missing), ValidationError);
  const std::vector<int> short_targets = {1};
  EXPECT_THROW(bce_masked(Tensor::zeros(1, 2), short_targets), ShapeError);
  const std::vector<int> bad = {2};
  EXPECT_THROW(bce_masked(Tensor::zeros(1, 1), bad), ValidationError);
}

TEST(CrossEntropy, Examples) {
  const std::vector<std::size_t> c0 = {0};
  EXPECT_NEAR(cross_entropy(Tensor::zeros(1, 4), c0).item(), std::log(4.0), 1e-15);
  const std::vector<std::size_t> c2 = {2};
  EXPECT_LT(cross_entropy(Tensor::from(1, 3, {0, 0, 50}), c2).item(), 1e-20);
  const Tensor two = Tensor::from(2, 3, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  const std::vector<std::size_t> labels = {1, 0};
  auto row_loss = [](double a, double b, double c, double pick) {
    return std::log(std::exp(a) + std::exp(b) + std::exp(c)) - pick;
  };
  const double expect = 0.5 * (row_loss(1.0, 2.0, 0.5, 2.0) + row_loss(-1.0, 0.0, 3.0, -1.0));
  EXPECT_NEAR(cross_entropy(two, labels).item(), expect, 1e-14);
}

TEST(CrossEntropy, Errors) {
  const std::vector<std::size_t> out_of_range = {3};
  EXPECT_THROW(cross_entropy(Tensor::zeros(1, 3), out_of_range), ValidationError);
  const std::vector<std::size_t> two = {0, 1};
  EXPECT_THROW(cross_entropy(Tensor::zeros(1, 3), two), ShapeError);
}

TEST(Losses, PassGradCheckAtRandomLogits) {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor z = graphnas::testing::random_tensor(rng, 4, 3, true);
    std::vector<int> targets(12);
    for (int& t : targets) t = static_cast<int>(uniform_index(rng, 3)) - 1;
    targets[0] = 1;
    std::vector<Tensor> leaves = {z};
    EXPECT_LT(grad_check([&] { return bce_masked(z, targets); }, leaves), 1e-6);
    std::vector<std::size_t> classes(4);
    for (auto& c : classes) c = uniform_index(rng, 3);
    EXPECT_LT(grad_check([&] { return cross_entropy(z, classes); }, leaves), 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Ranking metrics

TEST(RocAuc, Examples) {
  EXPECT_EQ(auc({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}), 0.75);
  EXPECT_EQ(auc({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auc({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}), 0.5);
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), ValidationError);
  EXPECT_THROW(auc({0.1, 0.2}, {1, 2}), ValidationError);
  EXPECT_THROW(auc({0.1}, {1, 0}), ShapeError);
}

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(ap({0.9, 0.5, 0.1}, {1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(ap({0.9, 0.8, 0.1, 0.0}, {1, 1, 0, 0}), 1.0);
  EXPECT_THROW(ap({0.1, 0.2}, {0, 0}), ValidationError);
}

TEST(RankingMetrics, MatchBruteForceExactly) {
  Rng rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng);
    EXPECT_EQ(roc_auc(inst.scores, inst.labels), graphnas::testing::brute_auc(inst.scores, inst.labels));
    EXPECT_EQ(average_precision(inst.scores, inst.labels), graphnas::testing::brute_ap(inst.scores, inst.labels));
  }
}

TEST(RankingMetrics, InvariantUnderStrictlyIncreasingTransform) {
  Rng rng(73);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng);
    std::vector<double> mapped;
    for (double s : inst.scores) mapped.push_back(std::exp(3.0 * s) + 7.0);
    EXPECT_EQ(roc_auc(inst.scores, inst.labels), roc_auc(mapped, inst.labels));
    EXPECT_EQ(average_precision(inst.scores, inst.labels), average_precision(mapped, inst.labels));
  }
}

TEST(MultiTask, SkipsTasksWithoutBothClasses) {
  // Two tasks; the second has only missing entries.
  const std::vector<double> scores = {0.9, 0.0, 0.5, 0.0, 0.1, 0.0};
  const std::vector<int> targets = {1, -1, 0, -1, 1, -1};
  const MetricValue v = multi_task_metric(Metric::kAveragePrecision, scores, targets, 2);
  EXPECT_NEAR(v.value, (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  ASSERT_EQ(v.per_task.size(), 2u);
  EXPECT_TRUE(v.per_task[0].has_value());
  EXPECT_FALSE(v.per_task[1].has_value());

  const std::vector<int> one_class = {1, 1, 1, 1, 1, 1};
  EXPECT_THROW(multi_task_metric(Metric::kRocAuc, scores, one_class, 2), ValidationError);
  EXPECT_THROW(multi_task_metric(Metric::kAccuracy, scores, targets, 2), ConfigError);
}

TEST(MultiTask, MeanOverValidTasks) {
  const std::vector<double> scores = {0.9, 0.1, 0.8, 0.7, 0.3, 0.2, 0.2, 0.9};
  const std::vector<int> targets = {1, 1, 0, 0, 1, 1, 0, 0};
  const MetricValue v = multi_task_metric(Metric::kRocAuc, scores, targets, 2);
  EXPECT_EQ(*v.per_task[0], auc({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}));
  EXPECT_EQ(*v.per_task[1], auc({0.1, 0.7, 0.2, 0.9}, {1, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(v.value, 0.5 * (*v.per_task[0] + *v.per_task[1]));
}

// ---------------------------------------------------------------------------
// Accuracy and metric selection

TEST(Accuracy, Examples) {
  const std::vector<std::size_t> a = {1, 2, 3, 4};
  const std::vector<std::size_t> half = {1, 2, 0, 0};
  EXPECT_EQ(accuracy(a, a), 1.0);
  EXPECT_EQ(accuracy(half, a), 0.5);
  EXPECT_THROW(accuracy(std::span<const std::size_t>{}, std::span<const std::size_t>{}),
               ValidationError);
  EXPECT_THROW(accuracy(half, std::span<const std::size_t>(a).first(2)), ShapeError);
}

TEST(Argmax, FirstIndexOnTies) {
  const std::vector<double> v = {0.1, 0.7, 0.7, 0.2};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(MetricNames, ParseAndApplicability) {
  EXPECT_EQ(parse_metric("auc"), Metric::kRocAuc);
  EXPECT_EQ(parse_metric("roc_auc"), Metric::kRocAuc);
  EXPECT_EQ(parse_metric("ap"), Metric::kAveragePrecision);
  EXPECT_EQ(parse_metric("acc"), Metric::kAccuracy);
  EXPECT_THROW(parse_metric("f1"), ConfigError);
  for (Metric m : {Metric::kRocAuc, Metric::kAveragePrecision, Metric::kAccuracy})
    EXPECT_EQ(parse_metric(metric_name(m)), m);

  EXPECT_EQ(default_metric(TaskType::kBinary), Metric::kRocAuc);
  EXPECT_EQ(default_metric(TaskType::kMultiBinary), Metric::kAveragePrecision);
  EXPECT_EQ(default_metric(TaskType::kMultiClass), Metric::kAccuracy);
  EXPECT_THROW(check_metric(Metric::kRocAuc, TaskType::kMultiClass), ConfigError);
  EXPECT_THROW(check_metric(Metric::kAccuracy, TaskType::kMultiBinary), ConfigError);
  EXPECT_NO_THROW(check_metric(Metric::kAccuracy, TaskType::kBinary));
}
