#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "graphnas/graph.hpp"
#include "graphnas/tensor.hpp"

namespace graphnas {

enum class Metric { kRocAuc, kAveragePrecision, kAccuracy };

/// Accepts "rocauc" / "roc_auc" / "auc", "ap" / "average_precision", "accuracy" / "acc".
Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric metric);
Metric default_metric(TaskType type);
/// Throws ConfigError when `metric` makes no sense for `type`.
void check_metric(Metric metric, TaskType type);

/// Binary cross-entropy on logits, averaged over non-missing targets.
/// `targets` is rows x cols with 1, 0 or -1 (missing).
Tensor bce_masked(const Tensor& logits, std::span<const int> targets);
/// Mean cross-entropy of softmax(logits) against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> classes);

/// Area under the ROC curve; tied scores count one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
/// Mean precision at the rank of each positive. Tied scores keep input order.
double average_precision(std::span<const double> scores, std::span<const int> labels);
/// Fraction of exact matches.
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

/// First index of the largest value.
std::size_t argmax(std::span<const double> values);

struct MetricValue {
  double value = 0.0;
  /// Multi-task metrics: one entry per task, empty for tasks that were skipped.
  std::vector<std::optional<double>> per_task;
};

/// Column-wise metric over a rows x tasks score matrix with -1 for missing.
/// Tasks without both classes are skipped; throws if none remain.
MetricValue multi_task_metric(Metric metric, std::span<const double> scores,
                              std::span<const int> targets, std::size_t num_tasks);

}  // namespace graphnas
