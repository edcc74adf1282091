#include "graphnas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "graphnas/errors.hpp"

namespace graphnas {

Metric parse_metric(std::string_view name) {
  if (name == "rocauc" || name == "roc_auc" || name == "auc") return Metric::kRocAuc;
  if (name == "ap" || name == "average_precision") return Metric::kAveragePrecision;
  if (name == "accuracy" || name == "acc") return Metric::kAccuracy;
  throw ConfigError("unknown metric '" + std::string(name) +
                    "' (expected rocauc, ap or accuracy)");
}

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kRocAuc: return "rocauc";
    case Metric::kAveragePrecision: return "ap";
    case Metric::kAccuracy: return "accuracy";
  }
  return "?";
}

Metric default_metric(TaskType type) {
  switch (type) {
    case TaskType::kBinary: return Metric::kRocAuc;
    case TaskType::kMultiBinary: return Metric::kAveragePrecision;
    case TaskType::kMultiClass: return Metric::kAccuracy;
  }
  return Metric::kRocAuc;
}

void check_metric(Metric metric, TaskType type) {
  const bool ok = type == TaskType::kMultiClass ? metric == Metric::kAccuracy
                                                : metric != Metric::kAccuracy ||
                                                      type == TaskType::kBinary;
  if (!ok) {
    throw ConfigError("metric '" + std::string(metric_name(metric)) +
                      "' does not apply to a " + std::string(task_type_name(type)) + " task");
  }
}

Tensor bce_masked(const Tensor& logits, std::span<const int> targets) {
  if (targets.size() != logits.size()) {
    throw ShapeError("bce_masked: " + std::to_string(targets.size()) + " targets for logits " +
                     logits.shape_str());
  }
  std::vector<double> y(targets.size()), mask(targets.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == -1) continue;
    if (targets[i] != 0 && targets[i] != 1)
      throw ValidationError("bce_masked: target " + std::to_string(targets[i]) + " not in {-1,0,1}");
    y[i] = targets[i];
    mask[i] = 1.0;
    ++count;
  }
  if (count == 0) throw ValidationError("bce_masked: every target is missing");
  const std::size_t r = logits.rows(), c = logits.cols();
  // softplus(z) - y z is -log sigmoid(z) for y = 1 and -log(1 - sigmoid(z)) for y = 0.
  const Tensor per = sub(softplus(logits), mul(logits, Tensor::from(r, c, std::move(y))));
  return scalar_mul(sum(mul(per, Tensor::from(r, c, std::move(mask)))),
                    1.0 / static_cast<double>(count));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> classes) {
  if (classes.size() != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(classes.size()) + " labels for logits " +
                     logits.shape_str());
  }
  if (classes.empty()) throw ShapeError("cross_entropy: empty batch");
  std::vector<double> onehot(logits.size(), 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= logits.cols()) {
      throw ValidationError("cross_entropy: label " + std::to_string(classes[i]) +
                            " out of range for " + std::to_string(logits.cols()) + " classes");
    }
    onehot[i * logits.cols() + classes[i]] = 1.0;
  }
  const Tensor picked =
      sum(mul(log_softmax_rows(logits), Tensor::from(logits.rows(), logits.cols(), std::move(onehot))));
  return scalar_mul(picked, -1.0 / static_cast<double>(classes.size()));
}

namespace {

void check_binary(const char* name, std::span<const double> scores, std::span<const int> labels,
                  std::size_t& positives, std::size_t& negatives) {
  if (scores.size() != labels.size()) {
    throw ShapeError(std::string(name) + ": " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(labels.size()) + " labels");
  }
  positives = negatives = 0;
  for (int y : labels) {
    if (y == 1) ++positives;
    else if (y == 0) ++negatives;
    else throw ValidationError(std::string(name) + ": label " + std::to_string(y) + " is not 0 or 1");
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_binary("roc_auc", scores, labels, pos, neg);
  if (pos == 0 || neg == 0) throw ValidationError("roc_auc: needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based mid-ranks of positives, doubled so it stays integral.
  long long twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const long long twice_mid = static_cast<long long>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) twice_rank_sum += twice_mid;
    i = j;
  }
  const long long p = static_cast<long long>(pos);
  const double twice_u = static_cast<double>(twice_rank_sum - p * (p + 1));
  return twice_u / 2.0 / (static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_binary("average_precision", scores, labels, pos, neg);
  if (pos == 0) throw ValidationError("average_precision: no positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] != 1) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return total / static_cast<double>(pos);
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size())
    throw ShapeError("accuracy: prediction and label counts differ");
  if (truth.empty()) throw ValidationError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

MetricValue multi_task_metric(Metric metric, std::span<const double> scores,
                              std::span<const int> targets, std::size_t num_tasks) {
  if (metric == Metric::kAccuracy) throw ConfigError("accuracy is not a per-task metric");
  if (num_tasks == 0 || scores.size() != targets.size() || scores.size() % num_tasks != 0)
    throw ShapeError("multi_task_metric: score and target shapes disagree");
  const std::size_t rows = scores.size() / num_tasks;
  MetricValue out;
  out.per_task.resize(num_tasks);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    std::vector<double> s;
    std::vector<int> y;
    bool has_pos = false, has_neg = false;
    for (std::size_t r = 0; r < rows; ++r) {
      const int v = targets[r * num_tasks + t];
      if (v == -1) continue;
      s.push_back(scores[r * num_tasks + t]);
      y.push_back(v);
      has_pos = has_pos || v == 1;
      has_neg = has_neg || v == 0;
    }
    if (!has_pos || !has_neg) continue;
    const double v = metric == Metric::kRocAuc ? roc_auc(s, y) : average_precision(s, y);
    out.per_task[t] = v;
    total += v;
    ++used;
  }
  if (used == 0)
    throw ValidationError(std::string(metric_name(metric)) + ": no task has both classes");
  out.value = total / static_cast<double>(used);
  return out;
}

}  // namespace graphnas
