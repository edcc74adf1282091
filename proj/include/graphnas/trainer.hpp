#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphnas/graph.hpp"
#include "graphnas/metrics.hpp"
#include "graphnas/supernet.hpp"

namespace graphnas {

/// Loss matching the task: masked BCE for binary targets, cross-entropy for classes.
Tensor task_loss(const Tensor& logits, const GraphBatch& batch, const TaskDescriptor& task);

/// rows x num_tasks targets with 1, 0 or -1 (missing).
std::vector<int> binary_targets(const GraphBatch& batch, std::size_t num_tasks);
std::vector<std::size_t> class_targets(const GraphBatch& batch);

/// Consecutive batches over `indices` in the given order.
std::vector<GraphBatch> make_batches(const Dataset& dataset, std::span<const std::size_t> indices,
                                     std::size_t batch_size);

/// Copy of the dataset with a virtual node added to every graph.
Dataset with_virtual_nodes(const Dataset& dataset);

struct EvalReport {
  Metric metric = Metric::kRocAuc;
  SplitName split = SplitName::kValid;
  double value = 0.0;
  double loss = 0.0;
  std::size_t num_graphs = 0;
  std::vector<std::optional<double>> per_task;
};

std::string report_to_json(std::span<const EvalReport> reports, std::size_t best_epoch);

/// Metric and mean loss of the network over prebuilt batches (no gradients).
EvalReport evaluate_batches(const Supernet& net, const ForwardMode& mode,
                            std::span<const GraphBatch> batches, const TaskDescriptor& task,
                            Metric metric);
EvalReport evaluate(const Supernet& net, const ForwardMode& mode, const Dataset& dataset,
                    SplitName split, Metric metric, std::size_t batch_size = 256);

struct HParams {
  double learning_rate = 0.005;
  std::size_t batch_size = 32;
  std::size_t hidden = 32;
  double dropout = 0.0;
  bool virtual_node = false;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::optional<Metric> metric;
  OpOptions options;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_metric;
};

struct TrainResult {
  std::shared_ptr<Supernet> model;
  ArchEncoding arch;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> history;
  /// Train, valid and test reports for the restored best model (empty splits omitted).
  std::vector<EvalReport> reports;

  const EvalReport* report(SplitName split) const;
};

/// Trains a freshly initialized network for `arch` and keeps the epoch with the
/// best validation metric (earliest on ties; the last epoch if there is no
/// validation split).
TrainResult train_discrete(const ArchEncoding& arch, const Dataset& dataset, const HParams& hp);

struct ModelInfo {
  ArchEncoding arch;
  SupernetSpec spec;
  TaskDescriptor task;
  bool virtual_node = false;
};

/// Raw little-endian doubles in parameter order plus a JSON manifest.
void save_model(const Supernet& net, const ModelInfo& info, const std::string& bin_path,
                const std::string& manifest_path);

struct LoadedModel {
  std::shared_ptr<Supernet> model;
  ModelInfo info;
};

LoadedModel load_model(const std::string& bin_path, const std::string& manifest_path);

}  // namespace graphnas
