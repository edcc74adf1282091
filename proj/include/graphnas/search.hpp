#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "graphnas/graph.hpp"
#include "graphnas/metrics.hpp"
#include "graphnas/optim.hpp"
#include "graphnas/supernet.hpp"

namespace graphnas {

enum class AnnealSchedule { kLinear, kExponential };

AnnealSchedule parse_anneal(std::string_view name);
std::string_view anneal_name(AnnealSchedule schedule);

struct SearchConfig {
  std::size_t num_blocks = 4;
  std::size_t hidden = 32;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr_weights = 0.02;
  double lr_alpha = 0.5;
  double momentum = 0.9;
  /// Joint L2 bound on the operation-weight gradient per step; 0 disables.
  double grad_clip = 5.0;
  double lambda_start = 1.0;
  double lambda_end = 0.1;
  AnnealSchedule anneal = AnnealSchedule::kLinear;
  /// Pins every block's aggregation to this op (topology-only search).
  std::optional<OpKind> fixed_aggregation;
  std::vector<OpKind> aggregation_candidates = {OpKind::kGcn, OpKind::kGat, OpKind::kGin,
                                                OpKind::kGen, OpKind::kMf,  OpKind::kExpC};
  std::vector<OpKind> fusion_candidates = {OpKind::kSum, OpKind::kMean, OpKind::kMax,
                                           OpKind::kConcat, OpKind::kLstm};
  std::vector<OpKind> readout_candidates = {OpKind::kGlobalMean, OpKind::kGlobalMax,
                                            OpKind::kGlobalSum};
  double dropout = 0.0;
  bool virtual_node = false;
  std::optional<Metric> metric;
  OpOptions options;
  std::uint64_t seed = 0;

  void validate() const;
  /// Aggregation candidates after applying fixed_aggregation.
  std::vector<OpKind> aggregation_space() const;
};

/// Temperature for `epoch` (0-based).
double anneal(std::size_t epoch, const SearchConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double lambda = 1.0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_metric = 0.0;
  ArchEncoding arch;
};

struct SearchResult {
  ArchEncoding arch;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  /// Architecture logits at the best epoch, by parameter name.
  std::vector<std::pair<std::string, std::vector<double>>> alphas;
};

/// One supernet plus the two optimizers of the alternating scheme.
class Searcher {
 public:
  /// `data` must already carry any virtual nodes.
  Searcher(const Dataset& data, const SearchConfig& config);

  Supernet& supernet() { return *net_; }
  const Supernet& supernet() const { return *net_; }

  /// Descends the train loss in the operation weights; logits stay fixed.
  double weight_step(const GraphBatch& batch, double lambda, Rng* dropout_rng = nullptr);
  /// Descends the valid loss in the logits; operation weights stay fixed.
  double alpha_step(const GraphBatch& batch, double lambda);

 private:
  void freeze(bool weights_trainable);

  TaskDescriptor task_;
  std::unique_ptr<Supernet> net_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> alphas_;
  std::unique_ptr<MomentumSgd> weight_opt_;
  std::unique_ptr<MomentumSgd> alpha_opt_;
  double clip_ = 0.0;
};

/// Alternating first-order search: each paired step updates operation weights
/// on a train batch (logits frozen), then the logits on a valid batch
/// (weights frozen).
SearchResult search(const Dataset& dataset, const SearchConfig& config);

/// The supernet search() builds for this dataset and config.
SupernetSpec search_space(const Dataset& dataset, const SearchConfig& config);

/// Uniform draw per decision site; all-ZERO selections are redrawn.
ArchEncoding random_architecture(const SearchConfig& config, std::uint64_t seed);

/// One JSON object per epoch, newline-terminated.
std::string history_to_jsonl(const std::vector<EpochRecord>& history);

/// Best-epoch logits together with the candidate sets they index.
std::string alphas_to_json(const SearchResult& result, const SearchConfig& config);
/// Re-derives the architecture from a file written by alphas_to_json.
ArchEncoding derive_from_alphas(std::string_view json_text);

}  // namespace graphnas
