#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "graphnas/graph.hpp"
#include "graphnas/ops.hpp"
#include "graphnas/rng.hpp"
#include "graphnas/tensor.hpp"

namespace graphnas {

/// Discrete choices for one SFA block. Block i (1-based) selects among the
/// outputs H^0..H^{i-1}, so `select` has length i.
struct BlockChoice {
  std::vector<bool> select;
  OpKind fusion = OpKind::kSum;
  OpKind aggregation = OpKind::kGin;
  bool operator==(const BlockChoice&) const = default;
};

struct ArchEncoding {
  std::vector<BlockChoice> blocks;
  OpKind readout = OpKind::kGlobalSum;

  std::size_t num_blocks() const { return blocks.size(); }
  /// Throws ValidationError on a broken invariant.
  void validate() const;
  bool operator==(const ArchEncoding&) const = default;
};

std::string arch_to_json(const ArchEncoding& arch);
ArchEncoding arch_from_json(std::string_view text);
ArchEncoding load_arch(const std::string& path);
void save_arch(const ArchEncoding& arch, const std::string& path);

/// Temperature-scaled softmax over one decision site's logits (1 x k).
Tensor arch_weights(const Tensor& alpha, double temperature);
std::vector<double> arch_weights(std::span<const double> alpha, double temperature);

/// Weighted sum of candidate outputs; all outputs must share one shape.
Tensor mixed_op(std::span<const Tensor> outputs, const Tensor& weights);
Tensor mixed_op(std::span<const std::function<Tensor(const Tensor&)>> candidates,
                const Tensor& weights, const Tensor& input);

struct BlockSpace {
  std::vector<OpKind> fusion;
  std::vector<OpKind> aggregation;
};

struct SupernetSpec {
  std::size_t hidden = 32;
  std::size_t input_dim = 1;
  std::size_t edge_dim = 0;  // 0 when the data has no edge features
  std::size_t output_dim = 1;
  std::vector<BlockSpace> blocks;
  std::vector<OpKind> readout;
  OpOptions options;
  double dropout = 0.0;

  std::size_t num_blocks() const { return blocks.size(); }
  void validate() const;

  /// Same candidate sets at every block.
  static SupernetSpec uniform(std::size_t num_blocks, std::span<const OpKind> fusion,
                              std::span<const OpKind> aggregation,
                              std::span<const OpKind> readout);
  /// Singleton candidate sets reproducing one discrete architecture.
  static SupernetSpec for_architecture(const ArchEncoding& arch);
};

struct RelaxedMode {
  double temperature = 1.0;
};

struct DiscreteMode {
  ArchEncoding arch;
};

using ForwardMode = std::variant<RelaxedMode, DiscreteMode>;

/// Stack of SFA blocks between an input encoder and a readout + linear head.
class Supernet {
 public:
  Supernet(SupernetSpec spec, std::uint64_t seed);

  const SupernetSpec& spec() const { return spec_; }
  ParamStore& weights() { return weights_; }
  const ParamStore& weights() const { return weights_; }
  ParamStore& alphas() { return alphas_; }
  const ParamStore& alphas() const { return alphas_; }

  const Tensor& selection_alpha(std::size_t block, std::size_t input) const;
  const Tensor& fusion_alpha(std::size_t block) const;
  const Tensor& aggregation_alpha(std::size_t block) const;
  const Tensor& readout_alpha() const;

  /// Input encoder: H^0 = X W + b.
  Tensor encode(const GraphBatch& batch) const;

  /// f_a(f_f({f_s(H^0), ..., f_s(H^{i-1})})) for block i (1-based), before the
  /// inter-block normalization.
  Tensor block_forward(std::size_t block, std::span<const Tensor> history, const GraphBatch& batch,
                       const ForwardMode& mode) const;

  /// Graph logits, batch.num_graphs x output_dim. Dropout is applied only
  /// when `dropout_rng` is given.
  Tensor forward(const GraphBatch& batch, const ForwardMode& mode, Rng* dropout_rng = nullptr) const;

  /// Per-site argmax of the logits; an all-ZERO block keeps its input with
  /// the largest IDENTITY logit.
  ArchEncoding derive() const;

  /// Sets logits to +/-magnitude so the relaxed weights reproduce `arch`.
  void set_one_hot(const ArchEncoding& arch, double magnitude = 1e6);

  /// Checks that `arch` fits this network's blocks and candidate sets.
  void check_architecture(const ArchEncoding& arch) const;

 private:
  struct BlockParams {
    std::vector<FusionParams> fusion;
    std::vector<AggregationParams> aggregation;
    Tensor edge_projection;
    Tensor norm_gain;
    Tensor norm_bias;
    std::vector<Tensor> select_alpha;
    Tensor fusion_alpha;
    Tensor aggregation_alpha;
  };

  Tensor post_block(std::size_t block, const Tensor& h, Rng* dropout_rng) const;

  SupernetSpec spec_;
  ParamStore weights_;
  ParamStore alphas_;
  Tensor encoder_weight_, encoder_bias_;
  Tensor head_weight_, head_bias_;
  std::vector<BlockParams> blocks_;
  Tensor readout_alpha_;
};

}  // namespace graphnas
