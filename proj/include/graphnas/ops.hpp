#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "graphnas/graph.hpp"
#include "graphnas/rng.hpp"
#include "graphnas/tensor.hpp"

namespace graphnas {

enum class Module { kSelection, kFusion, kAggregation, kReadout };

enum class OpKind {
  // Selection
  kZero,
  kIdentity,
  // Fusion
  kSum,
  kMean,
  kMax,
  kConcat,
  kLstm,
  // Aggregation
  kGcn,
  kGat,
  kGatSym,
  kGatCos,
  kGin,
  kGen,
  kMf,
  kExpC,
  // Readout
  kGlobalMean,
  kGlobalMax,
  kGlobalSum,
};

std::string_view op_name(OpKind op);
Module op_module(OpKind op);
std::string_view module_name(Module module);
/// Every legal operation of a module, in canonical order.
std::span<const OpKind> module_ops(Module module);
/// Parses an operation name; throws ConfigError when it does not belong to `module`.
OpKind parse_op(std::string_view name, Module module);

/// The six aggregation operators searched by default.
std::span<const OpKind> default_aggregation_ops();
/// The attention-variant aggregation space.
std::span<const OpKind> gat_variant_ops();

/// Ordered, named collection of learnable leaves.
class ParamStore {
 public:
  Tensor add(std::string name, Tensor value);
  Tensor glorot(std::string name, std::size_t rows, std::size_t cols, Rng& rng);
  Tensor constant(std::string name, std::size_t rows, std::size_t cols, double value);

  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::span<const std::pair<std::string, Tensor>> entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t num_values() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct OpOptions {
  std::size_t mf_max_degree = 5;
  std::size_t expc_factor = 2;
  double gat_negative_slope = 0.2;
};

/// Two affine layers with a relu between them.
struct Mlp {
  Tensor w1, b1, w2, b2;
  Tensor forward(const Tensor& x) const;
};

struct GcnParams {
  Tensor weight;
  Tensor bias;  // 1 x d, optional
};

enum class GatVariant { kPlain, kSym, kCos };

struct GatParams {
  Tensor weight;
  Tensor att_src;  // d x 1; unused by the cosine variant
  Tensor att_dst;  // d x 1
  Tensor bias;     // 1 x d, optional
  double negative_slope = 0.2;
};

struct GinParams {
  Tensor eps;  // 1 x 1
  Mlp mlp;
};

struct GenParams {
  Tensor beta;  // 1 x 1
  Mlp mlp;
};

struct MfParams {
  std::vector<Tensor> weights;  // one d x d matrix per degree 0..max_degree
  bool apply_sigmoid = true;    // test hook
};

struct ExpcParams {
  Tensor expand;    // d x (k d)
  Tensor compress;  // (k d) x d
  Tensor bias;      // 1 x d, optional
};

using AggregationParams =
    std::variant<GcnParams, GatParams, GinParams, GenParams, MfParams, ExpcParams>;

// Aggregation operators. None of them changes graph structure; all map N x d to N x d.
Tensor gcn(const GraphBatch& batch, const Tensor& h, const GcnParams& params);
Tensor gat(const GraphBatch& batch, const Tensor& h, const GatParams& params, GatVariant variant);
/// Attention coefficients over batch.{src,dst}_with_loops, (E + N) x 1.
Tensor gat_attention(const GraphBatch& batch, const Tensor& h, const GatParams& params,
                     GatVariant variant);
Tensor gin(const GraphBatch& batch, const Tensor& h, const GinParams& params);
/// `edge_embedding` is E x d when the data carries edge features, otherwise undefined.
Tensor gen(const GraphBatch& batch, const Tensor& h, const GenParams& params,
           const Tensor& edge_embedding = {});
Tensor mf(const GraphBatch& batch, const Tensor& h, const MfParams& params);
Tensor expc(const GraphBatch& batch, const Tensor& h, const ExpcParams& params);

AggregationParams make_aggregation(OpKind op, std::size_t width, ParamStore& store,
                                   const std::string& prefix, Rng& rng, const OpOptions& options);
Tensor aggregate(OpKind op, const GraphBatch& batch, const Tensor& h,
                 const AggregationParams& params, const Tensor& edge_embedding = {});

struct ConcatParams {
  Tensor projection;  // (slots d) x d
};

struct LstmParams {
  Tensor w_input;   // d x 4d, gate order: input, forget, cell, output
  Tensor w_hidden;  // d x 4d
  Tensor bias;      // 1 x 4d
};

using FusionParams = std::variant<std::monostate, ConcatParams, LstmParams>;

FusionParams make_fusion(OpKind op, std::size_t width, std::size_t slots, ParamStore& store,
                         const std::string& prefix, Rng& rng);
/// Fuses a list of N x d inputs into one N x d matrix.
Tensor fuse(OpKind op, std::span<const Tensor> inputs, const FusionParams& params = {});

/// Mixed ZERO/IDENTITY selection: weight * input.
Tensor select(const Tensor& weight, const Tensor& input);
Tensor select(double weight, const Tensor& input);

Tensor readout(OpKind op, const Tensor& h, const IndexPtr& graph_ids, std::size_t num_graphs);
Tensor readout(OpKind op, const Tensor& h, const GraphBatch& batch);

}  // namespace graphnas
