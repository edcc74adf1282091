#include "graphnas/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "graphnas/errors.hpp"

namespace graphnas {

namespace {

constexpr std::array kSelectionOps = {OpKind::kZero, OpKind::kIdentity};
constexpr std::array kFusionOps = {OpKind::kSum, OpKind::kMean, OpKind::kMax, OpKind::kConcat,
                                   OpKind::kLstm};
constexpr std::array kAggregationOps = {OpKind::kGcn, OpKind::kGat, OpKind::kGatSym,
                                        OpKind::kGatCos, OpKind::kGin, OpKind::kGen,
                                        OpKind::kMf, OpKind::kExpC};
constexpr std::array kReadoutOps = {OpKind::kGlobalMean, OpKind::kGlobalMax, OpKind::kGlobalSum};
constexpr std::array kDefaultAggregation = {OpKind::kGcn, OpKind::kGat, OpKind::kGin,
                                            OpKind::kGen, OpKind::kMf, OpKind::kExpC};
constexpr std::array kGatVariants = {OpKind::kGat, OpKind::kGatSym, OpKind::kGatCos};

constexpr double kGenMessageFloor = 1e-7;
constexpr double kCosineEpsilon = 1e-12;

IndexPtr make_index(IndexVec v) { return std::make_shared<const IndexVec>(std::move(v)); }

void check_width(const char* op, const Tensor& h, const Tensor& weight) {
  if (h.cols() != weight.rows()) {
    throw ShapeError(std::string(op) + ": input " + h.shape_str() + " does not match weight " +
                     weight.shape_str());
  }
}

void check_nodes(const char* op, const GraphBatch& batch, const Tensor& h) {
  if (h.rows() != batch.num_nodes) {
    throw ShapeError(std::string(op) + ": " + h.shape_str() + " features for " +
                     std::to_string(batch.num_nodes) + " nodes");
  }
}

// Sum of incoming neighbor rows: out[v] = sum over edges u->v of h[u].
Tensor neighbor_sum(const GraphBatch& batch, const Tensor& h) {
  return segment_reduce(gather_rows(h, batch.src), batch.dst, batch.num_nodes, SegmentMode::kSum);
}

Mlp make_mlp(std::size_t width, ParamStore& store, const std::string& prefix, Rng& rng) {
  Mlp m;
  m.w1 = store.glorot(prefix + ".w1", width, width, rng);
  m.b1 = store.constant(prefix + ".b1", 1, width, 0.0);
  m.w2 = store.glorot(prefix + ".w2", width, width, rng);
  m.b2 = store.constant(prefix + ".b2", 1, width, 0.0);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Operation catalogue

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kZero: return "ZERO";
    case OpKind::kIdentity: return "IDENTITY";
    case OpKind::kSum: return "SUM";
    case OpKind::kMean: return "MEAN";
    case OpKind::kMax: return "MAX";
    case OpKind::kConcat: return "CONCAT";
    case OpKind::kLstm: return "LSTM";
    case OpKind::kGcn: return "GCN";
    case OpKind::kGat: return "GAT";
    case OpKind::kGatSym: return "GAT_SYM";
    case OpKind::kGatCos: return "GAT_COS";
    case OpKind::kGin: return "GIN";
    case OpKind::kGen: return "GEN";
    case OpKind::kMf: return "MF";
    case OpKind::kExpC: return "EXPC";
    case OpKind::kGlobalMean: return "GLOBAL_MEAN";
    case OpKind::kGlobalMax: return "GLOBAL_MAX";
    case OpKind::kGlobalSum: return "GLOBAL_SUM";
  }
  return "?";
}

Module op_module(OpKind op) {
  switch (op) {
    case OpKind::kZero:
    case OpKind::kIdentity: return Module::kSelection;
    case OpKind::kSum:
    case OpKind::kMean:
    case OpKind::kMax:
    case OpKind::kConcat:
    case OpKind::kLstm: return Module::kFusion;
    case OpKind::kGlobalMean:
    case OpKind::kGlobalMax:
    case OpKind::kGlobalSum: return Module::kReadout;
    default: return Module::kAggregation;
  }
}

std::string_view module_name(Module module) {
  switch (module) {
    case Module::kSelection: return "Selection";
    case Module::kFusion: return "Fusion";
    case Module::kAggregation: return "Aggregation";
    case Module::kReadout: return "Readout";
  }
  return "?";
}

std::span<const OpKind> module_ops(Module module) {
  switch (module) {
    case Module::kSelection: return kSelectionOps;
    case Module::kFusion: return kFusionOps;
    case Module::kAggregation: return kAggregationOps;
    case Module::kReadout: return kReadoutOps;
  }
  return {};
}

OpKind parse_op(std::string_view name, Module module) {
  for (OpKind op : module_ops(module)) {
    if (op_name(op) == name) return op;
  }
  std::string legal;
  for (OpKind op : module_ops(module)) {
    if (!legal.empty()) legal += ", ";
    legal += op_name(op);
  }
  throw ConfigError("'" + std::string(name) + "' is not a " + std::string(module_name(module)) +
                    " operation (legal: " + legal + ")");
}

std::span<const OpKind> default_aggregation_ops() { return kDefaultAggregation; }
std::span<const OpKind> gat_variant_ops() { return kGatVariants; }

// ---------------------------------------------------------------------------
// ParamStore

Tensor ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), value);
  return value;
}

Tensor ParamStore::glorot(std::string name, std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * limit;
  return add(std::move(name), Tensor::from(rows, cols, std::move(v), true));
}

Tensor ParamStore::constant(std::string name, std::size_t rows, std::size_t cols, double value) {
  return add(std::move(name), Tensor::full(rows, cols, value, true));
}

const Tensor& ParamStore::get(std::string_view name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

bool ParamStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

// ---------------------------------------------------------------------------
// Aggregation

Tensor Mlp::forward(const Tensor& x) const {
  return add(matmul(relu(add(matmul(x, w1), b1)), w2), b2);
}

namespace {

Tensor with_bias(const Tensor& x, const Tensor& bias) { return bias.defined() ? add(x, bias) : x; }

}  // namespace

Tensor gcn(const GraphBatch& batch, const Tensor& h, const GcnParams& params) {
  check_nodes("gcn", batch, h);
  check_width("gcn", h, params.weight);
  const IndexVec& src = *batch.src_with_loops;
  const IndexVec& dst = *batch.dst_with_loops;
  std::vector<double> norm(src.size());
  for (std::size_t e = 0; e < src.size(); ++e) {
    const double ds = static_cast<double>(batch.in_degrees[src[e]] + 1);
    const double dd = static_cast<double>(batch.in_degrees[dst[e]] + 1);
    norm[e] = 1.0 / std::sqrt(ds * dd);
  }
  const Tensor hw = matmul(h, params.weight);
  const Tensor messages =
      mul(gather_rows(hw, batch.src_with_loops), Tensor::from(src.size(), 1, std::move(norm)));
  return with_bias(
      segment_reduce(messages, batch.dst_with_loops, batch.num_nodes, SegmentMode::kSum),
      params.bias);
}

Tensor gat_attention(const GraphBatch& batch, const Tensor& h, const GatParams& params,
                     GatVariant variant) {
  check_nodes("gat", batch, h);
  check_width("gat", h, params.weight);
  const Tensor wh = matmul(h, params.weight);
  const IndexPtr& src = batch.src_with_loops;
  const IndexPtr& dst = batch.dst_with_loops;
  Tensor logits;
  if (variant == GatVariant::kCos) {
    const Tensor norms = sqrt(add_scalar(sum_axis(mul(wh, wh), 1), kCosineEpsilon));
    const Tensor unit = div(wh, norms);
    logits = sum_axis(mul(gather_rows(unit, src), gather_rows(unit, dst)), 1);
  } else {
    const Tensor s = matmul(wh, params.att_src);
    const Tensor t = matmul(wh, params.att_dst);
    logits = leaky_relu(add(gather_rows(s, src), gather_rows(t, dst)), params.negative_slope);
    if (variant == GatVariant::kSym) {
      logits = add(logits, leaky_relu(add(gather_rows(s, dst), gather_rows(t, src)),
                                      params.negative_slope));
    }
  }
  return segment_softmax(logits, dst, batch.num_nodes);
}

Tensor gat(const GraphBatch& batch, const Tensor& h, const GatParams& params, GatVariant variant) {
  const Tensor attention = gat_attention(batch, h, params, variant);
  const Tensor wh = matmul(h, params.weight);
  return with_bias(segment_reduce(mul(gather_rows(wh, batch.src_with_loops), attention),
                                   batch.dst_with_loops, batch.num_nodes, SegmentMode::kSum),
                    params.bias);
}

Tensor gin(const GraphBatch& batch, const Tensor& h, const GinParams& params) {
  check_nodes("gin", batch, h);
  const Tensor self = mul(add_scalar(params.eps, 1.0), h);
  return params.mlp.forward(add(self, neighbor_sum(batch, h)));
}

Tensor gen(const GraphBatch& batch, const Tensor& h, const GenParams& params,
           const Tensor& edge_embedding) {
  check_nodes("gen", batch, h);
  Tensor pre = gather_rows(h, batch.src);
  if (edge_embedding.defined()) pre = add(pre, edge_embedding);
  const Tensor messages = add_scalar(relu(pre), kGenMessageFloor);
  const Tensor weights = segment_softmax(mul(messages, params.beta), batch.dst, batch.num_nodes);
  const Tensor aggregated =
      segment_reduce(mul(weights, messages), batch.dst, batch.num_nodes, SegmentMode::kSum);
  return params.mlp.forward(add(h, aggregated));
}

Tensor mf(const GraphBatch& batch, const Tensor& h, const MfParams& params) {
  check_nodes("mf", batch, h);
  if (params.weights.empty()) throw ShapeError("mf: no degree weights");
  const std::size_t max_degree = params.weights.size() - 1;
  const Tensor s = add(h, neighbor_sum(batch, h));

  std::vector<IndexVec> groups(max_degree + 1);
  for (std::size_t v = 0; v < batch.num_nodes; ++v)
    groups[std::min(batch.degrees[v], max_degree)].push_back(v);
  std::vector<Tensor> parts;
  IndexVec order;
  for (std::size_t k = 0; k <= max_degree; ++k) {
    if (groups[k].empty()) continue;
    check_width("mf", h, params.weights[k]);
    parts.push_back(matmul(gather_rows(s, make_index(groups[k])), params.weights[k]));
    order.insert(order.end(), groups[k].begin(), groups[k].end());
  }
  const Tensor out =
      segment_reduce(concat(parts, 0), make_index(std::move(order)), batch.num_nodes,
                     SegmentMode::kSum);
  return params.apply_sigmoid ? sigmoid(out) : out;
}

Tensor expc(const GraphBatch& batch, const Tensor& h, const ExpcParams& params) {
  check_nodes("expc", batch, h);
  check_width("expc", h, params.expand);
  const Tensor expanded = relu(matmul(h, params.expand));
  const Tensor pooled = segment_reduce(gather_rows(expanded, batch.src_with_loops),
                                       batch.dst_with_loops, batch.num_nodes, SegmentMode::kSum);
  return with_bias(matmul(pooled, params.compress), params.bias);
}

AggregationParams make_aggregation(OpKind op, std::size_t width, ParamStore& store,
                                   const std::string& prefix, Rng& rng, const OpOptions& options) {
  const std::string p = prefix + "." + std::string(op_name(op));
  switch (op) {
    case OpKind::kGcn:
      return GcnParams{store.glorot(p + ".weight", width, width, rng),
                       store.constant(p + ".bias", 1, width, 0.0)};
    case OpKind::kGat:
    case OpKind::kGatSym:
    case OpKind::kGatCos: {
      GatParams g;
      g.weight = store.glorot(p + ".weight", width, width, rng);
      if (op != OpKind::kGatCos) {
        g.att_src = store.glorot(p + ".att_src", width, 1, rng);
        g.att_dst = store.glorot(p + ".att_dst", width, 1, rng);
      }
      g.bias = store.constant(p + ".bias", 1, width, 0.0);
      g.negative_slope = options.gat_negative_slope;
      return g;
    }
    case OpKind::kGin: {
      GinParams g;
      g.eps = store.constant(p + ".eps", 1, 1, 0.0);
      g.mlp = make_mlp(width, store, p + ".mlp", rng);
      return g;
    }
    case OpKind::kGen: {
      GenParams g;
      g.beta = store.constant(p + ".beta", 1, 1, 1.0);
      g.mlp = make_mlp(width, store, p + ".mlp", rng);
      return g;
    }
    case OpKind::kMf: {
      MfParams m;
      for (std::size_t k = 0; k <= options.mf_max_degree; ++k)
        m.weights.push_back(store.glorot(p + ".w" + std::to_string(k), width, width, rng));
      return m;
    }
    case OpKind::kExpC: {
      if (options.expc_factor < 1) throw ConfigError("EXPC expansion factor must be >= 1");
      const std::size_t wide = options.expc_factor * width;
      return ExpcParams{store.glorot(p + ".expand", width, wide, rng),
                        store.glorot(p + ".compress", wide, width, rng),
                        store.constant(p + ".bias", 1, width, 0.0)};
    }
    default:
      throw ConfigError("'" + std::string(op_name(op)) + "' is not an aggregation operation");
  }
}

Tensor aggregate(OpKind op, const GraphBatch& batch, const Tensor& h,
                 const AggregationParams& params, const Tensor& edge_embedding) {
  switch (op) {
    case OpKind::kGcn: return gcn(batch, h, std::get<GcnParams>(params));
    case OpKind::kGat: return gat(batch, h, std::get<GatParams>(params), GatVariant::kPlain);
    case OpKind::kGatSym: return gat(batch, h, std::get<GatParams>(params), GatVariant::kSym);
    case OpKind::kGatCos: return gat(batch, h, std::get<GatParams>(params), GatVariant::kCos);
    case OpKind::kGin: return gin(batch, h, std::get<GinParams>(params));
    case OpKind::kGen: return gen(batch, h, std::get<GenParams>(params), edge_embedding);
    case OpKind::kMf: return mf(batch, h, std::get<MfParams>(params));
    case OpKind::kExpC: return expc(batch, h, std::get<ExpcParams>(params));
    default:
      throw ConfigError("'" + std::string(op_name(op)) + "' is not an aggregation operation");
  }
}

// ---------------------------------------------------------------------------
// Fusion

FusionParams make_fusion(OpKind op, std::size_t width, std::size_t slots, ParamStore& store,
                         const std::string& prefix, Rng& rng) {
  const std::string p = prefix + "." + std::string(op_name(op));
  switch (op) {
    case OpKind::kSum:
    case OpKind::kMean:
    case OpKind::kMax: return std::monostate{};
    case OpKind::kConcat:
      return ConcatParams{store.glorot(p + ".projection", slots * width, width, rng)};
    case OpKind::kLstm:
      return LstmParams{store.glorot(p + ".w_input", width, 4 * width, rng),
                        store.glorot(p + ".w_hidden", width, 4 * width, rng),
                        store.constant(p + ".bias", 1, 4 * width, 0.0)};
    default:
      throw ConfigError("'" + std::string(op_name(op)) + "' is not a fusion operation");
  }
}

Tensor fuse(OpKind op, std::span<const Tensor> inputs, const FusionParams& params) {
  if (inputs.empty()) throw ShapeError("fuse: empty input list");
  for (const Tensor& x : inputs) {
    if (x.rows() != inputs.front().rows() || x.cols() != inputs.front().cols()) {
      throw ShapeError("fuse: input " + x.shape_str() + " differs from " +
                       inputs.front().shape_str());
    }
  }
  switch (op) {
    case OpKind::kSum:
    case OpKind::kMean: {
      Tensor acc = inputs.front();
      for (std::size_t i = 1; i < inputs.size(); ++i) acc = add(acc, inputs[i]);
      return op == OpKind::kSum ? acc
                                : scalar_mul(acc, 1.0 / static_cast<double>(inputs.size()));
    }
    case OpKind::kMax: {
      Tensor acc = inputs.front();
      for (std::size_t i = 1; i < inputs.size(); ++i) acc = maximum(acc, inputs[i]);
      return acc;
    }
    case OpKind::kConcat: {
      const auto& p = std::get<ConcatParams>(params);
      return matmul(inputs.size() == 1 ? inputs.front() : concat(inputs, 1), p.projection);
    }
    case OpKind::kLstm: {
      const auto& p = std::get<LstmParams>(params);
      const std::size_t d = inputs.front().cols();
      if (p.w_input.rows() != d || p.w_input.cols() != 4 * d)
        throw ShapeError("fuse(LSTM): cell width does not match inputs " +
                         inputs.front().shape_str());
      Tensor hidden, cell;
      for (const Tensor& x : inputs) {
        Tensor gates = add(matmul(x, p.w_input), p.bias);
        if (hidden.defined()) gates = add(gates, matmul(hidden, p.w_hidden));
        const Tensor in_gate = sigmoid(slice(gates, 1, 0, d));
        const Tensor forget_gate = sigmoid(slice(gates, 1, d, 2 * d));
        const Tensor candidate = tanh(slice(gates, 1, 2 * d, 3 * d));
        const Tensor out_gate = sigmoid(slice(gates, 1, 3 * d, 4 * d));
        cell = cell.defined() ? add(mul(forget_gate, cell), mul(in_gate, candidate))
                              : mul(in_gate, candidate);
        hidden = mul(out_gate, tanh(cell));
      }
      return hidden;
    }
    default:
      throw ConfigError("'" + std::string(op_name(op)) + "' is not a fusion operation");
  }
}

// ---------------------------------------------------------------------------

Tensor select(const Tensor& weight, const Tensor& input) {
  if (weight.size() != 1) throw ShapeError("select: weight must be a scalar, got " + weight.shape_str());
  return mul(input, weight);
}

Tensor select(double weight, const Tensor& input) { return scalar_mul(input, weight); }

Tensor readout(OpKind op, const Tensor& h, const IndexPtr& graph_ids, std::size_t num_graphs) {
  switch (op) {
    case OpKind::kGlobalMean: return segment_reduce(h, graph_ids, num_graphs, SegmentMode::kMean);
    case OpKind::kGlobalMax: return segment_reduce(h, graph_ids, num_graphs, SegmentMode::kMax);
    case OpKind::kGlobalSum: return segment_reduce(h, graph_ids, num_graphs, SegmentMode::kSum);
    default:
      throw ConfigError("'" + std::string(op_name(op)) + "' is not a readout operation");
  }
}

Tensor readout(OpKind op, const Tensor& h, const GraphBatch& batch) {
  return readout(op, h, batch.graph_index, batch.num_graphs);
}

}  // namespace graphnas
