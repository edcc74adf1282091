#include "graphnas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graphnas/errors.hpp"

namespace graphnas {

using nlohmann::json;

namespace {

std::string block_prefix(std::size_t block) { return "block" + std::to_string(block); }

std::size_t index_of(const std::vector<OpKind>& ops, OpKind op) {
  return static_cast<std::size_t>(std::find(ops.begin(), ops.end(), op) - ops.begin());
}

bool contains(const std::vector<OpKind>& ops, OpKind op) { return index_of(ops, op) < ops.size(); }

std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void check_candidates(const std::vector<OpKind>& ops, Module module, const std::string& where) {
  if (ops.empty()) throw ConfigError(where + ": empty candidate set");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (op_module(ops[i]) != module) {
      throw ConfigError(where + ": '" + std::string(op_name(ops[i])) + "' is not a " +
                        std::string(module_name(module)) + " operation");
    }
    if (std::find(ops.begin(), ops.begin() + static_cast<std::ptrdiff_t>(i), ops[i]) !=
        ops.begin() + static_cast<std::ptrdiff_t>(i))
      throw ConfigError(where + ": duplicate candidate '" + std::string(op_name(ops[i])) + "'");
  }
}

void fill_one_hot(Tensor& alpha, std::size_t chosen, double magnitude) {
  auto v = alpha.mutable_data();
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = k == chosen ? magnitude : -magnitude;
}

}  // namespace

// ---------------------------------------------------------------------------
// ArchEncoding

void ArchEncoding::validate() const {
  if (blocks.empty()) throw ValidationError("architecture has no blocks");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const BlockChoice& c = blocks[b];
    const std::string where = "block " + std::to_string(b + 1) + ": ";
    if (c.select.size() != b + 1) {
      throw ValidationError(where + "selection has " + std::to_string(c.select.size()) +
                            " entries, expected " + std::to_string(b + 1));
    }
    if (std::none_of(c.select.begin(), c.select.end(), [](bool s) { return s; }))
      throw ValidationError(where + "selects no input");
    if (op_module(c.fusion) != Module::kFusion)
      throw ValidationError(where + "'" + std::string(op_name(c.fusion)) + "' is not a fusion op");
    if (op_module(c.aggregation) != Module::kAggregation) {
      throw ValidationError(where + "'" + std::string(op_name(c.aggregation)) +
                            "' is not an aggregation op");
    }
  }
  if (op_module(readout) != Module::kReadout)
    throw ValidationError("'" + std::string(op_name(readout)) + "' is not a readout op");
}

std::string arch_to_json(const ArchEncoding& arch) {
  nlohmann::ordered_json j;
  j["num_blocks"] = arch.num_blocks();
  auto blocks = nlohmann::ordered_json::array();
  for (const BlockChoice& c : arch.blocks) {
    auto sel = nlohmann::ordered_json::array();
    for (bool s : c.select) sel.push_back(s ? 1 : 0);
    blocks.push_back(nlohmann::ordered_json{{"select", sel},
                      {"fusion", std::string(op_name(c.fusion))},
                      {"agg", std::string(op_name(c.aggregation))}});
  }
  j["blocks"] = std::move(blocks);
  j["readout"] = std::string(op_name(arch.readout));
  return j.dump(2);
}

ArchEncoding arch_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("architecture: malformed JSON (") + e.what() + ")");
  }
  try {
    ArchEncoding arch;
    const auto num_blocks = j.at("num_blocks").get<std::size_t>();
    const json& blocks = j.at("blocks");
    if (!blocks.is_array() || blocks.size() != num_blocks) {
      throw ValidationError("architecture: num_blocks = " + std::to_string(num_blocks) +
                            " but " + std::to_string(blocks.size()) + " blocks listed");
    }
    for (const json& b : blocks) {
      BlockChoice c;
      for (const json& s : b.at("select")) {
        const int v = s.get<int>();
        if (v != 0 && v != 1) throw ValidationError("architecture: select entries must be 0 or 1");
        c.select.push_back(v == 1);
      }
      c.fusion = parse_op(b.at("fusion").get<std::string>(), Module::kFusion);
      c.aggregation = parse_op(b.at("agg").get<std::string>(), Module::kAggregation);
      arch.blocks.push_back(std::move(c));
    }
    arch.readout = parse_op(j.at("readout").get<std::string>(), Module::kReadout);
    arch.validate();
    return arch;
  } catch (const json::exception& e) {
    throw ParseError(std::string("architecture: ") + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("architecture: ") + e.what());
  }
}

ArchEncoding load_arch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open architecture file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return arch_from_json(ss.str());
}

void save_arch(const ArchEncoding& arch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << arch_to_json(arch) << '\n';
}

// ---------------------------------------------------------------------------
// Relaxation

Tensor arch_weights(const Tensor& alpha, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  return softmax_rows(scalar_mul(alpha, 1.0 / temperature));
}

std::vector<double> arch_weights(std::span<const double> alpha, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (alpha.empty()) return {};
  const double mx = *std::max_element(alpha.begin(), alpha.end());
  std::vector<double> w(alpha.size());
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) total += (w[k] = std::exp((alpha[k] - mx) / temperature));
  for (double& x : w) x /= total;
  return w;
}

Tensor mixed_op(std::span<const Tensor> outputs, const Tensor& weights) {
  if (outputs.empty()) throw ShapeError("mixed_op: no candidates");
  if (weights.size() != outputs.size()) {
    throw ShapeError("mixed_op: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(outputs.size()) + " candidates");
  }
  const int axis = weights.rows() == 1 ? 1 : 0;
  Tensor acc;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const Tensor& o = outputs[k];
    if (o.rows() != outputs.front().rows() || o.cols() != outputs.front().cols()) {
      throw ShapeError("mixed_op: candidate output " + o.shape_str() + " differs from " +
                       outputs.front().shape_str());
    }
    const Tensor term = mul(o, slice(weights, axis, k, k + 1));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

Tensor mixed_op(std::span<const std::function<Tensor(const Tensor&)>> candidates,
                const Tensor& weights, const Tensor& input) {
  std::vector<Tensor> outputs;
  outputs.reserve(candidates.size());
  for (const auto& op : candidates) outputs.push_back(op(input));
  return mixed_op(outputs, weights);
}

// ---------------------------------------------------------------------------
// SupernetSpec

void SupernetSpec::validate() const {
  if (blocks.empty()) throw ConfigError("supernet needs at least one block");
  if (hidden == 0 || input_dim == 0 || output_dim == 0)
    throw ConfigError("supernet widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string where = "block " + std::to_string(b + 1);
    check_candidates(blocks[b].fusion, Module::kFusion, where + " fusion");
    check_candidates(blocks[b].aggregation, Module::kAggregation, where + " aggregation");
  }
  check_candidates(readout, Module::kReadout, "readout");
}

SupernetSpec SupernetSpec::uniform(std::size_t num_blocks, std::span<const OpKind> fusion,
                                   std::span<const OpKind> aggregation,
                                   std::span<const OpKind> readout) {
  SupernetSpec s;
  s.blocks.assign(num_blocks, BlockSpace{{fusion.begin(), fusion.end()},
                                         {aggregation.begin(), aggregation.end()}});
  s.readout.assign(readout.begin(), readout.end());
  return s;
}

SupernetSpec SupernetSpec::for_architecture(const ArchEncoding& arch) {
  arch.validate();
  SupernetSpec s;
  for (const BlockChoice& c : arch.blocks) s.blocks.push_back(BlockSpace{{c.fusion}, {c.aggregation}});
  s.readout = {arch.readout};
  return s;
}

// ---------------------------------------------------------------------------
// Supernet

Supernet::Supernet(SupernetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(sub_seed(seed, "supernet.init"));
  const std::size_t d = spec_.hidden;
  encoder_weight_ = weights_.glorot("encoder.weight", spec_.input_dim, d, rng);
  encoder_bias_ = weights_.constant("encoder.bias", 1, d, 0.0);
  for (std::size_t b = 0; b < spec_.num_blocks(); ++b) {
    const std::size_t block = b + 1;
    const BlockSpace& space = spec_.blocks[b];
    const std::string prefix = block_prefix(block);
    BlockParams p;
    for (OpKind op : space.fusion)
      p.fusion.push_back(make_fusion(op, d, block, weights_, prefix + ".fusion", rng));
    for (OpKind op : space.aggregation)
      p.aggregation.push_back(make_aggregation(op, d, weights_, prefix + ".agg", rng, spec_.options));
    if (spec_.edge_dim > 0 && contains(space.aggregation, OpKind::kGen))
      p.edge_projection = weights_.glorot(prefix + ".edge_projection", spec_.edge_dim, d, rng);
    p.norm_gain = weights_.constant(prefix + ".norm.gain", 1, d, 1.0);
    p.norm_bias = weights_.constant(prefix + ".norm.bias", 1, d, 0.0);

    for (std::size_t j = 0; j < block; ++j) {
      p.select_alpha.push_back(
          alphas_.constant("alpha." + prefix + ".select" + std::to_string(j), 1, 2, 0.0));
    }
    p.fusion_alpha = alphas_.constant("alpha." + prefix + ".fusion", 1, space.fusion.size(), 0.0);
    p.aggregation_alpha =
        alphas_.constant("alpha." + prefix + ".agg", 1, space.aggregation.size(), 0.0);
    blocks_.push_back(std::move(p));
  }
  readout_alpha_ = alphas_.constant("alpha.readout", 1, spec_.readout.size(), 0.0);
  head_weight_ = weights_.glorot("head.weight", d, spec_.output_dim, rng);
  head_bias_ = weights_.constant("head.bias", 1, spec_.output_dim, 0.0);
}

const Tensor& Supernet::selection_alpha(std::size_t block, std::size_t input) const {
  return blocks_.at(block - 1).select_alpha.at(input);
}
const Tensor& Supernet::fusion_alpha(std::size_t block) const {
  return blocks_.at(block - 1).fusion_alpha;
}
const Tensor& Supernet::aggregation_alpha(std::size_t block) const {
  return blocks_.at(block - 1).aggregation_alpha;
}
const Tensor& Supernet::readout_alpha() const { return readout_alpha_; }

Tensor Supernet::encode(const GraphBatch& batch) const {
  if (batch.node_features.cols != spec_.input_dim) {
    throw ShapeError("supernet: batch has " + std::to_string(batch.node_features.cols) +
                     " input features, network expects " + std::to_string(spec_.input_dim));
  }
  return add(matmul(batch.node_features.to_tensor(), encoder_weight_), encoder_bias_);
}

void Supernet::check_architecture(const ArchEncoding& arch) const {
  arch.validate();
  if (arch.num_blocks() != spec_.num_blocks()) {
    throw ValidationError("architecture has " + std::to_string(arch.num_blocks()) +
                          " blocks, network has " + std::to_string(spec_.num_blocks()));
  }
  for (std::size_t b = 0; b < arch.num_blocks(); ++b) {
    const BlockChoice& c = arch.blocks[b];
    if (!contains(spec_.blocks[b].fusion, c.fusion) ||
        !contains(spec_.blocks[b].aggregation, c.aggregation)) {
      throw ValidationError("block " + std::to_string(b + 1) +
                            ": architecture op outside the network's candidate set");
    }
  }
  if (!contains(spec_.readout, arch.readout))
    throw ValidationError("readout op outside the network's candidate set");
}

Tensor Supernet::block_forward(std::size_t block, std::span<const Tensor> history,
                               const GraphBatch& batch, const ForwardMode& mode) const {
  if (block < 1 || block > spec_.num_blocks())
    throw ShapeError("block_forward: block index " + std::to_string(block) + " out of range");
  if (history.size() != block) {
    throw ShapeError("block_forward: block " + std::to_string(block) + " needs " +
                     std::to_string(block) + " inputs, got " + std::to_string(history.size()));
  }
  const BlockParams& p = blocks_[block - 1];
  const BlockSpace& space = spec_.blocks[block - 1];

  Tensor edge_embedding;
  if (p.edge_projection.defined() && batch.edge_features)
    edge_embedding = matmul(batch.edge_features->to_tensor(), p.edge_projection);

  if (const auto* relaxed = std::get_if<RelaxedMode>(&mode)) {
    const double t = relaxed->temperature;
    std::vector<Tensor> selected;
    selected.reserve(block);
    for (std::size_t j = 0; j < block; ++j) {
      const Tensor identity_weight = slice(arch_weights(p.select_alpha[j], t), 1, 1, 2);
      selected.push_back(select(identity_weight, history[j]));
    }
    std::vector<Tensor> fused;
    for (std::size_t k = 0; k < space.fusion.size(); ++k)
      fused.push_back(fuse(space.fusion[k], selected, p.fusion[k]));
    const Tensor mixed_fusion = mixed_op(fused, arch_weights(p.fusion_alpha, t));
    std::vector<Tensor> aggregated;
    for (std::size_t k = 0; k < space.aggregation.size(); ++k) {
      aggregated.push_back(
          aggregate(space.aggregation[k], batch, mixed_fusion, p.aggregation[k], edge_embedding));
    }
    return mixed_op(aggregated, arch_weights(p.aggregation_alpha, t));
  }

  const ArchEncoding& arch = std::get<DiscreteMode>(mode).arch;
  const BlockChoice& choice = arch.blocks.at(block - 1);
  std::vector<Tensor> masked;
  masked.reserve(block);
  for (std::size_t j = 0; j < block; ++j) {
    masked.push_back(choice.select.at(j) ? history[j]
                                         : Tensor::zeros(history[j].rows(), history[j].cols()));
  }
  const std::size_t f = index_of(space.fusion, choice.fusion);
  const std::size_t a = index_of(space.aggregation, choice.aggregation);
  if (f >= space.fusion.size() || a >= space.aggregation.size())
    throw ValidationError("block " + std::to_string(block) + ": op outside candidate set");
  const Tensor fused = fuse(choice.fusion, masked, p.fusion[f]);
  return aggregate(choice.aggregation, batch, fused, p.aggregation[a], edge_embedding);
}

Tensor Supernet::post_block(std::size_t block, const Tensor& h, Rng* dropout_rng) const {
  const BlockParams& p = blocks_[block - 1];
  Tensor out = relu(add(mul(layer_norm_rows(h), p.norm_gain), p.norm_bias));
  if (dropout_rng != nullptr && spec_.dropout > 0.0) {
    const double keep = 1.0 - spec_.dropout;
    std::vector<double> mask(out.size());
    for (double& m : mask) m = uniform01(*dropout_rng) < keep ? 1.0 / keep : 0.0;
    out = mul(out, Tensor::from(out.rows(), out.cols(), std::move(mask)));
  }
  return out;
}

Tensor Supernet::forward(const GraphBatch& batch, const ForwardMode& mode, Rng* dropout_rng) const {
  if (const auto* discrete = std::get_if<DiscreteMode>(&mode)) check_architecture(discrete->arch);
  std::vector<Tensor> history;
  history.reserve(spec_.num_blocks() + 1);
  history.push_back(encode(batch));
  for (std::size_t block = 1; block <= spec_.num_blocks(); ++block) {
    const Tensor out = block_forward(block, history, batch, mode);
    history.push_back(post_block(block, out, dropout_rng));
  }
  const Tensor& last = history.back();
  Tensor graph_repr;
  if (const auto* relaxed = std::get_if<RelaxedMode>(&mode)) {
    std::vector<Tensor> outs;
    for (OpKind op : spec_.readout) outs.push_back(readout(op, last, batch));
    graph_repr = mixed_op(outs, arch_weights(readout_alpha_, relaxed->temperature));
  } else {
    graph_repr = readout(std::get<DiscreteMode>(mode).arch.readout, last, batch);
  }
  return add(matmul(graph_repr, head_weight_), head_bias_);
}

ArchEncoding Supernet::derive() const {
  ArchEncoding arch;
  for (std::size_t b = 0; b < spec_.num_blocks(); ++b) {
    const BlockParams& p = blocks_[b];
    const BlockSpace& space = spec_.blocks[b];
    BlockChoice c;
    for (const Tensor& alpha : p.select_alpha) c.select.push_back(argmax_first(alpha.data()) == 1);
    if (std::none_of(c.select.begin(), c.select.end(), [](bool s) { return s; })) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < p.select_alpha.size(); ++j) {
        if (p.select_alpha[j].data()[1] > p.select_alpha[best].data()[1]) best = j;
      }
      c.select[best] = true;
    }
    c.fusion = space.fusion[argmax_first(p.fusion_alpha.data())];
    c.aggregation = space.aggregation[argmax_first(p.aggregation_alpha.data())];
    arch.blocks.push_back(std::move(c));
  }
  arch.readout = spec_.readout[argmax_first(readout_alpha_.data())];
  return arch;
}

void Supernet::set_one_hot(const ArchEncoding& arch, double magnitude) {
  check_architecture(arch);
  for (std::size_t b = 0; b < arch.num_blocks(); ++b) {
    BlockParams& p = blocks_[b];
    const BlockChoice& c = arch.blocks[b];
    for (std::size_t j = 0; j < c.select.size(); ++j)
      fill_one_hot(p.select_alpha[j], c.select[j] ? 1 : 0, magnitude);
    fill_one_hot(p.fusion_alpha, index_of(spec_.blocks[b].fusion, c.fusion), magnitude);
    fill_one_hot(p.aggregation_alpha, index_of(spec_.blocks[b].aggregation, c.aggregation),
                 magnitude);
  }
  fill_one_hot(readout_alpha_, index_of(spec_.readout, arch.readout), magnitude);
}

}  // namespace graphnas
