#include "graphnas/search.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "graphnas/errors.hpp"
#include "graphnas/rng.hpp"
#include "graphnas/trainer.hpp"

namespace graphnas {

using nlohmann::json;

AnnealSchedule parse_anneal(std::string_view name) {
  if (name == "linear") return AnnealSchedule::kLinear;
  if (name == "exponential") return AnnealSchedule::kExponential;
  throw ConfigError("unknown anneal schedule '" + std::string(name) +
                    "' (expected linear or exponential)");
}

std::string_view anneal_name(AnnealSchedule schedule) {
  return schedule == AnnealSchedule::kLinear ? "linear" : "exponential";
}

void SearchConfig::validate() const {
  if (num_blocks == 0) throw ConfigError("search: num_blocks must be at least 1");
  if (hidden == 0) throw ConfigError("search: hidden must be positive");
  if (epochs == 0) throw ConfigError("search: epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("search: batch_size must be positive");
  if (!(lr_weights > 0.0) || !(lr_alpha > 0.0))
    throw ConfigError("search: learning rates must be positive");
  if (!(grad_clip >= 0.0)) throw ConfigError("search: grad_clip must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("search: momentum must lie in [0, 1)");
  if (!(lambda_end > 0.0)) throw ConfigError("search: lambda_end must be positive");
  if (!(lambda_start >= lambda_end))
    throw ConfigError("search: lambda_start must be at least lambda_end");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("search: dropout must lie in [0, 1)");
  if (aggregation_candidates.empty() && !fixed_aggregation)
    throw ConfigError("search: aggregation candidate set is empty");
  if (fusion_candidates.empty()) throw ConfigError("search: fusion candidate set is empty");
  if (readout_candidates.empty()) throw ConfigError("search: readout candidate set is empty");
  auto check_module = [](const std::vector<OpKind>& ops, Module module) {
    for (OpKind op : ops) {
      if (op_module(op) != module) {
        throw ConfigError("search: '" + std::string(op_name(op)) + "' is not a " +
                          std::string(module_name(module)) + " op");
      }
    }
  };
  check_module(aggregation_candidates, Module::kAggregation);
  check_module(fusion_candidates, Module::kFusion);
  check_module(readout_candidates, Module::kReadout);
  if (fixed_aggregation && op_module(*fixed_aggregation) != Module::kAggregation) {
    throw ConfigError("search: fixed aggregation '" + std::string(op_name(*fixed_aggregation)) +
                      "' is not an aggregation op");
  }
}

std::vector<OpKind> SearchConfig::aggregation_space() const {
  if (fixed_aggregation) return {*fixed_aggregation};
  return aggregation_candidates;
}

double anneal(std::size_t epoch, const SearchConfig& config) {
  if (config.epochs <= 1) return config.lambda_start;
  const double t = static_cast<double>(std::min(epoch, config.epochs - 1)) /
                   static_cast<double>(config.epochs - 1);
  if (config.anneal == AnnealSchedule::kLinear)
    return config.lambda_start + (config.lambda_end - config.lambda_start) * t;
  return config.lambda_start * std::pow(config.lambda_end / config.lambda_start, t);
}

SupernetSpec search_space(const Dataset& dataset, const SearchConfig& config) {
  config.validate();
  if (dataset.graphs.empty()) throw ValidationError("search: dataset is empty");
  const std::vector<OpKind> aggregation = config.aggregation_space();
  SupernetSpec spec = SupernetSpec::uniform(config.num_blocks, config.fusion_candidates,
                                            aggregation, config.readout_candidates);
  spec.hidden = config.hidden;
  spec.input_dim = dataset.graphs.front().feature_dim();
  spec.edge_dim = dataset.graphs.front().edge_feature_dim();
  spec.output_dim = dataset.task.output_width();
  spec.dropout = config.dropout;
  spec.options = config.options;
  return spec;
}

// ---------------------------------------------------------------------------
// Searcher

Searcher::Searcher(const Dataset& data, const SearchConfig& config)
    : task_(data.task),
      net_(std::make_unique<Supernet>(search_space(data, config), sub_seed(config.seed, "search.init"))),
      weights_(net_->weights().tensors()),
      alphas_(net_->alphas().tensors()),
      weight_opt_(std::make_unique<MomentumSgd>(weights_, config.lr_weights, config.momentum)),
      alpha_opt_(std::make_unique<MomentumSgd>(alphas_, config.lr_alpha, 0.0)),
      clip_(config.grad_clip) {}

void Searcher::freeze(bool weights_trainable) {
  for (Tensor& t : weights_) {
    t.set_requires_grad(weights_trainable);
    t.zero_grad();
  }
  for (Tensor& t : alphas_) {
    t.set_requires_grad(!weights_trainable);
    t.zero_grad();
  }
}

double Searcher::weight_step(const GraphBatch& batch, double lambda, Rng* dropout_rng) {
  freeze(true);
  const Tensor loss = task_loss(net_->forward(batch, RelaxedMode{lambda}, dropout_rng), batch, task_);
  loss.backward();
  if (clip_ > 0.0) clip_grad_norm(weights_, clip_);
  weight_opt_->step();
  return loss.item();
}

double Searcher::alpha_step(const GraphBatch& batch, double lambda) {
  freeze(false);
  const Tensor loss = task_loss(net_->forward(batch, RelaxedMode{lambda}), batch, task_);
  loss.backward();
  alpha_opt_->step();
  return loss.item();
}

// ---------------------------------------------------------------------------
// Search driver

SearchResult search(const Dataset& dataset, const SearchConfig& config) {
  config.validate();
  const Dataset data = config.virtual_node ? with_virtual_nodes(dataset) : dataset;
  if (data.splits.train.empty()) throw ValidationError("search: train split is empty");
  if (data.splits.valid.empty()) throw ValidationError("search: valid split is empty");
  const Metric metric = config.metric.value_or(default_metric(data.task.type));
  check_metric(metric, data.task.type);

  Searcher searcher(data, config);
  Supernet& net = searcher.supernet();
  Rng shuffle_rng(sub_seed(config.seed, "search.shuffle"));
  Rng dropout_rng(sub_seed(config.seed, "search.dropout"));
  const std::vector<GraphBatch> valid_eval =
      make_batches(data, data.splits.valid, std::max<std::size_t>(config.batch_size, 256));

  SearchResult result;
  std::optional<double> best_metric;
  IndexVec train_order = data.splits.train;
  IndexVec valid_order = data.splits.valid;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda = anneal(epoch, config);
    graphnas::shuffle(train_order.begin(), train_order.end(), shuffle_rng);
    graphnas::shuffle(valid_order.begin(), valid_order.end(), shuffle_rng);
    const auto train_batches = make_batches(data, train_order, config.batch_size);
    const auto valid_batches = make_batches(data, valid_order, config.batch_size);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < train_batches.size(); ++i) {
      const GraphBatch& tb = train_batches[i];
      loss_sum += searcher.weight_step(tb, lambda, &dropout_rng) * static_cast<double>(tb.num_graphs);
      seen += tb.num_graphs;
      searcher.alpha_step(valid_batches[i % valid_batches.size()], lambda);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lambda = lambda;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    const EvalReport valid =
        evaluate_batches(net, RelaxedMode{lambda}, valid_eval, data.task, metric);
    rec.valid_loss = valid.loss;
    rec.valid_metric = valid.value;
    rec.arch = net.derive();
    if (!best_metric || rec.valid_metric > *best_metric) {
      best_metric = rec.valid_metric;
      result.best_epoch = epoch;
      result.alphas.clear();
      for (const auto& [name, t] : net.alphas().entries())
        result.alphas.emplace_back(name, std::vector<double>(t.data().begin(), t.data().end()));
    }
    result.history.push_back(std::move(rec));
  }
  if (result.history.empty()) {
    // Zero epochs: the uniform mixture derives the first candidate everywhere.
    result.arch = net.derive();
    for (const auto& [name, t] : net.alphas().entries())
      result.alphas.emplace_back(name, std::vector<double>(t.data().begin(), t.data().end()));
  } else {
    result.arch = result.history[result.best_epoch].arch;
  }
  return result;
}

ArchEncoding random_architecture(const SearchConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(sub_seed(seed, "random_architecture"));
  const std::vector<OpKind> aggregation = config.aggregation_space();
  auto pick = [&rng](const std::vector<OpKind>& ops) { return ops[uniform_index(rng, ops.size())]; };
  ArchEncoding arch;
  for (std::size_t block = 1; block <= config.num_blocks; ++block) {
    BlockChoice c;
    do {
      c.select.assign(block, false);
      for (std::size_t j = 0; j < block; ++j) c.select[j] = uniform_index(rng, 2) == 1;
    } while (std::none_of(c.select.begin(), c.select.end(), [](bool s) { return s; }));
    c.fusion = pick(config.fusion_candidates);
    c.aggregation = pick(aggregation);
    arch.blocks.push_back(std::move(c));
  }
  arch.readout = pick(config.readout_candidates);
  return arch;
}

std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const EpochRecord& r : history) {
    json j{{"epoch", r.epoch},
           {"lambda", r.lambda},
           {"train_loss", r.train_loss},
           {"valid_loss", r.valid_loss},
           {"valid_metric", r.valid_metric},
           {"arch", json::parse(arch_to_json(r.arch))}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

json op_list(const std::vector<OpKind>& ops) {
  json a = json::array();
  for (OpKind op : ops) a.push_back(std::string(op_name(op)));
  return a;
}

std::vector<OpKind> parse_op_list(const json& j, Module module) {
  std::vector<OpKind> ops;
  for (const json& e : j) ops.push_back(parse_op(e.get<std::string>(), module));
  return ops;
}

}  // namespace

std::string alphas_to_json(const SearchResult& result, const SearchConfig& config) {
  json j;
  j["num_blocks"] = config.num_blocks;
  j["best_epoch"] = result.best_epoch;
  j["fusion"] = op_list(config.fusion_candidates);
  j["aggregation"] = op_list(config.aggregation_space());
  j["readout"] = op_list(config.readout_candidates);
  json alphas = json::object();
  for (const auto& [name, values] : result.alphas) alphas[name] = values;
  j["alphas"] = std::move(alphas);
  return j.dump(2);
}

ArchEncoding derive_from_alphas(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("alpha file: malformed JSON (") + e.what() + ")");
  }
  try {
    const auto fusion = parse_op_list(j.at("fusion"), Module::kFusion);
    const auto aggregation = parse_op_list(j.at("aggregation"), Module::kAggregation);
    const auto readout = parse_op_list(j.at("readout"), Module::kReadout);
    SupernetSpec spec =
        SupernetSpec::uniform(j.at("num_blocks").get<std::size_t>(), fusion, aggregation, readout);
    spec.hidden = 1;
    Supernet net(spec, 0);
    const json& alphas = j.at("alphas");
    for (const auto& entry : net.alphas().entries()) {
      Tensor t = entry.second;
      const auto values = alphas.at(entry.first).get<std::vector<double>>();
      if (values.size() != t.size())
        throw ValidationError("alpha file: '" + entry.first + "' has the wrong length");
      std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
    return net.derive();
  } catch (const json::exception& e) {
    throw ParseError(std::string("alpha file: ") + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("alpha file: ") + e.what());
  }
}

}  // namespace graphnas
