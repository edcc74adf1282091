#include "graphnas/trainer.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graphnas/errors.hpp"
#include "graphnas/optim.hpp"
#include "graphnas/rng.hpp"

namespace graphnas {

using nlohmann::json;

std::vector<int> binary_targets(const GraphBatch& batch, std::size_t num_tasks) {
  std::vector<int> out;
  out.reserve(batch.num_graphs * num_tasks);
  for (const Label& label : batch.labels) {
    const auto* v = std::get_if<std::vector<BinaryTarget>>(&label);
    if (v == nullptr || v->size() != num_tasks)
      throw ValidationError("label does not hold " + std::to_string(num_tasks) + " binary targets");
    for (BinaryTarget t : *v) out.push_back(static_cast<int>(t));
  }
  return out;
}

std::vector<std::size_t> class_targets(const GraphBatch& batch) {
  std::vector<std::size_t> out;
  out.reserve(batch.num_graphs);
  for (const Label& label : batch.labels) {
    const auto* c = std::get_if<std::size_t>(&label);
    if (c == nullptr) throw ValidationError("label is not a class index");
    out.push_back(*c);
  }
  return out;
}

Tensor task_loss(const Tensor& logits, const GraphBatch& batch, const TaskDescriptor& task) {
  if (task.type == TaskType::kMultiClass) return cross_entropy(logits, class_targets(batch));
  return bce_masked(logits, binary_targets(batch, task.output_width()));
}

std::vector<GraphBatch> make_batches(const Dataset& dataset, std::span<const std::size_t> indices,
                                     std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<GraphBatch> out;
  std::vector<const Graph*> members;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    members.clear();
    const std::size_t end = std::min(indices.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) members.push_back(&dataset.graphs.at(indices[i]));
    out.push_back(batch_graphs(std::span<const Graph* const>(members)));
  }
  return out;
}

Dataset with_virtual_nodes(const Dataset& dataset) {
  Dataset out;
  out.task = dataset.task;
  out.splits = dataset.splits;
  out.graphs.reserve(dataset.graphs.size());
  for (const Graph& g : dataset.graphs) out.graphs.push_back(add_virtual_node(g));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate_batches(const Supernet& net, const ForwardMode& mode,
                            std::span<const GraphBatch> batches, const TaskDescriptor& task,
                            Metric metric) {
  check_metric(metric, task.type);
  NoGradGuard no_grad;
  const std::size_t width = task.output_width();
  std::vector<double> scores;
  std::vector<int> binary;
  std::vector<std::size_t> classes;
  double loss_sum = 0.0;
  std::size_t graphs = 0;
  for (const GraphBatch& batch : batches) {
    const Tensor logits = net.forward(batch, mode);
    loss_sum += task_loss(logits, batch, task).item() * static_cast<double>(batch.num_graphs);
    graphs += batch.num_graphs;
    scores.insert(scores.end(), logits.data().begin(), logits.data().end());
    if (task.type == TaskType::kMultiClass) {
      const auto c = class_targets(batch);
      classes.insert(classes.end(), c.begin(), c.end());
    } else {
      const auto b = binary_targets(batch, width);
      binary.insert(binary.end(), b.begin(), b.end());
    }
  }
  if (graphs == 0) throw ValidationError("cannot evaluate an empty split");

  EvalReport report;
  report.metric = metric;
  report.loss = loss_sum / static_cast<double>(graphs);
  report.num_graphs = graphs;
  if (task.type == TaskType::kMultiClass) {
    std::vector<std::size_t> predicted(graphs);
    for (std::size_t i = 0; i < graphs; ++i)
      predicted[i] = argmax(std::span<const double>(scores).subspan(i * width, width));
    report.value = accuracy(predicted, classes);
  } else if (metric == Metric::kAccuracy) {
    std::vector<std::size_t> predicted, truth;
    for (std::size_t i = 0; i < graphs; ++i) {
      if (binary[i] == -1) continue;
      predicted.push_back(scores[i] > 0.0 ? 1 : 0);
      truth.push_back(static_cast<std::size_t>(binary[i]));
    }
    report.value = accuracy(predicted, truth);
  } else {
    MetricValue v = multi_task_metric(metric, scores, binary, width);
    report.value = v.value;
    if (width > 1) report.per_task = std::move(v.per_task);
  }
  return report;
}

EvalReport evaluate(const Supernet& net, const ForwardMode& mode, const Dataset& dataset,
                    SplitName split, Metric metric, std::size_t batch_size) {
  const auto batches = make_batches(dataset, dataset.split(split), batch_size);
  EvalReport r = evaluate_batches(net, mode, batches, dataset.task, metric);
  r.split = split;
  return r;
}

std::string report_to_json(std::span<const EvalReport> reports, std::size_t best_epoch) {
  json j;
  j["best_epoch"] = best_epoch;
  if (!reports.empty()) j["metric"] = std::string(metric_name(reports.front().metric));
  for (const EvalReport& r : reports) {
    json s{{"value", r.value}, {"loss", r.loss}, {"num_graphs", r.num_graphs}};
    if (!r.per_task.empty()) {
      json per = json::array();
      for (const auto& v : r.per_task) per.push_back(v ? json(*v) : json(nullptr));
      s["per_task"] = std::move(per);
    }
    j[std::string(split_name(r.split))] = std::move(s);
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Training

void HParams::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (hidden == 0) throw ConfigError("hidden size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (options.mf_max_degree == 0) throw ConfigError("mf_max_degree must be positive");
  if (options.expc_factor == 0) throw ConfigError("expc_factor must be positive");
}

const EvalReport* TrainResult::report(SplitName split) const {
  for (const EvalReport& r : reports)
    if (r.split == split) return &r;
  return nullptr;
}

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const ParamStore& store) {
  Snapshot s;
  for (const auto& [name, t] : store.entries()) s.emplace_back(t.data().begin(), t.data().end());
  return s;
}

void restore(ParamStore& store, const Snapshot& s) {
  std::size_t i = 0;
  for (const auto& entry : store.entries()) {
    Tensor t = entry.second;
    std::copy(s[i].begin(), s[i].end(), t.mutable_data().begin());
    ++i;
  }
}

SupernetSpec spec_for(const ArchEncoding& arch, const Dataset& data, std::size_t hidden,
                      double dropout, const OpOptions& options) {
  SupernetSpec spec = SupernetSpec::for_architecture(arch);
  const Graph& first = data.graphs.front();
  spec.hidden = hidden;
  spec.input_dim = first.feature_dim();
  spec.edge_dim = first.edge_feature_dim();
  spec.output_dim = data.task.output_width();
  spec.dropout = dropout;
  spec.options = options;
  return spec;
}

}  // namespace

TrainResult train_discrete(const ArchEncoding& arch, const Dataset& dataset, const HParams& hp) {
  hp.validate();
  arch.validate();
  if (dataset.graphs.empty()) throw ValidationError("dataset is empty");
  const Metric metric = hp.metric.value_or(default_metric(dataset.task.type));
  check_metric(metric, dataset.task.type);
  const Dataset data = hp.virtual_node ? with_virtual_nodes(dataset) : dataset;
  if (data.splits.train.empty()) throw ValidationError("train split is empty");

  TrainResult result;
  result.arch = arch;
  result.model = std::make_shared<Supernet>(
      spec_for(arch, data, hp.hidden, hp.dropout, hp.options), sub_seed(hp.seed, "trainer.init"));
  Supernet& net = *result.model;
  for (const auto& entry : net.alphas().entries()) {
    Tensor t = entry.second;
    t.set_requires_grad(false);
  }
  Adam optimizer(net.weights().tensors(), hp.learning_rate);
  Rng shuffle_rng(sub_seed(hp.seed, "trainer.shuffle"));
  Rng dropout_rng(sub_seed(hp.seed, "trainer.dropout"));
  const ForwardMode mode = DiscreteMode{arch};
  const std::vector<GraphBatch> valid_batches =
      make_batches(data, data.splits.valid, std::max<std::size_t>(hp.batch_size, 256));
  const bool has_valid = !valid_batches.empty();

  std::optional<double> best_value;
  Snapshot best = snapshot(net.weights());
  if (hp.epochs == 0 && has_valid) {
    best_value = evaluate_batches(net, mode, valid_batches, data.task, metric).value;
    result.history.push_back({0, 0.0, best_value});
  }

  IndexVec order = data.splits.train;
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    graphnas::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const GraphBatch& batch : make_batches(data, order, hp.batch_size)) {
      net.weights().zero_grad();
      const Tensor loss = task_loss(net.forward(batch, mode, &dropout_rng), batch, data.task);
      loss.backward();
      optimizer.step();
      loss_sum += loss.item() * static_cast<double>(batch.num_graphs);
      seen += batch.num_graphs;
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(seen), std::nullopt};
    if (has_valid) {
      log.valid_metric = evaluate_batches(net, mode, valid_batches, data.task, metric).value;
      if (!best_value || *log.valid_metric > *best_value) {
        best_value = log.valid_metric;
        best = snapshot(net.weights());
        result.best_epoch = epoch;
      }
    } else {
      best = snapshot(net.weights());
      result.best_epoch = epoch;
    }
    result.history.push_back(log);
  }
  restore(net.weights(), best);

  for (SplitName split : {SplitName::kTrain, SplitName::kValid, SplitName::kTest}) {
    if (data.split(split).empty()) continue;
    result.reports.push_back(evaluate(net, mode, data, split, metric));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json spec_to_json(const SupernetSpec& spec) {
  return {{"hidden", spec.hidden},
          {"input_dim", spec.input_dim},
          {"edge_dim", spec.edge_dim},
          {"output_dim", spec.output_dim},
          {"dropout", spec.dropout},
          {"mf_max_degree", spec.options.mf_max_degree},
          {"expc_factor", spec.options.expc_factor},
          {"gat_negative_slope", spec.options.gat_negative_slope}};
}

constexpr int kManifestVersion = 1;

}  // namespace

void save_model(const Supernet& net, const ModelInfo& info, const std::string& bin_path,
                const std::string& manifest_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw ConfigError("cannot write '" + bin_path + "'");
  json params = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : net.weights().entries()) {
    bin.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
    params.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
    offset += t.size();
  }
  if (!bin) throw ConfigError("failed writing '" + bin_path + "'");

  json m;
  m["format"] = "graphnas-model";
  m["version"] = kManifestVersion;
  m["arch"] = json::parse(arch_to_json(info.arch));
  m["spec"] = spec_to_json(info.spec);
  m["task"] = {{"type", std::string(task_type_name(info.task.type))},
               {"num_tasks", info.task.num_tasks}};
  m["virtual_node"] = info.virtual_node;
  m["total_values"] = offset;
  m["params"] = std::move(params);
  std::ofstream out(manifest_path);
  if (!out) throw ConfigError("cannot write '" + manifest_path + "'");
  out << m.dump(2) << '\n';
}

LoadedModel load_model(const std::string& bin_path, const std::string& manifest_path) {
  std::ifstream min(manifest_path);
  if (!min) throw ParseError("cannot open model manifest '" + manifest_path + "'");
  LoadedModel loaded;
  json m;
  try {
    m = json::parse(min);
    if (m.at("format").get<std::string>() != "graphnas-model" ||
        m.at("version").get<int>() != kManifestVersion)
      throw ValidationError("model manifest: unsupported format or version");
    loaded.info.arch = arch_from_json(m.at("arch").dump());
    const json& s = m.at("spec");
    SupernetSpec spec = SupernetSpec::for_architecture(loaded.info.arch);
    spec.hidden = s.at("hidden").get<std::size_t>();
    spec.input_dim = s.at("input_dim").get<std::size_t>();
    spec.edge_dim = s.at("edge_dim").get<std::size_t>();
    spec.output_dim = s.at("output_dim").get<std::size_t>();
    spec.dropout = s.at("dropout").get<double>();
    spec.options.mf_max_degree = s.at("mf_max_degree").get<std::size_t>();
    spec.options.expc_factor = s.at("expc_factor").get<std::size_t>();
    spec.options.gat_negative_slope = s.at("gat_negative_slope").get<double>();
    loaded.info.spec = spec;
    loaded.info.task.type = parse_task_type(m.at("task").at("type").get<std::string>());
    loaded.info.task.num_tasks = m.at("task").at("num_tasks").get<std::size_t>();
    loaded.info.virtual_node = m.at("virtual_node").get<bool>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("model manifest: ") + e.what());
  }

  loaded.model = std::make_shared<Supernet>(loaded.info.spec, 0);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw ParseError("cannot open model weights '" + bin_path + "'");
  const auto entries = loaded.model->weights().entries();
  const json& params = m.at("params");
  if (params.size() != entries.size())
    throw ValidationError("model manifest lists " + std::to_string(params.size()) +
                          " tensors, architecture needs " + std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor t = entries[i].second;
    if (params[i].at("name").get<std::string>() != entries[i].first ||
        params[i].at("rows").get<std::size_t>() != t.rows() ||
        params[i].at("cols").get<std::size_t>() != t.cols())
      throw ValidationError("model manifest: tensor '" + entries[i].first + "' does not match");
    auto values = t.mutable_data();
    bin.read(reinterpret_cast<char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!bin) throw ValidationError("model weights file is truncated");
  }
  if (bin.peek() != std::ifstream::traits_type::eof())
    throw ValidationError("model weights file has trailing data");
  return loaded;
}

}  // namespace graphnas
