#include "graphnas/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "graphnas/errors.hpp"

namespace graphnas {

using nlohmann::json;

GridProfile parse_grid_profile(std::string_view name) {
  if (name == "molhiv") return GridProfile::kMolhiv;
  if (name == "molpcba") return GridProfile::kMolpcba;
  if (name == "ppa") return GridProfile::kPpa;
  throw ConfigError("unknown grid '" + std::string(name) + "' (expected molhiv, molpcba or ppa)");
}

std::string_view grid_profile_name(GridProfile profile) {
  switch (profile) {
    case GridProfile::kMolhiv: return "molhiv";
    case GridProfile::kMolpcba: return "molpcba";
    case GridProfile::kPpa: return "ppa";
  }
  return "?";
}

GridProfile default_grid_profile(TaskType type) {
  switch (type) {
    case TaskType::kBinary: return GridProfile::kMolhiv;
    case TaskType::kMultiBinary: return GridProfile::kMolpcba;
    case TaskType::kMultiClass: return GridProfile::kPpa;
  }
  return GridProfile::kMolhiv;
}

const GridValues& grid_values(GridProfile profile) {
  static const GridValues molhiv{{5e-3, 1e-2, 3e-2, 5e-2, 1e-1}, {128, 256, 512}, {256, 512},
                                 {0.1, 0.2, 0.3}};
  static const GridValues molpcba{{5e-4, 1e-3, 3e-3, 5e-3, 1e-2}, {256, 512, 1024}, {512, 1024},
                                  {0.1, 0.2, 0.3}};
  static const GridValues ppa{{5e-3, 1e-2, 3e-2, 5e-2, 1e-1}, {128, 256, 512}, {256, 512},
                              {0.1, 0.2, 0.3}};
  switch (profile) {
    case GridProfile::kMolhiv: return molhiv;
    case GridProfile::kMolpcba: return molpcba;
    case GridProfile::kPpa: return ppa;
  }
  return molhiv;
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  search.seed = value;
  train.seed = value;
}

namespace {

template <typename T>
std::string list_str(const std::vector<T>& values) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? ", " : "") << values[i];
  os << "]";
  return os.str();
}

template <typename T>
void require_in(const std::string& key, T value, const std::vector<T>& allowed, GridProfile p) {
  const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](T a) {
    if constexpr (std::is_floating_point_v<T>) return std::abs(a - value) <= 1e-12 * std::abs(a);
    else return a == value;
  });
  if (!ok) {
    std::ostringstream os;
    os << "train." << key << " = " << value << " is outside the " << grid_profile_name(p)
       << " grid " << list_str(allowed);
    throw ConfigError(os.str());
  }
}

}  // namespace

void RunConfig::check_grid() const {
  const GridProfile p = grid.value_or(default_grid_profile(dataset.task.type));
  const GridValues& g = grid_values(p);
  require_in("learning_rate", train.learning_rate, g.learning_rate, p);
  require_in("batch_size", train.batch_size, g.batch_size, p);
  require_in("hidden_size", train.hidden, g.hidden, p);
  require_in("dropout", train.dropout, g.dropout, p);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(section + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : obj.items()) {
    if (item.key() == "gamma") {
      throw ConfigError(section +
                        ".gamma: the AUC-margin objective and its gamma parameter are out of "
                        "scope for this engine");
    }
    if (!allowed.contains(item.key()))
      throw ConfigError(section + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::vector<OpKind> read_ops(const json& arr, Module module) {
  std::vector<OpKind> ops;
  for (const json& e : arr) ops.push_back(parse_op(e.get<std::string>(), module));
  return ops;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

SyntheticSpec parse_synthetic(const json& s) {
  check_keys(s, "dataset.synthetic",
             {"seed", "task", "num_graphs", "min_nodes", "max_nodes", "edge_prob", "threshold", "features",
              "feature_dim"});
  SyntheticSpec spec;
  if (s.contains("task")) spec.task = parse_synthetic_task(s.at("task").get<std::string>());
  read(s, "num_graphs", spec.num_graphs);
  read(s, "min_nodes", spec.min_nodes);
  read(s, "max_nodes", spec.max_nodes);
  read(s, "edge_prob", spec.edge_prob);
  read(s, "threshold", spec.threshold);
  if (s.contains("features")) spec.features = parse_feature_mode(s.at("features").get<std::string>());
  read(s, "feature_dim", spec.feature_dim);
  spec.validate();
  return spec;
}

void parse_ops(const json& o, OpOptions& options) {
  check_keys(o, "ops", {"mf_max_degree", "expc_factor", "gat_negative_slope"});
  read(o, "mf_max_degree", options.mf_max_degree);
  read(o, "expc_factor", options.expc_factor);
  read(o, "gat_negative_slope", options.gat_negative_slope);
}

void parse_search(const json& s, SearchConfig& c) {
  check_keys(s, "search",
             {"num_blocks", "hidden", "epochs", "batch_size", "lr_weights", "lr_alpha", "momentum",
              "lambda_start", "lambda_end", "anneal", "fixed_aggregation", "grad_clip",
              "aggregation_candidates", "fusion_candidates", "readout_candidates", "dropout",
              "virtual_node", "metric"});
  read(s, "num_blocks", c.num_blocks);
  read(s, "hidden", c.hidden);
  read(s, "epochs", c.epochs);
  read(s, "batch_size", c.batch_size);
  read(s, "lr_weights", c.lr_weights);
  read(s, "lr_alpha", c.lr_alpha);
  read(s, "momentum", c.momentum);
  read(s, "grad_clip", c.grad_clip);
  read(s, "lambda_start", c.lambda_start);
  read(s, "lambda_end", c.lambda_end);
  read(s, "dropout", c.dropout);
  read(s, "virtual_node", c.virtual_node);
  if (s.contains("anneal")) c.anneal = parse_anneal(s.at("anneal").get<std::string>());
  if (s.contains("fixed_aggregation") && !s.at("fixed_aggregation").is_null()) {
    c.fixed_aggregation =
        parse_op(s.at("fixed_aggregation").get<std::string>(), Module::kAggregation);
  }
  if (s.contains("aggregation_candidates"))
    c.aggregation_candidates = read_ops(s.at("aggregation_candidates"), Module::kAggregation);
  if (s.contains("fusion_candidates"))
    c.fusion_candidates = read_ops(s.at("fusion_candidates"), Module::kFusion);
  if (s.contains("readout_candidates"))
    c.readout_candidates = read_ops(s.at("readout_candidates"), Module::kReadout);
  if (s.contains("metric")) c.metric = parse_metric(s.at("metric").get<std::string>());
}

void parse_train(const json& t, HParams& h) {
  check_keys(t, "train",
             {"learning_rate", "batch_size", "hidden_size", "dropout", "virtual_node", "epochs",
              "metric"});
  read(t, "learning_rate", h.learning_rate);
  read(t, "batch_size", h.batch_size);
  read(t, "hidden_size", h.hidden);
  read(t, "dropout", h.dropout);
  read(t, "virtual_node", h.virtual_node);
  read(t, "epochs", h.epochs);
  if (t.contains("metric")) h.metric = parse_metric(t.at("metric").get<std::string>());
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON (") + e.what() + ")");
  }
  RunConfig c;
  try {
    check_keys(j, "config",
               {"schema_version", "seed", "output_dir", "dataset", "search", "train", "ops", "grid"});
    if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kConfigSchemaVersion) {
      throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version) +
                        " (expected " + std::to_string(kConfigSchemaVersion) + ")");
    }
    read(j, "output_dir", c.output_dir);
    if (j.contains("grid")) c.grid = parse_grid_profile(j.at("grid").get<std::string>());
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      check_keys(d, "dataset", {"path", "splits", "task_type", "num_tasks", "synthetic"});
      if (d.contains("path")) c.dataset.path = resolve(base_dir, d.at("path").get<std::string>());
      if (d.contains("splits"))
        c.dataset.task.splits_path = resolve(base_dir, d.at("splits").get<std::string>());
      if (d.contains("task_type"))
        c.dataset.task.type = parse_task_type(d.at("task_type").get<std::string>());
      read(d, "num_tasks", c.dataset.task.num_tasks);
      if (d.contains("synthetic")) {
        c.dataset.synthetic = parse_synthetic(d.at("synthetic"));
        if (d.at("synthetic").contains("seed"))
          c.dataset.synthetic_seed = d.at("synthetic").at("seed").get<std::uint64_t>();
      }
      if (c.dataset.path && c.dataset.synthetic)
        throw ConfigError("dataset: give either path or synthetic, not both");
      c.dataset.task.validate();
    }
    OpOptions options;
    if (j.contains("ops")) parse_ops(j.at("ops"), options);
    c.search.options = options;
    c.train.options = options;
    if (j.contains("search")) parse_search(j.at("search"), c.search);
    if (j.contains("train")) parse_train(j.at("train"), c.train);
    c.set_seed(j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.search.validate();
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto parent = std::filesystem::path(path).parent_path();
  return parse_run_config(ss.str(), parent.empty() ? "." : parent.string());
}

Dataset load_run_dataset(const RunConfig& config) {
  if (config.dataset.synthetic) {
    return generate_synthetic(*config.dataset.synthetic,
                              config.dataset.synthetic_seed.value_or(config.seed));
  }
  if (!config.dataset.path) throw ConfigError("config: dataset.path is missing");
  if (!std::filesystem::exists(*config.dataset.path))
    throw ConfigError("dataset file '" + *config.dataset.path + "' does not exist");
  if (config.dataset.task.splits_path && !std::filesystem::exists(*config.dataset.task.splits_path))
    throw ConfigError("splits file '" + *config.dataset.task.splits_path + "' does not exist");
  return load_dataset(*config.dataset.path, config.dataset.task);
}

}  // namespace graphnas
