#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphnas/config.hpp"
#include "graphnas/errors.hpp"
#include "graphnas/gradcheck_suite.hpp"
#include "graphnas/search.hpp"
#include "graphnas/synthetic.hpp"
#include "graphnas/trainer.hpp"

namespace fs = std::filesystem;
using namespace graphnas;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool strict_grid = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "Run seed; overrides the config");
  cmd->add_option("--out", c.out, "Output directory; overrides the config");
  cmd->add_flag("--strict-grid", c.strict_grid, "Reject train settings outside the grid");
}

RunConfig load_config(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_run_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.strict_grid) cfg.check_grid();
  return cfg;
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_reports(const std::vector<EvalReport>& reports) {
  std::printf("%-6s %-9s %10s %10s %7s\n", "split", "metric", "value", "loss", "graphs");
  for (const EvalReport& r : reports) {
    std::printf("%-6s %-9s %10.4f %10.4f %7zu\n", std::string(split_name(r.split)).c_str(),
                std::string(metric_name(r.metric)).c_str(), r.value, r.loss, r.num_graphs);
  }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string task = "triangle-threshold";
  SyntheticSpec spec;
  std::string features;
  std::uint64_t seed = 0;
  std::string out = "data";
};

int cmd_synth(SynthArgs& a) {
  a.spec.task = parse_synthetic_task(a.task);
  if (!a.features.empty()) a.spec.features = parse_feature_mode(a.features);
  a.spec.validate();
  const Dataset d = generate_synthetic(a.spec, a.seed);
  const fs::path dir = prepare_out(a.out);
  save_dataset(d, (dir / "graphs.jsonl").string(), (dir / "splits.json").string());
  nlohmann::json task{{"task_type", std::string(task_type_name(d.task.type))},
                      {"num_tasks", d.task.num_tasks},
                      {"generator", std::string(synthetic_task_name(a.spec.task))},
                      {"seed", a.seed}};
  write_file(dir / "task.json", task.dump(2) + "\n");

  double nodes = 0, edges = 0, positives = 0;
  for (const Graph& g : d.graphs) {
    nodes += static_cast<double>(g.num_nodes());
    edges += static_cast<double>(g.edges.size()) / 2.0;
    positives += std::get<std::vector<BinaryTarget>>(g.label)[0] == BinaryTarget::kPositive ? 1 : 0;
  }
  const double n = static_cast<double>(d.graphs.size());
  std::printf("graphs        %zu\n", d.graphs.size());
  std::printf("mean nodes    %.4f\n", nodes / n);
  std::printf("mean edges    %.4f\n", edges / n);
  std::printf("positive rate %.4f\n", positives / n);
  std::printf("splits        %zu/%zu/%zu\n", d.splits.train.size(), d.splits.valid.size(),
              d.splits.test.size());
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

struct SearchArgs {
  Common common;
  std::string fixed_agg;
  std::optional<std::size_t> blocks;
  std::optional<std::size_t> epochs;
};

int cmd_search(const SearchArgs& a) {
  RunConfig cfg = load_config(a.common);
  if (!a.fixed_agg.empty()) cfg.search.fixed_aggregation = parse_op(a.fixed_agg, Module::kAggregation);
  if (a.blocks) cfg.search.num_blocks = *a.blocks;
  if (a.epochs) cfg.search.epochs = *a.epochs;
  cfg.search.validate();
  const Dataset data = load_run_dataset(cfg);
  const SearchResult result = search(data, cfg.search);
  const fs::path dir = prepare_out(cfg.output_dir);
  save_arch(result.arch, (dir / "arch.json").string());
  write_file(dir / "history.jsonl", history_to_jsonl(result.history));
  write_file(dir / "alpha.json", alphas_to_json(result, cfg.search) + "\n");
  for (const EpochRecord& r : result.history) {
    std::printf("epoch %3zu  lambda %.4f  train_loss %.4f  valid_loss %.4f  valid_metric %.4f\n",
                r.epoch, r.lambda, r.train_loss, r.valid_loss, r.valid_metric);
  }
  std::printf("best epoch %zu\n%s\n", result.best_epoch, arch_to_json(result.arch).c_str());
  return 0;
}

struct DeriveArgs {
  std::string alpha;
  std::string out = ".";
};

int cmd_derive(const DeriveArgs& a) {
  const ArchEncoding arch = derive_from_alphas(read_file(a.alpha));
  const fs::path dir = prepare_out(a.out);
  save_arch(arch, (dir / "arch.json").string());
  std::printf("%s\n", arch_to_json(arch).c_str());
  return 0;
}

struct TrainArgs {
  Common common;
  std::string arch;
  std::optional<std::size_t> epochs;
  std::string metric;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_config(a.common);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (!a.metric.empty()) cfg.train.metric = parse_metric(a.metric);
  const ArchEncoding arch = load_arch(a.arch);
  const Dataset data = load_run_dataset(cfg);
  const TrainResult result = train_discrete(arch, data, cfg.train);
  const fs::path dir = prepare_out(cfg.output_dir);
  ModelInfo info{arch, result.model->spec(), data.task, cfg.train.virtual_node};
  save_model(*result.model, info, (dir / "model.bin").string(),
             (dir / "model.manifest.json").string());
  write_file(dir / "report.json", report_to_json(result.reports, result.best_epoch) + "\n");
  std::printf("best epoch %zu\n", result.best_epoch);
  print_reports(result.reports);
  return 0;
}

struct EvalArgs {
  Common common;
  std::string model;
  std::string metric;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = load_config(a.common);
  if (a.model.empty()) throw ConfigError("--model is required");
  const fs::path model_dir(a.model);
  const LoadedModel loaded = load_model((model_dir / "model.bin").string(),
                                        (model_dir / "model.manifest.json").string());
  Dataset data = load_run_dataset(cfg);
  if (loaded.info.virtual_node) data = with_virtual_nodes(data);
  if (data.task.type != loaded.info.task.type) {
    throw ConfigError("model was trained on a " + std::string(task_type_name(loaded.info.task.type)) +
                      " task, dataset is " + std::string(task_type_name(data.task.type)));
  }
  Metric metric = default_metric(data.task.type);
  if (cfg.train.metric) metric = *cfg.train.metric;
  if (!a.metric.empty()) metric = parse_metric(a.metric);
  check_metric(metric, data.task.type);
  std::vector<EvalReport> reports;
  for (SplitName split : {SplitName::kTrain, SplitName::kValid, SplitName::kTest}) {
    if (data.split(split).empty()) continue;
    reports.push_back(evaluate(*loaded.model, DiscreteMode{loaded.info.arch}, data, split, metric));
  }
  const fs::path dir = prepare_out(cfg.output_dir);
  write_file(dir / "report.json", report_to_json(reports, 0) + "\n");
  print_reports(reports);
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  GradCheckOptions options;
  options.seed = a.seed;
  options.inject_fault = a.inject_fault;
  const auto start = std::chrono::steady_clock::now();
  const GradCheckReport report = run_gradcheck_suite(options);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const GradCheckEntry& e : report.entries) {
    std::printf("%-4s %-12s %-20s %.3e\n", e.passed ? "ok" : "FAIL", e.category.c_str(),
                e.name.c_str(), e.max_error);
  }
  std::printf("%zu checks, tolerance %.0e: %s\n", report.entries.size(), report.tolerance,
              report.passed() ? "PASS" : "FAIL");
  // Timing goes to stderr so stdout stays reproducible.
  std::fprintf(stderr, "gradcheck took %.2f s\n", seconds);
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable graph architecture search"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Generate a labelled synthetic dataset");
  s->add_option("--task", synth.task, "triangle-threshold or degree-parity");
  s->add_option("--num-graphs", synth.spec.num_graphs);
  s->add_option("--min-nodes", synth.spec.min_nodes);
  s->add_option("--max-nodes", synth.spec.max_nodes);
  s->add_option("--edge-prob", synth.spec.edge_prob);
  s->add_option("--threshold", synth.spec.threshold);
  s->add_option("--features", synth.features, "constant or degree");
  s->add_option("--feature-dim", synth.spec.feature_dim);
  s->add_option("--seed", synth.seed);
  s->add_option("--out", synth.out, "Output directory");

  SearchArgs search_args;
  auto* se = app.add_subcommand("search", "Search an architecture");
  add_common(se, search_args.common);
  se->add_option("--fixed-agg", search_args.fixed_agg, "Pin every block's aggregation op");
  se->add_option("--blocks", search_args.blocks, "Number of blocks");
  se->add_option("--epochs", search_args.epochs, "Search epochs");

  DeriveArgs derive_args;
  auto* de = app.add_subcommand("derive", "Derive an architecture from saved logits");
  de->add_option("--alpha", derive_args.alpha, "alpha.json written by search")->required();
  de->add_option("--out", derive_args.out, "Output directory");

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a discrete architecture from scratch");
  add_common(tr, train_args.common);
  tr->add_option("--arch", train_args.arch, "Architecture JSON")->required();
  tr->add_option("--epochs", train_args.epochs, "Training epochs");
  tr->add_option("--metric", train_args.metric, "rocauc, ap or accuracy");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a saved model");
  add_common(ev, eval_args.common);
  ev->add_option("--model", eval_args.model, "Directory holding model.bin and model.manifest.json");
  ev->add_option("--metric", eval_args.metric, "rocauc, ap or accuracy");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every operation");
  g->add_option("--seed", gc.seed);
  g->add_flag("--inject-fault", gc.inject_fault)->group("");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) return cmd_synth(synth);
    if (*se) return cmd_search(search_args);
    if (*de) return cmd_derive(derive_args);
    if (*tr) return cmd_train(train_args);
    if (*ev) return cmd_eval(eval_args);
    if (*g) return cmd_gradcheck(gc);
  } catch (const graphnas::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
