#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "graphnas/graph.hpp"
#include "graphnas/search.hpp"
#include "graphnas/synthetic.hpp"
#include "graphnas/trainer.hpp"

namespace graphnas {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetSection {
  /// Graph file (JSON-lines); relative paths resolve against the config file.
  std::optional<std::string> path;
  TaskDescriptor task;
  /// Generated in memory when set (and `path` is not).
  std::optional<SyntheticSpec> synthetic;
  /// Generator seed; the run seed when unset.
  std::optional<std::uint64_t> synthetic_seed;
};

/// Hyper-parameter grid profiles; each matches one benchmark column of the
/// published grid table.
enum class GridProfile { kMolhiv, kMolpcba, kPpa };

GridProfile parse_grid_profile(std::string_view name);
std::string_view grid_profile_name(GridProfile profile);
/// Profile implied by a task type when the config names none.
GridProfile default_grid_profile(TaskType type);

struct GridValues {
  std::vector<double> learning_rate;
  std::vector<std::size_t> batch_size;
  std::vector<std::size_t> hidden;
  std::vector<double> dropout;
};

const GridValues& grid_values(GridProfile profile);

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DatasetSection dataset;
  SearchConfig search;
  HParams train;
  std::optional<GridProfile> grid;

  /// Propagates the run seed to every section.
  void set_seed(std::uint64_t value);
  /// Throws ConfigError when a train hyper-parameter lies outside the grid.
  void check_grid() const;
};

/// `base_dir` anchors relative dataset paths.
RunConfig parse_run_config(std::string_view json_text, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

/// Loads or generates the dataset the config describes.
Dataset load_run_dataset(const RunConfig& config);

}  // namespace graphnas
