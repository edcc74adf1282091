#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace graphnas {

struct GradCheckEntry {
  std::string name;
  std::string category;  // primitive, loss, selection, fusion, aggregation, readout, supernet
  double max_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<GradCheckEntry> entries;

  bool passed() const;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double eps = 1e-4;
  /// Adds a deliberately wrong backward rule; used to test the harness itself.
  bool inject_fault = false;
};

/// Finite-difference check of every primitive, every operator and the full
/// relaxed supernet.
GradCheckReport run_gradcheck_suite(const GradCheckOptions& options = {});

}  // namespace graphnas
