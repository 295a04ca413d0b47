#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace polyest {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  /// Runtime limit in seconds; 0 when the criterion has none.
  double limit_seconds = 0.0;

  /// "PASS 3 forward-cone: ... (0.4 s, limit 10 s)".
  std::string Line() const;
};

struct AcceptanceOptions {
  std::uint64_t seed = 20240601;
  /// Criteria to run (1..10); empty runs all.
  std::vector<int> only;
  /// Scratch directory for the determinism reruns.
  std::filesystem::path scratch = std::filesystem::temp_directory_path() /
                                  "polyest_acceptance";
  /// Called after each criterion (progress output).
  std::function<void(const CriterionResult&)> on_result;
};

/// Runs the acceptance criteria. A criterion passes only when its check holds
/// and it finished within its runtime limit.
std::vector<CriterionResult> RunAcceptance(const AcceptanceOptions& options = {});

}  // namespace polyest
