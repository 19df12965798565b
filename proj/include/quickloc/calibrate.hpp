#pragma once

// Post-deployment self-configuration: enumerate exit-switch x threshold
// combinations, score each on a labeled calibration set, pick one.

#include <cstdint>
#include <string>
#include <vector>

#include "quickloc/model.hpp"

namespace quickloc {

// Threshold grid for one exit. Grids must be non-empty and sorted.
struct ExitGrid {
  UncertaintyMethod method = UncertaintyMethod::MarginOfConfidence;
  std::vector<double> thetas;
};

struct ConfigSpace {
  std::vector<ExitGrid> per_exit;  // one grid per exit
};

// The stock grids: 0.1..0.9 for margin/least-confidence/entropy, a coarse
// ladder for ratio.
ConfigSpace default_config_space(int exit_count, UncertaintyMethod method);

// All-off baseline first, then every enabled subset crossed with its grids.
// Disabled exits carry no threshold.
std::vector<ExitPolicy> enumerate_configs(const ConfigSpace& space);

struct ConfigReport {
  ExitPolicy policy;
  double accuracy = 0;
  double error_m = 0;  // NaN without coordinates
  double mean_macs = 0;
  double mean_ns = 0;
  std::vector<double> exit_rates;
  double final_rate = 0;
  std::uint64_t footprint_bytes = 0;  // resident parameter bytes

  int enabled_count() const;
};

// 4 bytes per resident parameter: backbone + final head + enabled branches.
std::uint64_t footprint_bytes(const MultiExitModel& m,
                              const std::vector<bool>& enabled);

ConfigReport evaluate_config(const MultiExitModel& m, const ExitPolicy& policy,
                             const LabeledDataset& calibration);

enum class SelectionKind {
  Default,        // no accuracy loss, then least mean MACs
  LatencyTarget,  // best accuracy subject to mean MACs <= target
  ErrorTarget,    // least mean MACs subject to error <= target
};

struct SelectionPolicy {
  SelectionKind kind = SelectionKind::Default;
  double target = 0;
};

struct CalibrationResult {
  std::vector<ConfigReport> reports;  // reports[0] is the all-off baseline
  int selected = 0;
  bool feasible = true;   // some config met the policy constraints
  bool improved = false;  // selected config strictly beats baseline cost

  const ConfigReport& baseline_report() const { return reports.front(); }
  const ConfigReport& selected_report() const { return reports.at(selected); }
};

// Index into `reports` per the selection policy; `reports[0]` must be the
// baseline. Ties go to fewer enabled exits, then lower mean wall-clock, then
// enumeration order.
int select_config(const std::vector<ConfigReport>& reports,
                  const SelectionPolicy& policy, bool* feasible, bool* improved);

// Evaluate the whole space on one calibration set and select. Evaluations
// are independent and run concurrently over the shared immutable model.
CalibrationResult calibrate_run(const MultiExitModel& m,
                                const LabeledDataset& calibration,
                                const ConfigSpace& space,
                                const SelectionPolicy& policy,
                                bool parallel = true);

void write_calibration_csv(const CalibrationResult& r, const std::string& path);
void write_calibration_json(const CalibrationResult& r, const std::string& path);

// Reads the JSON summary back into a policy (for eval/bench --config).
ExitPolicy load_policy_json(const std::string& path, int exit_count);

}  // namespace quickloc
