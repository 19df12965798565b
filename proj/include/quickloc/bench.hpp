#pragma once

// Measurement harness: threshold sensitivity sweeps, the depth-vs-cost
// study, wall-clock timing with confidence intervals, CSV emitters.

#include <cstdint>
#include <string>
#include <vector>

#include "quickloc/model.hpp"
#include "quickloc/train.hpp"

namespace quickloc {

struct SweepSpec {
  UncertaintyMethod method = UncertaintyMethod::MarginOfConfidence;
  std::vector<double> thetas;        // evaluated in the given order
  std::vector<bool> exits_enabled;   // same theta applied to every enabled exit
};

// Inclusive grid start, start+step, ... while <= stop (within fp slack).
std::vector<double> theta_range(double start, double stop, double step);

struct CurvePoint {
  double theta = 0;
  double accuracy = 0;
  double error_m = 0;  // NaN without coordinates
  double mean_macs = 0;
  double mean_ns = 0;
  std::vector<double> exit_rates;
  double final_rate = 0;
};

std::vector<CurvePoint> sweep_threshold(const MultiExitModel& m, const SweepSpec& spec,
                                        const LabeledDataset& ds);

struct DepthPoint {
  int depth = 0;
  double accuracy = 0;
  std::int64_t macs = 0;   // full forward cost of the depth-d baseline
  double mean_ns = 0;
};

// Trains one baseline per requested convolution depth (1..3 with the stock
// widths) on the same data and scores it on the evaluation set.
std::vector<DepthPoint> depth_study(const std::vector<int>& depths,
                                    const LabeledDataset& train,
                                    const LabeledDataset& eval,
                                    const TrainParams& tp, int input_side,
                                    int classes);

struct TimingStats {
  double mean_ns = 0;
  double ci95_ns = 0;  // 1.96 * s / sqrt(n)
  int repetitions = 0;
};

// Repeats full passes over the dataset, single-threaded, discarding
// `warmup` inferences first; each repetition contributes one mean-per-sample
// figure. Needs at least 2 repetitions and 1 sample.
TimingStats time_inference(const MultiExitModel& m, const ExitPolicy& policy,
                           const LabeledDataset& ds, int repetitions,
                           int warmup = 10);

void write_sweep_csv(const std::vector<CurvePoint>& points, UncertaintyMethod method,
                     const std::string& path);
void write_depth_csv(const std::vector<DepthPoint>& points, const std::string& path);
void write_timing_csv(const std::vector<std::pair<std::string, TimingStats>>& rows,
                      const std::string& path);

std::vector<CurvePoint> read_sweep_csv(const std::string& path);

}  // namespace quickloc
