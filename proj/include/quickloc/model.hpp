#pragma once

// Multi-exit model assembly and the conditional-exit inference loop.

#include <cstdint>
#include <string>
#include <vector>

#include "quickloc/fingerprint.hpp"
#include "quickloc/net.hpp"
#include "quickloc/uncertainty.hpp"

namespace quickloc {

// A branch head tapped off the backbone. The branch sees the (post-ReLU)
// activation of backbone layer `attach_after` and must end in
// dense(#classes) + softmax.
struct ExitBranch {
  std::string name;
  int attach_after = 0;
  std::vector<LayerSpec> layers;
};

struct MultiExitModel {
  Shape3 input;
  int classes = 0;
  std::vector<LayerSpec> backbone;    // feature trunk, exits tap into this
  std::vector<LayerSpec> final_head;  // flatten ... dense(classes), softmax
  std::vector<ExitBranch> exits;      // ordered by attachment depth
  WeightStore weights;                // backbone + head + branch blocks
  WapIndex wap_index;

  bool baseline_trained = false;
  std::vector<char> exit_trained;
  ExitPolicy default_policy;

  // provenance recorded into the manifest
  std::uint32_t seed = 0;
  std::string source_digest;

  int exit_count() const { return static_cast<int>(exits.size()); }
  std::vector<LayerSpec> baseline_stack() const;  // backbone + final head
  // Names of the weight blocks owned by one branch.
  std::vector<std::string> branch_block_names(int exit_index) const;
};

// Per-layer parameter counts in weight-block (serialization) order.
std::vector<std::pair<std::string, std::int64_t>> param_table(const MultiExitModel& m);
std::int64_t total_params(const MultiExitModel& m);
std::int64_t baseline_params(const MultiExitModel& m);
std::int64_t branch_params(const MultiExitModel& m, int exit_index);

// MAC cost of running the backbone up to (and including) layer index,
// the full baseline path, and each branch body.
struct ModelCosts {
  std::vector<std::int64_t> backbone_prefix;  // [i] = MACs of layers 0..i
  std::int64_t final_head = 0;
  std::vector<std::int64_t> branch;  // per exit
  std::int64_t baseline() const {
    return (backbone_prefix.empty() ? 0 : backbone_prefix.back()) + final_head;
  }
};
ModelCosts model_costs(const MultiExitModel& m);

// Which exit fired and what it cost.
struct InferenceTrace {
  int exit_taken = -1;  // exit index, -1 = final head
  std::vector<double> scores;  // per exit; NaN where the exit was not attempted
  int predicted = -1;
  std::int64_t macs = 0;      // executed prefix + attempted branches
  std::int64_t wall_ns = 0;
  std::vector<Real> logits;  // pre-softmax output of the deciding head
  std::vector<Real> probs;
};

// The conditional-exit loop: run the trunk stage by stage; at each enabled
// exit run its branch, score the softmax output, and stop if the decision
// passes. Disabled exits cost nothing. With everything disabled this is
// exactly the baseline forward pass.
InferenceTrace infer_with_exits(const MultiExitModel& m, const ExitPolicy& policy,
                                const Tensor3& image);

// Baseline path only (no exit bookkeeping beyond the trace fields).
InferenceTrace infer_baseline(const MultiExitModel& m, const Tensor3& image);

ExitPolicy all_disabled_policy(const MultiExitModel& m);

// Aggregate metrics of a policy over a dataset.
struct EvalResult {
  double accuracy = 0;
  double error_m = 0;  // NaN when the dataset has no coordinates
  double mean_macs = 0;
  double mean_ns = 0;
  std::vector<double> exit_rates;  // fraction of samples taken at each exit
  double final_rate = 0;
  std::size_t samples = 0;
};
EvalResult evaluate_dataset(const MultiExitModel& m, const ExitPolicy& policy,
                            const LabeledDataset& ds);

// ---------------------------------------------------------------------------
// Builders

// The two-exit reference architecture: three 2x2 stride-1 convolutions with
// 32/64/128 filters, a dense head per exit, branch two carrying an extra
// 8-filter convolution. Defaults reproduce the published layer sizes on a
// 30x30 single-channel input.
struct QuicklocConfig {
  int input_side = 30;
  int conv1_filters = 32;
  int conv2_filters = 64;
  int conv3_filters = 128;
  int exit2_filters = 8;
  int kernel = 2;
  std::uint32_t seed = 1;
};
MultiExitModel build_quickloc(int classes, const QuicklocConfig& cfg = {});
MultiExitModel build_quickloc_reference(int classes = 342, std::uint32_t seed = 1);

// Depthwise-separable variant: a stem convolution followed by
// depthwise+pointwise pairs, one shallow exit path.
struct DscpConfig {
  int input_side = 30;
  int stem_filters = 16;
  int kernel = 3;
  std::vector<int> pair_filters = {32, 64};  // pointwise width per dw/pw pair
  int exit_after_pair = 1;  // branch taps after this many pairs (0 = stem)
  std::uint32_t seed = 1;
};
MultiExitModel build_dscp_variant(int classes, const DscpConfig& cfg = {});

// Conv + pooling + fully-connected variant for building/floor prediction,
// one early exit after the first pooled stage.
struct UjilocConfig {
  int input_side = 23;  // 520 WAP columns
  int conv1_filters = 16;
  int conv2_filters = 32;
  int kernel = 3;
  int pool = 2;
  int pool_stride = 2;
  int fc_units = 64;
  std::uint32_t seed = 1;
};
MultiExitModel build_ujiloc_variant(int classes = 13, const UjilocConfig& cfg = {});

}  // namespace quickloc
