#include "quickloc/model.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace quickloc {

namespace {

Shape3 shape_after(const std::vector<LayerSpec>& layers, Shape3 in, int upto) {
  Shape3 s = in;
  for (int i = 0; i <= upto; ++i) s = layer_output_shape(layers[i], s);
  return s;
}

// Weight blocks are created in serialization order: trunk and branch blocks
// interleaved by depth, final head last-stage style (matches the published
// layer table for the reference model).
void init_block_for(MultiExitModel& m, const LayerSpec& l, Shape3 in,
                    std::mt19937& rng) {
  if (!l.trainable()) return;
  m.weights.add(l.name) = init_layer_block<Real>(l, in, rng);
}

int argmax(const std::vector<Real>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Run a head/branch stack and capture the pre-softmax activation.
struct HeadOutput {
  std::vector<Real> logits;
  std::vector<Real> probs;
};
HeadOutput run_head(const std::vector<LayerSpec>& layers, const WeightStore& weights,
                    const Tensor3& input) {
  Tensor3 a = input;
  HeadOutput out;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Softmax) out.logits = a.data;
    a = forward_layer(l, weights, a);
  }
  out.probs = a.data;
  return out;
}

void validate_branch(const ExitBranch& b, const std::vector<LayerSpec>& backbone,
                     Shape3 input, int classes) {
  if (b.attach_after < 0 || b.attach_after >= static_cast<int>(backbone.size()))
    throw InvalidArgument("exit '" + b.name + "': bad attachment point");
  if (b.layers.size() < 2 || b.layers.back().kind != LayerKind::Softmax ||
      b.layers[b.layers.size() - 2].kind != LayerKind::Dense ||
      b.layers[b.layers.size() - 2].units != classes)
    throw InvalidArgument("exit '" + b.name +
                          "': branch must end in dense(classes) + softmax");
  // shape-check the whole branch against the attachment activation
  Shape3 s = shape_after(backbone, input, b.attach_after);
  for (const auto& l : b.layers) s = layer_output_shape(l, s);
}

}  // namespace

std::vector<LayerSpec> MultiExitModel::baseline_stack() const {
  std::vector<LayerSpec> stack = backbone;
  stack.insert(stack.end(), final_head.begin(), final_head.end());
  return stack;
}

std::vector<std::string> MultiExitModel::branch_block_names(int exit_index) const {
  std::vector<std::string> names;
  for (const auto& l : exits.at(exit_index).layers)
    if (l.trainable()) names.push_back(l.name);
  return names;
}

std::vector<std::pair<std::string, std::int64_t>> param_table(const MultiExitModel& m) {
  std::vector<std::pair<std::string, std::int64_t>> rows;
  for (const auto& [name, blk] : m.weights.blocks)
    rows.emplace_back(name, blk.param_count());
  return rows;
}

std::int64_t total_params(const MultiExitModel& m) { return m.weights.total_params(); }

std::int64_t baseline_params(const MultiExitModel& m) {
  std::int64_t n = 0;
  Shape3 s = m.input;
  for (const auto& l : m.backbone) {
    n += layer_param_count(l, s);
    s = layer_output_shape(l, s);
  }
  for (const auto& l : m.final_head) {
    n += layer_param_count(l, s);
    s = layer_output_shape(l, s);
  }
  return n;
}

std::int64_t branch_params(const MultiExitModel& m, int exit_index) {
  std::int64_t n = 0;
  for (const auto& name : m.branch_block_names(exit_index))
    n += m.weights.get(name).param_count();
  return n;
}

ModelCosts model_costs(const MultiExitModel& m) {
  ModelCosts costs;
  Shape3 s = m.input;
  std::int64_t acc = 0;
  for (const auto& l : m.backbone) {
    acc += layer_mac_count(l, s);
    s = layer_output_shape(l, s);
    costs.backbone_prefix.push_back(acc);
  }
  Shape3 h = s;
  for (const auto& l : m.final_head) {
    costs.final_head += layer_mac_count(l, h);
    h = layer_output_shape(l, h);
  }
  for (const auto& b : m.exits) {
    Shape3 bs = shape_after(m.backbone, m.input, b.attach_after);
    std::int64_t macs = 0;
    for (const auto& l : b.layers) {
      macs += layer_mac_count(l, bs);
      bs = layer_output_shape(l, bs);
    }
    costs.branch.push_back(macs);
  }
  return costs;
}

ExitPolicy all_disabled_policy(const MultiExitModel& m) {
  ExitPolicy p(m.exits.size());
  for (auto& r : p) r.enabled = false;
  return p;
}

InferenceTrace infer_with_exits(const MultiExitModel& m, const ExitPolicy& policy,
                                const Tensor3& image) {
  if (image.shape() != m.input)
    throw ShapeError("input image is " + image.shape().str() + ", model expects " +
                     m.input.str());
  if (policy.size() != m.exits.size())
    throw InvalidArgument("policy has " + std::to_string(policy.size()) +
                          " rules for " + std::to_string(m.exits.size()) + " exits");

  const auto t0 = std::chrono::steady_clock::now();
  InferenceTrace trace;
  trace.scores.assign(m.exits.size(), std::numeric_limits<double>::quiet_NaN());

  Shape3 s = m.input;
  Tensor3 a = image;
  std::size_t next_exit = 0;
  for (int i = 0; i < static_cast<int>(m.backbone.size()); ++i) {
    trace.macs += layer_mac_count(m.backbone[i], s);
    s = layer_output_shape(m.backbone[i], s);
    a = forward_layer(m.backbone[i], m.weights, a);
    while (next_exit < m.exits.size() && m.exits[next_exit].attach_after == i) {
      const std::size_t e = next_exit++;
      if (!policy[e].enabled) continue;
      const auto& branch = m.exits[e];
      Shape3 bs = s;
      for (const auto& l : branch.layers) {
        trace.macs += layer_mac_count(l, bs);
        bs = layer_output_shape(l, bs);
      }
      HeadOutput head = run_head(branch.layers, m.weights, a);
      const double score = uncertainty_score(head.probs, policy[e].method);
      trace.scores[e] = score;
      if (exit_decision(score, policy[e].method, policy[e].theta)) {
        trace.exit_taken = static_cast<int>(e);
        trace.predicted = argmax(head.probs);
        trace.logits = std::move(head.logits);
        trace.probs = std::move(head.probs);
        trace.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        return trace;
      }
    }
  }

  Shape3 hs = s;
  for (const auto& l : m.final_head) {
    trace.macs += layer_mac_count(l, hs);
    hs = layer_output_shape(l, hs);
  }
  HeadOutput head = run_head(m.final_head, m.weights, a);
  trace.exit_taken = -1;
  trace.predicted = argmax(head.probs);
  trace.logits = std::move(head.logits);
  trace.probs = std::move(head.probs);
  trace.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  return trace;
}

InferenceTrace infer_baseline(const MultiExitModel& m, const Tensor3& image) {
  return infer_with_exits(m, all_disabled_policy(m), image);
}

EvalResult evaluate_dataset(const MultiExitModel& m, const ExitPolicy& policy,
                            const LabeledDataset& ds) {
  if (ds.size() == 0) throw InvalidArgument("evaluate_dataset: empty dataset");
  EvalResult r;
  r.samples = ds.size();
  r.exit_rates.assign(m.exits.size(), 0.0);
  std::vector<int> preds(ds.size());
  double macs = 0, ns = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto trace = infer_with_exits(m, policy, rssi_to_tensor(ds.rssi[i]));
    preds[i] = trace.predicted;
    macs += static_cast<double>(trace.macs);
    ns += static_cast<double>(trace.wall_ns);
    if (trace.exit_taken >= 0)
      r.exit_rates[trace.exit_taken] += 1.0;
    else
      r.final_rate += 1.0;
  }
  for (auto& v : r.exit_rates) v /= static_cast<double>(ds.size());
  r.final_rate /= static_cast<double>(ds.size());
  r.mean_macs = macs / static_cast<double>(ds.size());
  r.mean_ns = ns / static_cast<double>(ds.size());
  r.accuracy = top1_accuracy(preds, ds.labels);
  r.error_m = ds.has_coords()
                  ? mean_localization_error(preds, ds.labels, ds.coords)
                  : std::numeric_limits<double>::quiet_NaN();
  return r;
}

// ---------------------------------------------------------------------------

MultiExitModel build_quickloc(int classes, const QuicklocConfig& cfg) {
  if (classes < 2) throw InvalidArgument("build_quickloc: need at least 2 classes");
  MultiExitModel m;
  m.input = {cfg.input_side, cfg.input_side, 1};
  m.classes = classes;
  m.seed = cfg.seed;
  const int k = cfg.kernel;

  m.backbone = {LayerSpec::conv2d("conv1", k, cfg.conv1_filters), LayerSpec::relu(),
                LayerSpec::conv2d("conv2", k, cfg.conv2_filters), LayerSpec::relu(),
                LayerSpec::conv2d("conv3", k, cfg.conv3_filters), LayerSpec::relu()};
  m.final_head = {LayerSpec::flatten(), LayerSpec::dense("final_dense", classes),
                  LayerSpec::softmax()};
  m.exits.push_back({"eea1",
                     1,
                     {LayerSpec::flatten(), LayerSpec::dense("exit1_dense", classes),
                      LayerSpec::softmax()}});
  m.exits.push_back({"eea2",
                     3,
                     {LayerSpec::conv2d("exit2_conv", k, cfg.exit2_filters),
                      LayerSpec::relu(), LayerSpec::flatten(),
                      LayerSpec::dense("exit2_dense", classes), LayerSpec::softmax()}});

  std::mt19937 rng(cfg.seed);
  const Shape3 s0 = m.input;
  const Shape3 s1 = shape_after(m.backbone, s0, 1);  // post conv1+relu
  const Shape3 s2 = shape_after(m.backbone, s0, 3);  // post conv2+relu
  const Shape3 s3 = shape_after(m.backbone, s0, 5);  // post conv3+relu
  init_block_for(m, m.backbone[0], s0, rng);                      // conv1
  init_block_for(m, m.exits[0].layers[1], {1, 1, (int)s1.flat()}, rng);  // exit1 dense
  init_block_for(m, m.backbone[2], s1, rng);                      // conv2
  init_block_for(m, m.exits[1].layers[0], s2, rng);               // exit2 conv
  {
    Shape3 e2 = layer_output_shape(m.exits[1].layers[0], s2);
    init_block_for(m, m.exits[1].layers[3], {1, 1, (int)e2.flat()}, rng);
  }
  init_block_for(m, m.backbone[4], s2, rng);                      // conv3
  init_block_for(m, m.final_head[1], {1, 1, (int)s3.flat()}, rng);

  for (const auto& b : m.exits) validate_branch(b, m.backbone, m.input, classes);
  m.exit_trained.assign(m.exits.size(), 0);
  m.default_policy.assign(m.exits.size(),
                          {true, UncertaintyMethod::MarginOfConfidence, 0.8});
  return m;
}

MultiExitModel build_quickloc_reference(int classes, std::uint32_t seed) {
  QuicklocConfig cfg;
  cfg.seed = seed;
  return build_quickloc(classes, cfg);
}

MultiExitModel build_dscp_variant(int classes, const DscpConfig& cfg) {
  if (classes < 2) throw InvalidArgument("build_dscp_variant: need at least 2 classes");
  if (cfg.pair_filters.empty())
    throw InvalidArgument("build_dscp_variant: need at least one dw/pw pair");
  if (cfg.exit_after_pair < 0 ||
      cfg.exit_after_pair > static_cast<int>(cfg.pair_filters.size()))
    throw InvalidArgument("build_dscp_variant: exit_after_pair out of range");

  MultiExitModel m;
  m.input = {cfg.input_side, cfg.input_side, 1};
  m.classes = classes;
  m.seed = cfg.seed;

  m.backbone = {LayerSpec::conv2d("stem", cfg.kernel, cfg.stem_filters),
                LayerSpec::relu()};
  int attach = 1;  // post-stem relu
  for (std::size_t i = 0; i < cfg.pair_filters.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    m.backbone.push_back(LayerSpec::depthwise("dw" + n, cfg.kernel));
    m.backbone.push_back(LayerSpec::relu());
    m.backbone.push_back(LayerSpec::pointwise("pw" + n, cfg.pair_filters[i]));
    m.backbone.push_back(LayerSpec::relu());
    if (static_cast<int>(i) + 1 == cfg.exit_after_pair)
      attach = static_cast<int>(m.backbone.size()) - 1;
  }
  m.final_head = {LayerSpec::flatten(), LayerSpec::dense("final_dense", classes),
                  LayerSpec::softmax()};
  m.exits.push_back({"ee1",
                     attach,
                     {LayerSpec::flatten(), LayerSpec::dense("exit1_dense", classes),
                      LayerSpec::softmax()}});

  std::mt19937 rng(cfg.seed);
  Shape3 s = m.input;
  for (int i = 0; i < static_cast<int>(m.backbone.size()); ++i) {
    init_block_for(m, m.backbone[i], s, rng);
    s = layer_output_shape(m.backbone[i], s);
    if (i == attach)
      init_block_for(m, m.exits[0].layers[1], {1, 1, (int)s.flat()}, rng);
  }
  init_block_for(m, m.final_head[1], {1, 1, (int)s.flat()}, rng);

  validate_branch(m.exits[0], m.backbone, m.input, classes);
  m.exit_trained.assign(1, 0);
  m.default_policy.assign(1, {true, UncertaintyMethod::Entropy, 0.03});
  return m;
}

MultiExitModel build_ujiloc_variant(int classes, const UjilocConfig& cfg) {
  if (classes < 2) throw InvalidArgument("build_ujiloc_variant: need at least 2 classes");
  MultiExitModel m;
  m.input = {cfg.input_side, cfg.input_side, 1};
  m.classes = classes;
  m.seed = cfg.seed;

  m.backbone = {LayerSpec::conv2d("conv1", cfg.kernel, cfg.conv1_filters),
                LayerSpec::relu(),
                LayerSpec::maxpool(cfg.pool, cfg.pool_stride),
                LayerSpec::conv2d("conv2", cfg.kernel, cfg.conv2_filters),
                LayerSpec::relu(),
                LayerSpec::maxpool(cfg.pool, cfg.pool_stride)};
  m.final_head = {LayerSpec::flatten(), LayerSpec::dense("fc", cfg.fc_units),
                  LayerSpec::relu(), LayerSpec::dense("final_dense", classes),
                  LayerSpec::softmax()};
  m.exits.push_back({"ee1",
                     2,  // post first pooled stage
                     {LayerSpec::flatten(), LayerSpec::dense("exit1_dense", classes),
                      LayerSpec::softmax()}});

  std::mt19937 rng(cfg.seed);
  Shape3 s = m.input;
  for (int i = 0; i < static_cast<int>(m.backbone.size()); ++i) {
    init_block_for(m, m.backbone[i], s, rng);
    s = layer_output_shape(m.backbone[i], s);
    if (i == 2) init_block_for(m, m.exits[0].layers[1], {1, 1, (int)s.flat()}, rng);
  }
  Shape3 h = s;
  for (const auto& l : m.final_head) {
    init_block_for(m, l, h, rng);
    h = layer_output_shape(l, h);
  }

  validate_branch(m.exits[0], m.backbone, m.input, classes);
  m.exit_trained.assign(1, 0);
  m.default_policy.assign(1, {true, UncertaintyMethod::Entropy, 0.03});
  return m;
}

}  // namespace quickloc
