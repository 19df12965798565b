#include "quickloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace quickloc {

namespace {

// Generic mini-batch SGD over a sequential stack. `inputs` are the stack
// inputs (images or cached branch features), one per sample.
TrainReport sgd_train(const std::vector<LayerSpec>& layers, WeightStore& weights,
                      const std::vector<Tensor3>& inputs,
                      const std::vector<int>& labels, const TrainParams& p,
                      const char* what) {
  if (inputs.empty()) throw InvalidArgument("train: empty dataset");
  if (p.batch < 1 || p.epochs < 0) throw InvalidArgument("train: bad hyperparameters");

  TrainReport report;
  std::mt19937 rng(p.seed);
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(p.batch)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(p.batch));
      GradientStore batch_grads;
      for (std::size_t k = start; k < end; ++k) {
        const auto& x = inputs[order[k]];
        const int y = labels[order[k]];
        const auto act = forward_cached(layers, weights, x);
        loss_sum += cross_entropy_loss(act.back().data, y);
        accumulate(batch_grads, backward(layers, weights, x, y, &act));
      }
      scale(batch_grads, 1.0 / static_cast<double>(end - start));
      sgd_step(weights, batch_grads, p.lr);
    }
    const double mean_loss = loss_sum / static_cast<double>(inputs.size());
    if (!std::isfinite(mean_loss))
      throw TrainingDiverged(std::string(what) + ": non-finite loss at epoch " +
                             std::to_string(epoch + 1));
    report.epoch_loss.push_back(mean_loss);
    if (p.verbose)
      std::fprintf(stderr, "%s epoch %d/%d loss %.4f\n", what, epoch + 1, p.epochs,
                   mean_loss);
  }

  std::size_t hits = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto out = forward_stack(layers, weights, inputs[i]);
    const int pred = static_cast<int>(
        std::max_element(out.data.begin(), out.data.end()) - out.data.begin());
    if (pred == labels[i]) ++hits;
  }
  report.train_accuracy = static_cast<double>(hits) / static_cast<double>(inputs.size());
  return report;
}

std::vector<Tensor3> encode_all(const MultiExitModel& m, const LabeledDataset& ds) {
  std::vector<Tensor3> xs;
  xs.reserve(ds.size());
  for (const auto& v : ds.rssi) {
    auto t = rssi_to_tensor(v);
    if (t.shape() != m.input)
      throw ShapeError("dataset image is " + t.shape().str() + ", model expects " +
                       m.input.str());
    xs.push_back(std::move(t));
  }
  return xs;
}

}  // namespace

TrainReport train_baseline(MultiExitModel& m, const LabeledDataset& ds,
                           const TrainParams& p) {
  const auto stack = m.baseline_stack();
  const auto report =
      sgd_train(stack, m.weights, encode_all(m, ds), ds.labels, p, "baseline");
  m.baseline_trained = true;
  if (m.wap_index.empty()) m.wap_index = ds.wap_index;
  return report;
}

TrainReport train_exit_branch(MultiExitModel& m, int exit_index,
                              const LabeledDataset& ds, const TrainParams& p) {
  if (!m.baseline_trained)
    throw InvalidArgument("train_exit_branch: baseline is untrained");
  if (exit_index < 0 || exit_index >= m.exit_count())
    throw InvalidArgument("train_exit_branch: no exit " + std::to_string(exit_index));
  const auto& branch = m.exits[exit_index];

  // Backbone is frozen here, so attachment features are fixed per sample;
  // compute them once and train the branch on the cache.
  const auto images = encode_all(m, ds);
  std::vector<LayerSpec> prefix(m.backbone.begin(),
                                m.backbone.begin() + branch.attach_after + 1);
  std::vector<Tensor3> feats;
  feats.reserve(images.size());
  for (const auto& x : images) feats.push_back(forward_stack(prefix, m.weights, x));

  const auto report = sgd_train(branch.layers, m.weights, feats, ds.labels, p,
                                branch.name.c_str());
  m.exit_trained[exit_index] = 1;
  return report;
}

std::vector<TrainReport> train_all_exits(MultiExitModel& m, const LabeledDataset& ds,
                                         const TrainParams& p) {
  std::vector<TrainReport> reports;
  for (int e = 0; e < m.exit_count(); ++e)
    reports.push_back(train_exit_branch(m, e, ds, p));
  return reports;
}

}  // namespace quickloc
