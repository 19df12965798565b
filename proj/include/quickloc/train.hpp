#pragma once

// SGD training for the baseline trunk and, afterwards, each exit branch
// against frozen backbone features.

#include <cstdint>
#include <vector>

#include "quickloc/model.hpp"

namespace quickloc {

struct TrainParams {
  double lr = 0.01;
  int epochs = 20;
  int batch = 32;
  std::uint32_t seed = 1;
  bool verbose = false;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  double train_accuracy = 0;       // on the training set, after the last epoch
};

// Trains the backbone + final head. Branch blocks are untouched. Aborts with
// TrainingDiverged if the loss turns non-finite.
TrainReport train_baseline(MultiExitModel& m, const LabeledDataset& ds,
                           const TrainParams& p);

// Trains one branch with every backbone/final block frozen: attachment
// features are computed once and only the branch blocks receive updates.
// Requires a trained baseline.
TrainReport train_exit_branch(MultiExitModel& m, int exit_index,
                              const LabeledDataset& ds, const TrainParams& p);

// All branches in depth order.
std::vector<TrainReport> train_all_exits(MultiExitModel& m, const LabeledDataset& ds,
                                         const TrainParams& p);

}  // namespace quickloc
