#pragma once

// RSSI fingerprint handling: dBm normalization, square-image encoding,
// dataset loaders (native CSV and the UJIndoorLoc schema), a synthetic
// generator, stratified splits, and localization metrics.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "quickloc/tensor.hpp"

namespace quickloc {

// Sentinel for a WAP that was not observed.
constexpr double kMissingRssiDbm = -100.0;

// Ordered WAP identifiers; position = pixel order. Unique by invariant.
using WapIndex = std::vector<std::string>;

// Per-WAP signal strengths in dBm, already clamped to [-100, 0].
using RssiVector = std::vector<float>;

// Square single-channel pixel grid encoding one RSSI observation.
struct FingerprintImage {
  int side = 0;
  std::vector<std::uint8_t> pixels;  // row-major, trailing pad pixels are 0
};

// dBm -> pixel intensity. Clamps to [-100, 0] first, then maps linearly to
// [0, 255] with round-half-up. Non-finite input is rejected.
int normalize_rssi(double dbm);

// Minimal side s with s*s >= n.
int image_side_for(std::size_t n);

FingerprintImage encode_image(const RssiVector& v);

// Pixel intensities scaled to [0, 1] as the model input plane.
Tensor3 image_to_tensor(const FingerprintImage& img);
Tensor3 rssi_to_tensor(const RssiVector& v);

struct LabeledDataset {
  WapIndex wap_index;
  std::vector<RssiVector> rssi;
  std::vector<int> labels;  // reference-point (or building/floor class) index
  int num_classes = 0;
  // Planar coordinates per label, meters. Empty when the task has none
  // (e.g. building/floor classification).
  std::vector<std::array<double, 2>> coords;
  std::string split_tag;

  std::size_t size() const { return rssi.size(); }
  bool has_coords() const { return !coords.empty(); }
};

// Native schema: header `label,x,y,WAP_<id>,...`; blank RSSI cell = not
// observed. Duplicate WAP columns and non-numeric cells are load errors.
LabeledDataset load_native(const std::string& path);
void save_native(const LabeledDataset& ds, const std::string& path);

// UJIndoorLoc: WAP### columns followed by the published metadata columns.
// Rows are labeled by (building, floor) in building-major order; the +100
// "not detected" sentinel maps to -100 dBm.
LabeledDataset load_ujindoorloc(const std::string& path);

struct SynthParams {
  int classes = 16;
  int waps = 64;
  int samples_per_class = 100;
  double easy_fraction = 0.8;
  double noise_db = 5.0;
  std::uint32_t seed = 1;
};

// Synthetic benchmark: each class has a base RSSI template; "easy" classes
// get well-separated templates, the rest overlap pairwise. Reference points
// sit 1 m apart on a line. Deterministic per seed.
LabeledDataset synth_generate(const SynthParams& p);

struct SplitResult {
  LabeledDataset train;
  LabeledDataset calib;
  LabeledDataset test;
};

// Stratified per class, reproducible by seed. Fractions must sum to 1.
SplitResult split(const LabeledDataset& ds, double f_train, double f_calib,
                  double f_test, std::uint32_t seed);

// Mean Euclidean distance between predicted and true reference points.
double mean_localization_error(const std::vector<int>& predicted,
                               const std::vector<int>& truth,
                               const std::vector<std::array<double, 2>>& coords);

double top1_accuracy(const std::vector<int>& predicted,
                     const std::vector<int>& truth);

}  // namespace quickloc
