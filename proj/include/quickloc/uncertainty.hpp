#pragma once

// The four uncertainty-sampling scores over a softmax distribution, and the
// accept/continue rule each one uses at an exit.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "quickloc/error.hpp"

namespace quickloc {

enum class UncertaintyMethod {
  LeastConfidence,    // 1 - p1; confident side is small
  MarginOfConfidence, // p1 - p2; confident side is large
  RatioOfConfidence,  // p1 / p2; confident side is large
  Entropy,            // -sum p ln p / ln K; confident side is small
};

const char* method_name(UncertaintyMethod m);
UncertaintyMethod method_from_name(const std::string& name);

// Threshold domain per method: [0,1] except ratio, which needs theta >= 1.
void validate_theta(UncertaintyMethod m, double theta);

// True when the score is on the confident side of theta, i.e. the exit's
// prediction is accepted.
bool exit_decision(double score, UncertaintyMethod m, double theta);

namespace detail {

template <typename T>
std::pair<double, double> top_two(const std::vector<T>& probs) {
  double p1 = -1, p2 = -1;
  for (T v : probs) {
    const double d = static_cast<double>(v);
    if (d > p1) {
      p2 = p1;
      p1 = d;
    } else if (d > p2) {
      p2 = d;
    }
  }
  return {p1, p2};
}

}  // namespace detail

// Score a probability vector (K >= 2, sums to 1 within 1e-6). Entropy is
// natural-log and normalized by ln K so one threshold grid serves any class
// count.
template <typename T>
double uncertainty_score(const std::vector<T>& probs, UncertaintyMethod m) {
  if (probs.size() < 2)
    throw InvalidArgument("uncertainty_score: need at least 2 classes");
  double sum = 0;
  for (T v : probs) {
    const double d = static_cast<double>(v);
    if (!(d >= 0.0) || d > 1.0 + 1e-9)
      throw InvalidArgument("uncertainty_score: invalid probability");
    sum += d;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw InvalidArgument("uncertainty_score: probabilities sum to " +
                          std::to_string(sum));
  const auto [p1, p2] = detail::top_two(probs);
  switch (m) {
    case UncertaintyMethod::LeastConfidence:
      return 1.0 - p1;
    case UncertaintyMethod::MarginOfConfidence:
      return p1 - p2;
    case UncertaintyMethod::RatioOfConfidence:
      return p1 / std::max(p2, 1e-12);
    case UncertaintyMethod::Entropy: {
      double h = 0;
      for (T v : probs) {
        const double d = static_cast<double>(v);
        if (d > 0) h -= d * std::log(d);
      }
      return h / std::log(static_cast<double>(probs.size()));
    }
  }
  throw InvalidArgument("uncertainty_score: unknown method");
}

// Per-exit knobs: enable switch, sampling method, and threshold.
struct ExitRule {
  bool enabled = false;
  UncertaintyMethod method = UncertaintyMethod::MarginOfConfidence;
  double theta = 0.8;
};

// One rule per exit, in depth order.
using ExitPolicy = std::vector<ExitRule>;

}  // namespace quickloc
