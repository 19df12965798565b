#include "quickloc/uncertainty.hpp"

namespace quickloc {

const char* method_name(UncertaintyMethod m) {
  switch (m) {
    case UncertaintyMethod::LeastConfidence: return "least_confidence";
    case UncertaintyMethod::MarginOfConfidence: return "margin";
    case UncertaintyMethod::RatioOfConfidence: return "ratio";
    case UncertaintyMethod::Entropy: return "entropy";
  }
  return "?";
}

UncertaintyMethod method_from_name(const std::string& name) {
  if (name == "least_confidence" || name == "lc") return UncertaintyMethod::LeastConfidence;
  if (name == "margin" || name == "margin_of_confidence") return UncertaintyMethod::MarginOfConfidence;
  if (name == "ratio" || name == "ratio_of_confidence") return UncertaintyMethod::RatioOfConfidence;
  if (name == "entropy") return UncertaintyMethod::Entropy;
  throw InvalidArgument("unknown uncertainty method: " + name);
}

void validate_theta(UncertaintyMethod m, double theta) {
  if (!std::isfinite(theta)) throw InvalidArgument("theta must be finite");
  if (m == UncertaintyMethod::RatioOfConfidence) {
    if (theta < 1.0)
      throw InvalidArgument("ratio threshold must be >= 1, got " + std::to_string(theta));
  } else if (theta < 0.0 || theta > 1.0) {
    throw InvalidArgument(std::string(method_name(m)) +
                          " threshold must be within [0, 1], got " + std::to_string(theta));
  }
}

bool exit_decision(double score, UncertaintyMethod m, double theta) {
  validate_theta(m, theta);
  switch (m) {
    case UncertaintyMethod::MarginOfConfidence:
    case UncertaintyMethod::RatioOfConfidence:
      return score >= theta;  // high score = confident
    case UncertaintyMethod::LeastConfidence:
    case UncertaintyMethod::Entropy:
      return score <= theta;  // low score = confident
  }
  return false;
}

}  // namespace quickloc
