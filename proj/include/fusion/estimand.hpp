#pragma once

#include <string>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/design.hpp"

namespace fusion {

struct EstimandSpec {
  // mean and variance (of one coordinate) are internal seeds used by the
  // Gaussian checks; the public estimands are ate and working_linear.
  enum class Kind { ate, working_linear, mean, variance };
  Kind kind = Kind::ate;
  int covariate = 1;
  int treatment = 2;
  int outcome = 3;
  int coefficient = 1;  // working_linear: 0 intercept, 1 slope

  bool operator==(const EstimandSpec&) const = default;
};

const char* estimand_name(EstimandSpec::Kind k);
EstimandSpec::Kind parse_estimand_kind(const std::string& s);

// The estimand works on a subset of coordinates, renumbered 1..d'.
struct EstimandView {
  std::vector<int> columns;  // original 1-based columns, in view order
  FusionDesign design;       // design in view coordinates
};

EstimandView make_view(const EstimandSpec& est, const FusionDesign& design);

}  // namespace fusion
