#include "fusion/error.hpp"

#include <algorithm>

namespace fusion {

void Diagnostics::warn(const std::string& w) {
  if (std::find(warnings.begin(), warnings.end(), w) == warnings.end()) warnings.push_back(w);
}

void Diagnostics::merge(const Diagnostics& o) {
  ratio_clips += o.ratio_clips;
  normalizer_floors += o.normalizer_floors;
  empty_neighborhoods += o.empty_neighborhoods;
  propensity_clips += o.propensity_clips;
  ridge_fallbacks += o.ridge_fallbacks;
  rank_warnings += o.rank_warnings;
  singular_information = singular_information || o.singular_information;
  beta_converged = beta_converged && o.beta_converged;
  for (const auto& w : o.warnings) warn(w);
}

}  // namespace fusion
