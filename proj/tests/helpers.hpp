#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/design.hpp"
#include "fusion/simulation.hpp"

namespace testing {

inline fusion::Dataset simulated(const std::string& alignment, int n, std::uint64_t seed,
                                 fusion::Shift shift = fusion::Shift::none) {
  fusion::Scenario sc = fusion::make_scenario(alignment, shift, n);
  return fusion::generate_dataset(sc, seed, 0);
}

// Beta(a, b) density by log-gamma.
inline double beta_pdf(double x, double a, double b) {
  return std::exp((a - 1) * std::log(x) + (b - 1) * std::log1p(-x) + std::lgamma(a + b) - std::lgamma(a) -
                  std::lgamma(b));
}

// Composite Simpson rule on (lo, hi) with n (even) panels.
template <class F>
double simpson(F f, double lo, double hi, int n = 20000) {
  double h = (hi - lo) / n, s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

}  // namespace testing
