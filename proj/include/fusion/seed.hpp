#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/estimand.hpp"
#include "fusion/nuisance.hpp"

namespace fusion {

// D_{Q,j}(zbar_j) = scale(zbar_{j-1}) * (g(zbar_j) - E_Q[g | zbar_{j-1}]).
// For j > 1, g may depend on zbar_j only through z_j.
struct SeedComponent {
  int j = 0;
  std::function<double(const double* x)> scale;
  std::function<Eigen::VectorXd(const RowMatrix& zbar)> g;  // one value per row of zbar_j
};

struct GradientSeed {
  EstimandSpec estimand;
  double plugin = 0.0;  // phi(P-hat)
  std::vector<SeedComponent> components;
  Diagnostics diag;

  const SeedComponent* find(int j) const;
};

// Works in the bundle's view coordinates.
GradientSeed seed_gradient(const FittedNuisance& nu);

// D_{Q,j} evaluated directly at one point.
double seed_value(const GradientSeed& seed, const FittedNuisance& nu, int j, const double* zbar_j);

// Prefix zbar_j of every row.
RowMatrix prefix_rows(const Dataset& data, int j);

}  // namespace fusion
