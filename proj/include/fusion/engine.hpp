#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/nuisance.hpp"
#include "fusion/seed.hpp"

namespace fusion {

// Fitted conditional law at one point zbar_{j-1}: support weights and the
// density ratios w*_m of every source in S_j at each support point.
struct PointLaw {
  std::vector<int> idx;         // T support points, as positions in the law's rows
  Eigen::VectorXd omega;        // T
  Eigen::VectorXd y;            // T, z_j at the support points
  Eigen::MatrixXd wstar;        // T x K, aligned columns are 1
  Eigen::VectorXd delta_tilde;  // K, delta_m * rho_m(zbar_{j-1})
  Eigen::VectorXd normalizer;   // K, 1 for aligned sources
  bool in_support = true;

  Eigen::VectorXd r() const;    // 1 / sum_m delta_tilde_m w*_m
};

struct FusionMatrix {
  Eigen::MatrixXd M, pinv;
  Eigen::VectorXd singular_values;
  int rank = 0;
  double condition = 0;  // sigma_max / smallest retained sigma
};

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double rel_tol, int* rank = nullptr,
                               Eigen::VectorXd* singular_values = nullptr);

// M = diag(1/delta_tilde) - E_Q[r w* w*^T]; AllSingular if nothing survives.
FusionMatrix fusion_matrix(const PointLaw& law);

// Coefficients of the projection f -> f - E_Q f + kappa^T (u - E_Q u), with
// u = w* r, which maps d_j to d~_j.
struct Projection {
  double mean = 0;
  Eigen::VectorXd kappa;
  Eigen::VectorXd ubar;
};
Projection projection(const PointLaw& law, const FusionMatrix& F, const Eigen::VectorXd& f);
Eigen::VectorXd apply_projection(const PointLaw& law, const Projection& p, const Eigen::VectorXd& f);

PointLaw point_law(const FittedNuisance& nu, int j, const double* x, Diagnostics* diag = nullptr);
FusionMatrix fusion_matrix(const FittedNuisance& nu, int j, const double* x);

// lambda_{j-1} / w*_{j,s}(zbar_j) for weak s, lambda_{j-1} for aligned s; clipped.
double lambda_dagger(const FittedNuisance& nu, int j, const double* zbar_j, int s);

struct InfluenceTable {
  double plugin = 0;
  Eigen::VectorXd D_P, D_A, D_tilde, D_eff;
  Eigen::MatrixXd score, eff_score;   // n x t
  std::vector<int> seed_indices;
  Eigen::MatrixXd D_tilde_j;          // n x |seed_indices|
  Eigen::VectorXd grad_gamma;         // t
  Eigen::MatrixXd info, info_pinv;    // t x t
  double info_min_eigenvalue = 0;
  double info_condition = 0;
  Diagnostics diag;
};

// Every gradient at the rows of `rows` (view coordinates). Without a seed
// only the scores and information are meaningful.
InfluenceTable evaluate_gradients(const FittedNuisance& nu, const GradientSeed* seed, const Dataset& rows);
// Same with the given execution mode instead of the bundle's.
InfluenceTable evaluate_gradients(const FittedNuisance& nu, const GradientSeed* seed, const Dataset& rows, Exec exec);

double gradient_known_beta(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs);
double gradient_aligned_only(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs);
double canonical_gradient_fixed_beta(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs);
double efficient_gradient(const FittedNuisance& nu, const GradientSeed& seed, const Observation& obs,
                          const Eigen::VectorXd& grad_gamma, const Eigen::MatrixXd& info_pinv);

Eigen::VectorXd gamma_derivative(const InfluenceTable& table);
// gamma(beta) = mean_i D~_i * w*_{s_i}(beta) / w*_{s_i}(beta_hat), central
// differences with step h around the bundle's beta.
Eigen::VectorXd gamma_finite_difference(const FittedNuisance& nu, const InfluenceTable& table, const Dataset& rows,
                                        double h = 1e-4);

}  // namespace fusion
