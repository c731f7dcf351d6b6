#pragma once

#include <Eigen/Dense>

#include "fusion/design.hpp"
#include "fusion/engine.hpp"
#include "fusion/nuisance.hpp"

namespace fusion {

struct MomentResult {
  BetaParam beta;
  bool converged = true;
  int iterations = 0;       // largest over blocks
  double residual = 0;      // largest final residual norm over blocks
};

struct MomentOptions {
  double tol = 1e-8;
  int max_iter = 200;
};

// Per (j, s in W_j): mean over source-s rows of t(zbar_j) equals the mean over
// aligned rows of rho_s(zbar_{j-1}) t(zbar_j) w*(zbar_j; beta). Damped Newton
// with a numeric Jacobian, started from the bundle's beta.
MomentResult moment_match_beta(const FittedNuisance& nu, const MomentOptions& opt = {});

struct ScoreEval {
  Eigen::MatrixXd score;      // raw score, n x t
  Eigen::MatrixXd eff_score;  // efficient score, n x t
};

ScoreEval efficient_score(const FittedNuisance& nu, const Dataset& rows);

struct InformationMatrix {
  Eigen::MatrixXd I, pinv;
  double min_eigenvalue = 0;
  double condition = 0;
  bool singular = false;
};

InformationMatrix information_matrix(const Eigen::MatrixXd& eff_score);

struct OneStepBeta {
  BetaParam beta;
  InformationMatrix info;
  Eigen::VectorXd mean_score;
};

// beta_init + I^- mean(eff score at beta_init), scored on the bundle's data.
OneStepBeta one_step_beta(const FittedNuisance& nu, const BetaParam& beta_init, Diagnostics* diag = nullptr);

}  // namespace fusion
