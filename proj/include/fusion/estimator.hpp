#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fusion/beta.hpp"
#include "fusion/dataset.hpp"
#include "fusion/design.hpp"
#include "fusion/estimand.hpp"
#include "fusion/nuisance.hpp"

namespace fusion {

struct EstimatorVariant {
  enum class Tag { target_only, naive_fusion, efficient_fusion, overparametrized };
  Tag tag = Tag::efficient_fusion;
  int extra_dims = 0;  // overparametrized only

  std::string name() const;  // e.g. "overparametrized+2"
  static EstimatorVariant parse(const std::string& s);
  bool uses_weak() const { return tag == Tag::efficient_fusion || tag == Tag::overparametrized; }
  bool operator==(const EstimatorVariant&) const = default;
};

// Design implied by the variant (index sets keep their j; see the variant tags).
FusionDesign apply_variant(const FusionDesign& design, const EstimatorVariant& v);

struct EstimateOptions {
  NuisanceOptions nuisance;
  MomentOptions moment;
  double level = 0.95;
  bool validate = true;     // run the overlap diagnostics before fitting
  std::uint64_t seed = 0;   // echoed in the report
};

struct GradientVariances {
  double D_P = 0, D_A = 0, D_tilde = 0, D_eff = 0;
};

struct EstimateReport {
  std::string variant;
  std::string estimand;
  double estimate = 0, plugin = 0, se = 0;
  double ci_lo = 0, ci_hi = 0, level = 0.95;
  int n = 0;
  std::vector<int> n_per_source;
  std::vector<std::string> beta_names;
  Eigen::VectorXd beta, beta_se, beta_init;
  bool beta_converged = true;
  GradientVariances variances;
  Diagnostics diag;
  std::uint64_t seed = 0;
  std::string config_hash;
};

EstimateReport one_step_estimate(const Dataset& data, const FusionDesign& design, const EstimandSpec& estimand,
                                 const EstimatorVariant& variant, const EstimateOptions& opt = {});

double normal_quantile(double p);
std::pair<double, double> wald_interval(const EstimateReport& report, double level);
// Wald interval at the report's level widened by delta on both sides.
std::pair<double, double> sensitivity_interval(const EstimateReport& report, double delta);

}  // namespace fusion
