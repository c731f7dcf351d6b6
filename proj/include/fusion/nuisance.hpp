#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/design.hpp"
#include "fusion/error.hpp"
#include "fusion/estimand.hpp"
#include "fusion/kernel.hpp"
#include "fusion/logistic.hpp"

namespace fusion {

struct NuisanceOptions {
  BandwidthRule bandwidth = BandwidthRule::silverman();
  double propensity_min = 0.01;
  double ratio_min = 1e-3;
  double ratio_max = 1e3;
  double normalizer_floor = 1e-8;
  bool ratio_squares = true;  // squared covariates in membership classifiers
  bool cross_fit = false;
  int grid_points = 0;        // 0: evaluate x-level terms at every row
  Exec exec = Exec::serial;

  bool operator==(const NuisanceOptions&) const = default;
};

inline double clip_ratio(double v, double lo, double hi, long* clips) {
  if (v < lo) {
    if (clips) ++*clips;
    return lo;
  }
  if (v > hi) {
    if (clips) ++*clips;
    return hi;
  }
  return v;
}

struct PropensityFit {
  LogisticModel model;
  int treatment = 2;  // 1-based; covariates are the columns before it
  double pmin = 0.01;

  double operator()(const double* x, long* clips = nullptr) const;
};

// Logistic model of the binary treatment column on the preceding columns,
// pooled over the given sources.
PropensityFit fit_propensity(const Dataset& data, const std::vector<int>& sources, int treatment, double pmin,
                             Diagnostics* diag = nullptr);

// Marginal density ratios on zbar_{j-1} for one relevant index.
struct DensityRatioFit {
  int j = 0;
  std::vector<int> S, A;
  std::vector<MembershipRatio> rho;  // per position in S: p(x|s) / p(x|A_j)
  std::vector<int> factor_index;     // i in J, i < j
  std::vector<MembershipRatio> num, den;  // p(.|A_i)/p(.|S_j) on zbar_i and zbar_{i-1}
  double lo = 1e-3, hi = 1e3;

  double rho_at(int pos, const double* x, long* clips = nullptr) const;
  // lambda_{j-1} = q(zbar_{j-1}) / p(zbar_{j-1} | S in S_j)
  double lambda(const double* x, long* clips = nullptr) const;
};

DensityRatioFit fit_marginal_density_ratio(const Dataset& data, const FusionDesign& design, int j,
                                           const NuisanceOptions& opt, Diagnostics* diag = nullptr);

// Q_j(. | zbar_{j-1}) estimated as the kernel-weighted law of z_j over the
// pooled aligned rows.
struct ConditionalLaw {
  int j = 0;
  std::vector<int> rows;
  Eigen::VectorXd y;
  KernelSmoother smoother;

  bool weights(const double* x, std::vector<int>& idx, std::vector<double>& w) const {
    return smoother.weights(x, idx, w);
  }
  double mean(const double* x) const;
};

struct IndexNuisance {
  int j = 0;
  std::vector<int> S, A, W;   // sorted source labels
  std::vector<int> pos;       // source label -> position in S, or -1
  std::vector<char> weak;     // per position
  std::vector<std::optional<WeightSpec>> spec;  // per position, weak only
  std::vector<Eigen::VectorXd> beta;            // per position (truncation: threshold)
  std::vector<Eigen::MatrixXd> terminal;        // per position: basis terminals on law.y (T x c)
  Eigen::VectorXd delta;      // delta_s per position
  double PS = 0, PA = 0;      // P(S in S_j), P(S in A_j)
  ConditionalLaw law;
  DensityRatioFit ratios;

  bool has_weak() const { return !W.empty(); }
};

struct FittedNuisance {
  Dataset data;          // estimand view
  FusionDesign design;   // estimand view
  EstimandSpec estimand;
  NuisanceOptions options;
  BetaParam beta;
  std::vector<double> delta;  // entry s-1 holds n_s / n
  std::vector<IndexNuisance> index;
  std::optional<PropensityFit> propensity;
  Diagnostics diag;

  const IndexNuisance& at(int j) const;  // NuisanceMissing
  // Swap in a new beta; all other fits are reused.
  FittedNuisance with_beta(const BetaParam& b) const;
};

FittedNuisance fit_nuisance_bundle(const Dataset& data, const FusionDesign& design, const BetaParam& beta,
                                   const EstimandSpec& estimand, const NuisanceOptions& opt);

struct NormalizerEstimate {
  std::vector<double> point;
  double value = 1.0;
  double raw = 1.0;
  std::string method = "nadaraya_watson";
};

// W_{j,s}(zbar_{j-1}) = E_Q[w(zbar_j; beta) | zbar_{j-1}], floored.
NormalizerEstimate estimate_normalizer(const FittedNuisance& nu, int j, int s, const double* x,
                                       Diagnostics* diag = nullptr);
NormalizerEstimate estimate_normalizer(const FittedNuisance& nu, int j, int s, const Eigen::VectorXd& beta_js,
                                       const double* x, Diagnostics* diag = nullptr);
// w* = w / W at zbar_j, clipped to the ratio bounds (zeros stay zero).
double density_ratio(const FittedNuisance& nu, int j, int s, const double* zbar_j, Diagnostics* diag = nullptr);

// E[f(zbar_j) | zbar_{j-1} = x] under Q_j (scope 0) or under source s.
// Tags: "one", "outcome", "weight:<s>", "density_ratio:<s>".
double conditional_mean(const FittedNuisance& nu, const std::string& tag, int j, const double* x, int scope = 0);

}  // namespace fusion
