#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace fusion {

enum class Transform { identity, square, log, log1m };

// t(zbar_j) = prod_i z_i^{e_i} * g(z_j), coordinates 1-based.
struct BasisTerm {
  int j = 0;
  std::vector<std::pair<int, int>> monomial;  // (coordinate < j, power in {1,2}), sorted
  Transform g = Transform::identity;

  double mono(const double* zbar) const;
  double terminal(double zj) const;
  double eval(const double* zbar) const { return mono(zbar) * terminal(zbar[j - 1]); }
  std::string str() const;
  bool operator==(const BasisTerm& o) const { return j == o.j && monomial == o.monomial && g == o.g; }
};

BasisTerm parse_basis_term(const std::string& text, int j);

enum class WeightFamily { exponential_tilt, truncation };

struct WeightSpec {
  WeightFamily family = WeightFamily::exponential_tilt;
  int j = 0;
  std::vector<BasisTerm> basis;
  double threshold = 0.0;  // truncation: known cut point

  // Number of estimated coordinates (truncation thresholds are not estimated).
  int dim() const { return family == WeightFamily::exponential_tilt ? static_cast<int>(basis.size()) : 0; }
  bool operator==(const WeightSpec&) const = default;
};

WeightSpec make_tilt(int j, const std::vector<std::string>& terms);
WeightSpec make_truncation(int j, double threshold);
void check_weight_spec(const WeightSpec& spec);

// Truncation takes beta_js = (threshold).
double eval_weight(const WeightSpec& spec, const Eigen::VectorXd& beta_js, const double* zbar_j);
// d log w / d beta; for exponential tilt this is the basis vector.
Eigen::VectorXd eval_weight_logderiv(const WeightSpec& spec, const Eigen::VectorXd& beta_js, const double* zbar_j);

const char* family_name(WeightFamily f);
WeightFamily parse_family(const std::string& s);

// Redundant terms for overparametrized variants of the simulation outcome
// weights (index 3, covariates z1, z2), in the fixed order used throughout.
std::vector<BasisTerm> complex_family_index3();
WeightSpec append_redundant_terms(const WeightSpec& spec, int extra);

}  // namespace fusion
