#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/error.hpp"

namespace fusion {

// Logistic regression by IRLS on standardized features built from the first
// p columns of each row (optionally with squares of non-binary columns).
class LogisticModel {
 public:
  static LogisticModel fit(const Dataset& data, const std::vector<int>& rows, int p, const std::vector<int>& y,
                           bool squares, Diagnostics* diag = nullptr);

  double prob(const double* x) const;
  const Eigen::VectorXd& coef() const { return coef_; }
  bool ridge_used() const { return ridge_used_; }
  int features() const { return static_cast<int>(coef_.size()); }

 private:
  struct Feature {
    int col;
    bool square;
    double center, scale;
  };
  void design_row(const double* x, double* out) const;
  bool irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge);

  std::vector<Feature> feats_;
  Eigen::VectorXd coef_;
  bool ridge_used_ = false;
};

// p(x | S in B) / p(x | S in C) on the first p coordinates, via membership
// classification inside B u C and prior correction.
class MembershipRatio {
 public:
  static MembershipRatio fit(const Dataset& data, std::vector<int> B, std::vector<int> C, int p, bool squares,
                             Diagnostics* diag = nullptr);
  double operator()(const double* x) const;
  bool trivial() const { return trivial_; }

 private:
  bool trivial_ = true;
  bool disjoint_ = false;
  bool b_is_union_ = false, c_is_union_ = false;
  double nb_ = 1, nc_ = 1;
  LogisticModel in_b_, in_c_;
};

}  // namespace fusion
