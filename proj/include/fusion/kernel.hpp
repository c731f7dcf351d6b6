#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/error.hpp"

namespace fusion {

enum class Exec { serial, parallel };

struct BandwidthRule {
  enum class Kind { silverman, fixed, cv_loo };
  Kind kind = Kind::silverman;
  double h = 0.0;             // fixed
  std::vector<double> grid;   // cv_loo: multipliers of the Silverman bandwidth

  static BandwidthRule silverman() { return {}; }
  static BandwidthRule fixed(double h) { return {Kind::fixed, h, {}}; }
  static BandwidthRule cv_loo(std::vector<double> g) { return {Kind::cv_loo, 0.0, std::move(g)}; }
  bool operator==(const BandwidthRule&) const = default;
};

// Nadaraya-Watson weights with a Gaussian product kernel on continuous
// columns. Columns holding at most 10 integer levels are matched exactly.
class KernelSmoother {
 public:
  KernelSmoother() = default;
  KernelSmoother(RowMatrix x, const BandwidthRule& rule, const Eigen::VectorXd* y = nullptr,
                 Diagnostics* diag = nullptr);

  int p() const { return static_cast<int>(x_.cols()); }
  int n() const { return static_cast<int>(x_.rows()); }
  const std::vector<double>& bandwidth() const { return h_; }
  const std::vector<char>& discrete() const { return disc_; }
  const RowMatrix& inputs() const { return x_; }

  // Normalized weights over training rows; false if the nearest training
  // point is more than 6 bandwidths away (weights are still returned).
  bool weights(const double* x, std::vector<int>& idx, std::vector<double>& w) const;

 private:
  const std::vector<int>& cell(const double* x) const;
  void set_bandwidths(double mult);

  RowMatrix x_;
  std::vector<double> h_, base_h_;
  std::vector<char> disc_;
  std::vector<int> all_;
  std::map<std::vector<double>, std::vector<int>> cells_;
};

struct RegressionFit {
  KernelSmoother smoother;
  Eigen::VectorXd y;

  double predict(const double* x) const;
  Eigen::VectorXd predict(const RowMatrix& X, Exec exec = Exec::serial) const;
};

RegressionFit fit_kernel_regression(const RowMatrix& x, const Eigen::VectorXd& y, const BandwidthRule& rule,
                                    Diagnostics* diag = nullptr);

// Evaluation points for functions of x. In exact mode every query row is its
// own point. In grid mode (grid_points > 0, at most one continuous column)
// each discrete cell gets an even grid over the queries' range and values
// are linearly interpolated.
class QueryGrid {
 public:
  struct Loc {
    int g0 = 0, g1 = 0;
    double a = 0.0;
  };

  QueryGrid(const RowMatrix& queries, const std::vector<char>& discrete, int grid_points);

  int size() const { return static_cast<int>(points_.rows()); }
  const double* point(int g) const { return points_.data() + static_cast<long>(g) * points_.cols(); }
  const Loc& loc(int i) const { return locs_[i]; }
  bool exact() const { return exact_; }

 private:
  RowMatrix points_;
  std::vector<Loc> locs_;
  bool exact_ = true;
};

// Interpolate per-point vectors (rows of V) at query i.
inline void interpolate(const QueryGrid& grid, const RowMatrix& V, int i, double* out) {
  const auto& l = grid.loc(i);
  const long m = V.cols();
  const double* a = V.data() + static_cast<long>(l.g0) * m;
  if (l.a == 0.0) {
    for (long c = 0; c < m; ++c) out[c] = a[c];
    return;
  }
  const double* b = V.data() + static_cast<long>(l.g1) * m;
  for (long c = 0; c < m; ++c) out[c] = (1.0 - l.a) * a[c] + l.a * b[c];
}

// Regression predictions at many rows through a QueryGrid.
Eigen::VectorXd predict_on_grid(const RegressionFit& fit, const RowMatrix& X, int grid_points, Exec exec);

}  // namespace fusion
