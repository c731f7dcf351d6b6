#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fusion {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Observation {
  std::vector<double> z;
  int s = 0;
};

// Fused sample of (Z, S). Rows are stored row-major so that a prefix
// zbar_{j-1} of row i is the contiguous range row(i)[0, j-1).
class Dataset {
 public:
  Dataset() = default;
  Dataset(RowMatrix z, std::vector<int> s, int k);
  static Dataset from_rows(const std::vector<Observation>& rows, int d, int k);

  int n() const { return static_cast<int>(s_.size()); }
  int d() const { return static_cast<int>(z_.cols()); }
  int k() const { return k_; }

  double z(int i, int c) const { return z_(i, c); }  // c is 0-based
  const double* row(int i) const { return z_.data() + static_cast<long>(i) * z_.cols(); }
  int s(int i) const { return s_[i]; }
  const RowMatrix& Z() const { return z_; }
  const std::vector<int>& sources() const { return s_; }

  std::vector<int> counts() const;  // entry s-1 holds n_s
  Observation observation(int i) const;
  std::vector<int> rows_in(const std::vector<int>& sources) const;

  Dataset select_rows(const std::vector<int>& idx) const;
  // Columns given 1-based, in the order requested.
  Dataset select_columns(const std::vector<int>& cols) const;

 private:
  RowMatrix z_;
  std::vector<int> s_;
  int k_ = 0;
};

}  // namespace fusion
