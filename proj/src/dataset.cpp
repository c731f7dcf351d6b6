#include "fusion/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fusion/error.hpp"

namespace fusion {

Dataset::Dataset(RowMatrix z, std::vector<int> s, int k) : z_(std::move(z)), s_(std::move(s)), k_(k) {
  if (s_.empty()) throw StructuralError("dataset has no rows");
  if (static_cast<long>(s_.size()) != z_.rows()) throw InvalidShape("source labels do not match row count");
  if (z_.cols() < 1) throw InvalidShape("dataset needs at least one Z column");
  if (k_ < 1) throw StructuralError("k must be positive");
  for (int i = 0; i < n(); ++i) {
    if (s_[i] < 1 || s_[i] > k_)
      throw StructuralError("row " + std::to_string(i) + " has source label " + std::to_string(s_[i]) +
                            " outside 1.." + std::to_string(k_));
    for (int c = 0; c < d(); ++c)
      if (!std::isfinite(z_(i, c)))
        throw DomainError("non-finite value at row " + std::to_string(i) + ", column " + std::to_string(c + 1));
  }
}

Dataset Dataset::from_rows(const std::vector<Observation>& rows, int d, int k) {
  RowMatrix z(rows.size(), d);
  std::vector<int> s(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].z.size()) != d) throw InvalidShape("row " + std::to_string(i) + " has wrong length");
    for (int c = 0; c < d; ++c) z(i, c) = rows[i].z[c];
    s[i] = rows[i].s;
  }
  return Dataset(std::move(z), std::move(s), k);
}

std::vector<int> Dataset::counts() const {
  std::vector<int> c(k_, 0);
  for (int v : s_) ++c[v - 1];
  return c;
}

Observation Dataset::observation(int i) const {
  Observation o;
  o.z.assign(row(i), row(i) + d());
  o.s = s_[i];
  return o;
}

std::vector<int> Dataset::rows_in(const std::vector<int>& sources) const {
  std::vector<char> in(k_ + 1, 0);
  for (int s : sources)
    if (s >= 1 && s <= k_) in[s] = 1;
  std::vector<int> out;
  for (int i = 0; i < n(); ++i)
    if (in[s_[i]]) out.push_back(i);
  return out;
}

Dataset Dataset::select_rows(const std::vector<int>& idx) const {
  RowMatrix z(idx.size(), d());
  std::vector<int> s(idx.size());
  for (size_t r = 0; r < idx.size(); ++r) {
    z.row(r) = z_.row(idx[r]);
    s[r] = s_[idx[r]];
  }
  return Dataset(std::move(z), std::move(s), k_);
}

Dataset Dataset::select_columns(const std::vector<int>& cols) const {
  RowMatrix z(n(), cols.size());
  for (size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] < 1 || cols[c] > d()) throw KeyError("column z" + std::to_string(cols[c]) + " not in dataset");
    z.col(c) = z_.col(cols[c] - 1);
  }
  return Dataset(std::move(z), s_, k_);
}

}  // namespace fusion
