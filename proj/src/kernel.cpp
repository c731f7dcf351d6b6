#include "fusion/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace fusion {

namespace {

constexpr int kMaxLevels = 10;
constexpr double kBandwidthFloor = 1e-3;

bool is_discrete_column(const RowMatrix& x, int c) {
  std::set<double> levels;
  for (long i = 0; i < x.rows(); ++i) {
    double v = x(i, c);
    if (v != std::round(v)) return false;
    levels.insert(v);
    if (static_cast<int>(levels.size()) > kMaxLevels) return false;
  }
  return true;
}

}  // namespace

KernelSmoother::KernelSmoother(RowMatrix x, const BandwidthRule& rule, const Eigen::VectorXd* y, Diagnostics* diag)
    : x_(std::move(x)) {
  const int n = this->n(), p = this->p();
  if (n < 1) throw InsufficientData("kernel smoother needs training rows");
  disc_.assign(p, 0);
  h_.assign(p, 0.0);
  int q = 0;
  for (int c = 0; c < p; ++c) {
    disc_[c] = is_discrete_column(x_, c);
    if (!disc_[c]) ++q;
  }
  base_h_.assign(p, 0.0);
  for (int c = 0; c < p; ++c) {
    if (disc_[c]) continue;
    double mean = x_.col(c).mean();
    double sd = std::sqrt((x_.col(c).array() - mean).square().sum() / n);
    double h = 1.06 * sd * std::pow(static_cast<double>(n), -1.0 / (4.0 + q));
    if (!(h > kBandwidthFloor)) {
      if (sd <= 1e-12 && diag) diag->warn("constant column in kernel regression; bandwidth floored");
      h = std::max(h, kBandwidthFloor);
    }
    base_h_[c] = h;
  }
  all_.resize(n);
  for (int i = 0; i < n; ++i) all_[i] = i;
  bool any_disc = std::any_of(disc_.begin(), disc_.end(), [](char v) { return v != 0; });
  if (any_disc) {
    for (int i = 0; i < n; ++i) {
      std::vector<double> key;
      for (int c = 0; c < p; ++c)
        if (disc_[c]) key.push_back(x_(i, c));
      cells_[key].push_back(i);
    }
  }

  switch (rule.kind) {
    case BandwidthRule::Kind::silverman: set_bandwidths(1.0); break;
    case BandwidthRule::Kind::fixed:
      if (!(rule.h > 0)) throw InvalidShape("fixed bandwidth must be positive");
      for (int c = 0; c < p; ++c) h_[c] = disc_[c] ? 0.0 : rule.h;
      break;
    case BandwidthRule::Kind::cv_loo: {
      if (n < 5) throw InsufficientData("cross-validated bandwidth needs at least 5 rows");
      if (!y || y->size() != n) throw InvalidShape("cv_loo bandwidth needs the response");
      if (rule.grid.empty()) throw InvalidShape("cv_loo bandwidth grid is empty");
      double best = std::numeric_limits<double>::infinity(), best_m = rule.grid.front();
      std::vector<int> idx;
      std::vector<double> w;
      for (double m : rule.grid) {
        if (!(m > 0)) throw InvalidShape("cv_loo grid values must be positive");
        set_bandwidths(m);
        double err = 0;
        for (int i = 0; i < n; ++i) {
          weights(x_.data() + static_cast<long>(i) * p, idx, w);
          double num = 0, den = 0;
          for (size_t t = 0; t < idx.size(); ++t) {
            if (idx[t] == i) continue;
            num += w[t] * (*y)[idx[t]];
            den += w[t];
          }
          double pred = den > 1e-300 ? num / den : y->mean();
          err += ((*y)[i] - pred) * ((*y)[i] - pred);
        }
        if (err < best) {
          best = err;
          best_m = m;
        }
      }
      set_bandwidths(best_m);
      break;
    }
  }
}

void KernelSmoother::set_bandwidths(double mult) {
  for (int c = 0; c < p(); ++c) h_[c] = disc_[c] ? 0.0 : base_h_[c] * mult;
}

const std::vector<int>& KernelSmoother::cell(const double* x) const {
  if (cells_.empty()) return all_;
  std::vector<double> key;
  for (int c = 0; c < p(); ++c)
    if (disc_[c]) key.push_back(x[c]);
  auto it = cells_.find(key);
  return it == cells_.end() ? all_ : it->second;
}

bool KernelSmoother::weights(const double* x, std::vector<int>& idx, std::vector<double>& w) const {
  const int p = this->p();
  if (p == 0) {
    idx = all_;
    w.assign(all_.size(), 1.0 / all_.size());
    return true;
  }
  const std::vector<int>& rows = cell(x);
  bool matched = &rows != &all_ || cells_.empty();
  idx = rows;
  w.resize(rows.size());
  double emax = -std::numeric_limits<double>::infinity();
  for (size_t t = 0; t < rows.size(); ++t) {
    const double* xt = x_.data() + static_cast<long>(rows[t]) * p;
    double e = 0;
    for (int c = 0; c < p; ++c) {
      if (disc_[c] && matched) continue;
      double h = disc_[c] ? 0.5 : h_[c];
      double u = (x[c] - xt[c]) / h;
      e -= 0.5 * u * u;
    }
    w[t] = e;
    emax = std::max(emax, e);
  }
  double sum = 0;
  for (double& v : w) {
    v = std::exp(v - emax);
    sum += v;
  }
  for (double& v : w) v /= sum;
  return matched && emax > -18.0;
}

double RegressionFit::predict(const double* x) const {
  std::vector<int> idx;
  std::vector<double> w;
  smoother.weights(x, idx, w);
  double v = 0;
  for (size_t t = 0; t < idx.size(); ++t) v += w[t] * y[idx[t]];
  return v;
}

Eigen::VectorXd RegressionFit::predict(const RowMatrix& X, Exec exec) const {
  const long n = X.rows();
  Eigen::VectorXd out(n);
  if (exec == Exec::serial) {
    for (long i = 0; i < n; ++i) out[i] = predict(X.data() + i * X.cols());
  } else {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = predict(X.data() + i * X.cols());
  }
  return out;
}

RegressionFit fit_kernel_regression(const RowMatrix& x, const Eigen::VectorXd& y, const BandwidthRule& rule,
                                    Diagnostics* diag) {
  if (x.rows() != y.size()) throw InvalidShape("regression inputs and responses differ in length");
  if (x.rows() < 5) throw InsufficientData("kernel regression needs at least 5 rows");
  RegressionFit f{KernelSmoother(x, rule, &y, diag), y};
  return f;
}

QueryGrid::QueryGrid(const RowMatrix& queries, const std::vector<char>& discrete, int grid_points) {
  const long n = queries.rows();
  const int p = static_cast<int>(queries.cols());
  locs_.resize(n);
  if (p == 0) {
    points_.resize(1, 0);
    return;
  }
  int cont = -1, ncont = 0;
  for (int c = 0; c < p; ++c)
    if (!discrete[c]) {
      cont = c;
      ++ncont;
    }
  if (grid_points <= 1 || ncont > 1 || n <= grid_points) {
    points_ = queries;
    for (long i = 0; i < n; ++i) locs_[i] = {static_cast<int>(i), static_cast<int>(i), 0.0};
    return;
  }
  exact_ = false;
  std::map<std::vector<double>, std::pair<double, double>> range;
  auto key_of = [&](long i) {
    std::vector<double> key;
    for (int c = 0; c < p; ++c)
      if (discrete[c]) key.push_back(queries(i, c));
    return key;
  };
  for (long i = 0; i < n; ++i) {
    double v = cont >= 0 ? queries(i, cont) : 0.0;
    auto [it, fresh] = range.try_emplace(key_of(i), v, v);
    if (!fresh) {
      it->second.first = std::min(it->second.first, v);
      it->second.second = std::max(it->second.second, v);
    }
  }
  std::map<std::vector<double>, int> first;
  std::vector<std::vector<double>> pts;
  for (const auto& [key, r] : range) {
    first[key] = static_cast<int>(pts.size());
    int G = (cont < 0 || r.second <= r.first) ? 1 : grid_points;
    for (int g = 0; g < G; ++g) {
      std::vector<double> pt(p);
      size_t kk = 0;
      for (int c = 0; c < p; ++c) {
        if (discrete[c])
          pt[c] = key[kk++];
        else
          pt[c] = G == 1 ? r.first : r.first + (r.second - r.first) * g / (G - 1);
      }
      pts.push_back(pt);
    }
  }
  points_.resize(pts.size(), p);
  for (size_t g = 0; g < pts.size(); ++g)
    for (int c = 0; c < p; ++c) points_(g, c) = pts[g][c];
  for (long i = 0; i < n; ++i) {
    auto key = key_of(i);
    const auto& r = range[key];
    int base = first[key];
    if (cont < 0 || r.second <= r.first) {
      locs_[i] = {base, base, 0.0};
      continue;
    }
    double pos = (queries(i, cont) - r.first) / (r.second - r.first) * (grid_points - 1);
    int g0 = std::min(static_cast<int>(std::floor(pos)), grid_points - 2);
    double a = pos - g0;
    locs_[i] = {base + g0, base + g0 + 1, a};
  }
}

Eigen::VectorXd predict_on_grid(const RegressionFit& fit, const RowMatrix& X, int grid_points, Exec exec) {
  QueryGrid grid(X, fit.smoother.discrete(), grid_points);
  RowMatrix pts(grid.size(), X.cols());
  for (int g = 0; g < grid.size(); ++g)
    for (long c = 0; c < X.cols(); ++c) pts(g, c) = grid.point(g)[c];
  Eigen::VectorXd v = fit.predict(pts, exec);
  RowMatrix V = Eigen::Map<RowMatrix>(v.data(), v.size(), 1);
  Eigen::VectorXd out(X.rows());
  for (long i = 0; i < X.rows(); ++i) interpolate(grid, V, static_cast<int>(i), &out[i]);
  return out;
}

}  // namespace fusion
