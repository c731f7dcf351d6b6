#include "fusion/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace fusion {

namespace {

double expit(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

void LogisticModel::design_row(const double* x, double* out) const {
  out[0] = 1.0;
  for (size_t f = 0; f < feats_.size(); ++f) {
    double v = (x[feats_[f].col] - feats_[f].center) / feats_[f].scale;
    out[f + 1] = feats_[f].square ? v * v : v;
  }
}

bool LogisticModel::irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge) {
  const int p = static_cast<int>(X.cols());
  coef_ = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(p, ridge);
  pen[0] = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd eta = X * coef_;
    Eigen::VectorXd mu(eta.size()), w(eta.size());
    for (long i = 0; i < eta.size(); ++i) {
      mu[i] = expit(eta[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-12);
    }
    Eigen::VectorXd grad = X.transpose() * (y - mu) - pen.cwiseProduct(coef_);
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal() += pen;
    Eigen::VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) return false;
    coef_ += step;
    if (coef_.cwiseAbs().maxCoeff() > 30.0 && ridge == 0.0) return false;
    if (step.cwiseAbs().maxCoeff() < 1e-10) return true;
  }
  return ridge > 0.0;
}

LogisticModel LogisticModel::fit(const Dataset& data, const std::vector<int>& rows, int p, const std::vector<int>& y,
                                 bool squares, Diagnostics* diag) {
  if (rows.size() != y.size()) throw InvalidShape("logistic labels do not match rows");
  int n1 = 0;
  for (int v : y) n1 += v;
  if (rows.empty() || n1 == 0 || n1 == static_cast<int>(y.size()))
    throw InsufficientData("membership classification needs both classes present");
  LogisticModel m;
  for (int c = 0; c < p; ++c) {
    double mean = 0, sq = 0;
    std::set<double> levels;
    for (int r : rows) {
      double v = data.z(r, c);
      mean += v;
      if (levels.size() < 3) levels.insert(v);
    }
    mean /= rows.size();
    for (int r : rows) sq += (data.z(r, c) - mean) * (data.z(r, c) - mean);
    double sd = std::sqrt(sq / rows.size());
    if (sd <= 1e-12) continue;
    m.feats_.push_back({c, false, mean, sd});
    if (squares && levels.size() > 2) m.feats_.push_back({c, true, mean, sd});
  }
  const int q = static_cast<int>(m.feats_.size()) + 1;
  Eigen::MatrixXd X(rows.size(), q);
  Eigen::VectorXd yy(rows.size());
  std::vector<double> buf(q);
  for (size_t i = 0; i < rows.size(); ++i) {
    m.design_row(data.row(rows[i]), buf.data());
    for (int f = 0; f < q; ++f) X(i, f) = buf[f];
    yy[i] = y[i];
  }
  if (!m.irls(X, yy, 0.0)) {
    m.ridge_used_ = true;
    if (diag) {
      ++diag->ridge_fallbacks;
      diag->warn("logistic fit separated; ridge-stabilized refit used");
    }
    m.irls(X, yy, 1e-4);
  }
  return m;
}

double LogisticModel::prob(const double* x) const {
  double buf[64];
  std::vector<double> big;
  double* b = buf;
  if (feats_.size() + 1 > 64) {
    big.resize(feats_.size() + 1);
    b = big.data();
  }
  design_row(x, b);
  double eta = 0;
  for (long f = 0; f < coef_.size(); ++f) eta += coef_[f] * b[f];
  return expit(eta);
}

MembershipRatio MembershipRatio::fit(const Dataset& data, std::vector<int> B, std::vector<int> C, int p, bool squares,
                                     Diagnostics* diag) {
  std::sort(B.begin(), B.end());
  std::sort(C.begin(), C.end());
  MembershipRatio r;
  if (p == 0 || B == C) return r;
  std::vector<int> U;
  std::set_union(B.begin(), B.end(), C.begin(), C.end(), std::back_inserter(U));
  std::vector<int> rows = data.rows_in(U);
  std::vector<char> inB(data.k() + 1, 0), inC(data.k() + 1, 0);
  for (int s : B) inB[s] = 1;
  for (int s : C) inC[s] = 1;
  std::vector<int> yb(rows.size()), yc(rows.size());
  int nb = 0, nc = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    yb[i] = inB[data.s(rows[i])];
    yc[i] = inC[data.s(rows[i])];
    nb += yb[i];
    nc += yc[i];
  }
  if (nb == 0 || nc == 0) throw InsufficientData("density ratio needs rows in both source groups");
  r.trivial_ = false;
  r.nb_ = nb;
  r.nc_ = nc;
  r.b_is_union_ = B == U;
  r.c_is_union_ = C == U;
  std::vector<int> inter;
  std::set_intersection(B.begin(), B.end(), C.begin(), C.end(), std::back_inserter(inter));
  r.disjoint_ = inter.empty();
  if (!r.b_is_union_) r.in_b_ = LogisticModel::fit(data, rows, p, yb, squares, diag);
  if (!r.c_is_union_ && !r.disjoint_) r.in_c_ = LogisticModel::fit(data, rows, p, yc, squares, diag);
  return r;
}

double MembershipRatio::operator()(const double* x) const {
  if (trivial_) return 1.0;
  const double lo = 1e-12;
  double pb = b_is_union_ ? 1.0 : std::max(in_b_.prob(x), lo);
  double pc;
  if (c_is_union_)
    pc = 1.0;
  else if (disjoint_)
    pc = std::max(1.0 - in_b_.prob(x), lo);
  else
    pc = std::max(in_c_.prob(x), lo);
  return (pb / nb_) / (pc / nc_);
}

}  // namespace fusion
