#pragma once

// Test-side oracles that recompute gradient pieces from raw data with dense
// linear algebra, sharing only the fitted marginal ratios with the library.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "fusion/engine.hpp"
#include "fusion/nuisance.hpp"
#include "fusion/seed.hpp"

namespace oracle {

using namespace fusion;

// Discrete instance: z1 in {1, 2}, z2 in {0, 1}, z3 in {0.2, 0.5, 0.8};
// source 1 is the target, sources 2..k tilt the outcome law.
inline Dataset discrete_instance(int k, int n_per_source, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double support[3] = {0.2, 0.5, 0.8};
  std::vector<Observation> rows;
  for (int s = 1; s <= k; ++s) {
    for (int i = 0; i < n_per_source; ++i) {
      double z1 = std::uniform_int_distribution<int>(1, 2)(rng);
      double z2 = std::bernoulli_distribution(0.4 + 0.1 * (s - 1))(rng) ? 1.0 : 0.0;
      double base[3] = {1.0, 1.0 + z2, 1.0 + 0.5 * z1};
      double w[3];
      for (int t = 0; t < 3; ++t) w[t] = base[t] * std::exp(0.3 * (s - 1) * z1 * std::log(support[t]));
      std::discrete_distribution<int> pick({w[0], w[1], w[2]});
      rows.push_back({{z1, z2, support[pick(rng)]}, s});
    }
  }
  return Dataset::from_rows(rows, 3, k);
}

inline FusionDesign discrete_design(int k) {
  FusionDesign d;
  d.d = 3;
  d.k = k;
  std::vector<int> all, weak;
  for (int s = 1; s <= k; ++s) all.push_back(s);
  for (int s = 2; s <= k; ++s) weak.push_back(s);
  d.relevant = {IndexSets{1, all, {}}, IndexSets{2, all, {}}, IndexSets{3, {1}, weak}};
  d.weights[{3, 2}] = make_tilt(3, {"z1*log(z3)"});
  if (k >= 3) d.weights[{3, 3}] = make_tilt(3, {"log(z3)", "z2*z3"});
  return d;
}

struct FredholmCheck {
  double max_abs_diff = 0;       // oracle D~_3 vs engine D~_3 over rows
  double max_residual = 0;       // Fredholm residual of the dense solution
  int cells = 0;
};

// Dense solve of d = (I - B) d~ on the three-point support of every
// (z1, z2) cell, with B[z][z'] = q(z') * sum_m r_m(z) w*_m(z'), compared with
// the engine's D~_3 after centring within the row's source.
inline FredholmCheck fredholm_check(const FittedNuisance& nu, const GradientSeed& seed, const InfluenceTable& tab,
                                    const Dataset& rows) {
  const IndexNuisance& in = nu.at(3);
  const int col = static_cast<int>(std::find(tab.seed_indices.begin(), tab.seed_indices.end(), 3) -
                                   tab.seed_indices.begin());
  const double support[3] = {0.2, 0.5, 0.8};
  const int K = static_cast<int>(in.S.size());
  FredholmCheck out;

  for (double z1 : {1.0, 2.0}) {
    for (double z2 : {0.0, 1.0}) {
      const double x[2] = {z1, z2};
      // q from raw frequencies of z3 among aligned rows in the cell
      Eigen::Vector3d q = Eigen::Vector3d::Zero();
      for (int i = 0; i < nu.data.n(); ++i) {
        if (std::find(in.A.begin(), in.A.end(), nu.data.s(i)) == in.A.end()) continue;
        if (nu.data.z(i, 0) != z1 || nu.data.z(i, 1) != z2) continue;
        for (int t = 0; t < 3; ++t)
          if (nu.data.z(i, 2) == support[t]) q[t] += 1;
      }
      if (q.sum() == 0) continue;
      q /= q.sum();
      ++out.cells;

      // w*_m on the support, straight from the weight formula
      Eigen::MatrixXd ws = Eigen::MatrixXd::Ones(3, K);
      for (int p = 0; p < K; ++p) {
        if (!in.weak[p]) continue;
        Eigen::Vector3d raw;
        for (int t = 0; t < 3; ++t) {
          double z[3] = {z1, z2, support[t]};
          raw[t] = eval_weight(*in.spec[p], in.beta[p], z);
        }
        ws.col(p) = raw / q.dot(raw);
      }
      PointLaw L = point_law(nu, 3, x);
      Eigen::VectorXd dtil = L.delta_tilde;  // shared nuisance input
      double lam = in.ratios.lambda(x);

      // r_m(z) = dtil_m w*_m(z) / sum_l dtil_l w*_l(z)
      Eigen::MatrixXd r(3, K);
      for (int t = 0; t < 3; ++t) {
        double den = ws.row(t).dot(dtil);
        for (int p = 0; p < K; ++p) r(t, p) = dtil[p] * ws(t, p) / den;
      }
      // d(z) = sum_m r_m(z) D_{P,3}(z, m), D_{P,3}(z, m) = lambda / w*_m / P(S_3) * D_Q
      Eigen::Vector3d d;
      for (int t = 0; t < 3; ++t) {
        double zz[3] = {z1, z2, support[t]};
        double dq = seed_value(seed, nu, 3, zz);
        double acc = 0;
        for (int p = 0; p < K; ++p) acc += r(t, p) * lam / ws(t, p) / in.PS * dq;
        d[t] = acc;
      }
      Eigen::Matrix3d B;
      for (int t = 0; t < 3; ++t)
        for (int u = 0; u < 3; ++u) B(t, u) = q[u] * r.row(t).dot(ws.row(u));
      Eigen::Matrix3d A = Eigen::Matrix3d::Identity() - B;
      Eigen::Vector3d sol = A.completeOrthogonalDecomposition().solve(d);
      out.max_residual = std::max(out.max_residual, (A * sol - d).cwiseAbs().maxCoeff());

      for (int i = 0; i < rows.n(); ++i) {
        if (rows.z(i, 0) != z1 || rows.z(i, 1) != z2) continue;
        int p = in.pos[rows.s(i)];
        if (p < 0) continue;
        int t = 0;
        while (support[t] != rows.z(i, 2)) ++t;
        double centred = sol[t] - (q.array() * ws.col(p).array() * sol.array()).sum();
        out.max_abs_diff = std::max(out.max_abs_diff, std::abs(centred - tab.D_tilde_j(i, col)));
      }
    }
  }
  return out;
}

}  // namespace oracle
