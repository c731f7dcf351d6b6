#include <doctest.h>

#include <cmath>

#include "fusion/kernel.hpp"
#include "fusion/logistic.hpp"
#include "fusion/nuisance.hpp"
#include "fusion/seed.hpp"
#include "helpers.hpp"

using namespace fusion;

namespace {

double beta_fn(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

// Bundle for the simulation design at the true beta of the scenario.
FittedNuisance truth_bundle(const std::string& alignment, int n, std::uint64_t seed) {
  Scenario sc = make_scenario(alignment, Shift::none, n);
  Dataset data = generate_dataset(sc, seed, 0);
  FusionDesign d = simulation_design();
  BetaParam b = zero_beta(d);
  for (const auto& [key, v] : true_parameters(sc).beta)
    b.set_slice(key.first, key.second, Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
  return fit_nuisance_bundle(data, d, b, simulation_estimand(), NuisanceOptions{});
}

}  // namespace

TEST_CASE("kernel regression basics") {
  RowMatrix x(200, 1);
  Eigen::VectorXd c = Eigen::VectorXd::Constant(200, 3.25), y(200);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = i / 199.0;
    y[i] = x(i, 0);
  }
  RegressionFit fc = fit_kernel_regression(x, c, BandwidthRule::silverman());
  for (double q : {0.0, 0.37, 1.0, 1.8}) CHECK(fc.predict(&q) == doctest::Approx(3.25).epsilon(1e-14));

  RegressionFit fl = fit_kernel_regression(x, y, BandwidthRule::fixed(0.01));
  for (double q : {0.2, 0.5, 0.77}) CHECK(std::abs(fl.predict(&q) - q) < 1e-2);

  RowMatrix x3(3, 1);
  x3 << 0.1, 0.2, 0.4;
  CHECK_THROWS_AS(fit_kernel_regression(x3, Eigen::Vector3d(1, 2, 3), BandwidthRule::cv_loo({0.5, 1, 2})),
                  InsufficientData);

  RegressionFit cv = fit_kernel_regression(x, y, BandwidthRule::cv_loo({0.25, 0.5, 1.0, 2.0}));
  CHECK(cv.smoother.bandwidth()[0] > 0);
}

TEST_CASE("discrete columns are matched exactly") {
  RowMatrix x(6, 2);
  x << 0, 0.1, 0, 0.2, 1, 0.1, 1, 0.3, 2, 0.5, 2, 0.6;
  Eigen::VectorXd y(6);
  y << 1, 1, 5, 5, 9, 9;
  RegressionFit f = fit_kernel_regression(x, y, BandwidthRule::silverman());
  CHECK(f.smoother.discrete() == std::vector<char>{1, 0});
  double q[2] = {1, 0.9};
  CHECK(f.predict(q) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("serial and parallel kernel prediction agree bitwise") {
  Dataset data = testing::simulated("fully_aligned", 500, 5);
  RowMatrix x = prefix_rows(data, 2);
  Eigen::VectorXd y = data.Z().col(2);
  RegressionFit f = fit_kernel_regression(x, y, BandwidthRule::silverman());
  Eigen::VectorXd a = f.predict(x, Exec::serial), b = f.predict(x, Exec::parallel);
  CHECK((a.array() == b.array()).all());
  Eigen::VectorXd g0 = predict_on_grid(f, x, 0, Exec::serial);
  CHECK((g0.array() == a.array()).all());
  Eigen::VectorXd g = predict_on_grid(f, x, 200, Exec::parallel);
  CHECK((g - a).cwiseAbs().maxCoeff() < 2e-3);
}

TEST_CASE("propensity fits") {
  Dataset data = testing::simulated("fully_aligned", 2000, 8);
  Diagnostics diag;
  PropensityFit p = fit_propensity(data, {1, 2, 3, 4}, 2, 0.01, &diag);
  double sup = 0;
  for (double z1 = 1.0; z1 <= 2.0; z1 += 0.01) sup = std::max(sup, std::abs(p(&z1) - 0.5));
  CHECK(sup <= 0.05);

  // perfectly separated: treatment = 1{z1 > 1.5}
  std::vector<Observation> rows;
  for (int i = 0; i < 100; ++i) rows.push_back({{1.0 + i / 100.0, i >= 50 ? 1.0 : 0.0, 0.5}, 1});
  Dataset sep = Dataset::from_rows(rows, 3, 1);
  Diagnostics d2;
  PropensityFit ps = fit_propensity(sep, {1}, 2, 0.01, &d2);
  CHECK(d2.ridge_fallbacks > 0);
  CHECK(ps.model.coef().allFinite());
  double lo = 1.0, hi = 1.99;
  CHECK(ps(&lo) >= 0.01);
  CHECK(ps(&hi) <= 0.99);

  rows[3].z[1] = 2.0;
  CHECK_THROWS_AS(fit_propensity(Dataset::from_rows(rows, 3, 1), {1}, 2, 0.01), NonBinaryTreatment);
}

TEST_CASE("membership density ratio under covariate shift") {
  Scenario sc = make_scenario("fully_aligned", Shift::beta_shift, 20000);
  Dataset data = generate_dataset(sc, 21, 0);
  MembershipRatio r = MembershipRatio::fit(data, {4}, {1}, 1, true);
  // Beta(5.5, 5) + 1 over Beta(4, 5) + 1
  auto exact = [](double z1) { return testing::beta_pdf(z1 - 1, 5.5, 5) / testing::beta_pdf(z1 - 1, 4, 5); };
  for (double z1 : {1.3, 1.5, 1.7, 1.9}) CHECK(r(&z1) == doctest::Approx(exact(z1)).epsilon(0.2));
  double mean = 0;
  std::vector<int> rows = data.rows_in({1});
  for (int i : rows) mean += r(data.row(i)) / rows.size();
  CHECK(std::abs(mean - 1.0) < 0.1);

  Dataset flat = testing::simulated("fully_aligned", 5000, 22);
  MembershipRatio f = MembershipRatio::fit(flat, {2}, {1}, 1, true);
  for (double z1 : {1.1, 1.5, 1.9}) CHECK(std::abs(f(&z1) - 1.0) < 0.15);
}

TEST_CASE("single aligned source gives lambda = 1") {
  Dataset data = testing::simulated("fully_aligned", 200, 4);
  FusionDesign d;
  d.d = 3;
  d.k = 4;
  d.relevant = {IndexSets{1, {1}, {}}, IndexSets{3, {1}, {}}};
  DensityRatioFit f = fit_marginal_density_ratio(data, d, 3, NuisanceOptions{});
  double x[2] = {1.4, 1.0};
  CHECK(f.lambda(x) == 1.0);
  CHECK(f.rho_at(0, x) == 1.0);
}

TEST_CASE("normalizer against numeric integration of the Beta outcome law") {
  Dataset data = testing::simulated("fully_aligned", 5000, 31);
  FusionDesign d = simulation_design();
  d.weights[{3, 2}] = make_tilt(3, {"log(z3)"});
  BetaParam b = zero_beta(d);
  FittedNuisance nu = fit_nuisance_bundle(data, d, b, simulation_estimand(), NuisanceOptions{});
  double x[2] = {1.0, 1.0};
  NormalizerEstimate w0 = estimate_normalizer(nu, 3, 2, x);
  CHECK(w0.value == doctest::Approx(1.0).epsilon(1e-12));

  auto oracle = [](double z1, double z2, double c) {
    double a = 2 * z1 * (1 + z2), bb = 2 * z1;
    return testing::simpson([&](double t) { return t > 0 && t < 1 ? std::pow(t, c) * testing::beta_pdf(t, a, bb) : 0.0; },
                            0.0, 1.0);
  };
  // closed form for the spec example
  CHECK(oracle(1, 1, -0.5) == doctest::Approx(beta_fn(3.5, 2) / beta_fn(4, 2)).epsilon(1e-6));
  for (double z1 : {1.0, 1.5}) {
    double xx[2] = {z1, 1.0};
    NormalizerEstimate w = estimate_normalizer(nu, 3, 2, Eigen::VectorXd::Constant(1, -0.5), xx);
    CHECK(w.value == doctest::Approx(oracle(z1, 1, -0.5)).epsilon(0.02));
    CHECK(w.value > 0);
  }
}

TEST_CASE("density ratio matches the exact Beta density ratio at the true beta") {
  FittedNuisance nu = truth_bundle("moderately_aligned", 4000, 41);
  const double eps = 0.5;
  for (double z1 : {1.3, 1.6}) {
    for (double z2 : {0.0, 1.0}) {
      double a = 2 * z1 * (1 + z2);
      for (double z3 : {0.3, 0.6, 0.8}) {
        double z[3] = {z1, z2, z3};
        double exact = testing::beta_pdf(z3, a, (2 - eps) * z1) / testing::beta_pdf(z3, a, 2 * z1);
        CHECK(density_ratio(nu, 3, 3, z) == doctest::Approx(exact).epsilon(0.05));
      }
    }
  }
}

TEST_CASE("density ratio clipping is counted") {
  FittedNuisance nu = truth_bundle("fully_aligned", 300, 42);
  BetaParam b = nu.beta;
  b.values.setConstant(-40.0);
  FittedNuisance big = nu.with_beta(b);
  Diagnostics diag;
  double z[3] = {2.0, 1.0, 0.001};
  CHECK(density_ratio(big, 3, 2, z, &diag) == 1e3);
  CHECK(diag.ratio_clips == 1);
}

TEST_CASE("conditional means") {
  FittedNuisance nu = truth_bundle("fully_aligned", 4000, 43);
  double x[2] = {1.5, 1.0};
  CHECK(conditional_mean(nu, "one", 3, x) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(conditional_mean(nu, "outcome", 3, x) == doctest::Approx(2.0 / 3.0).epsilon(0.02));
  CHECK(conditional_mean(nu, "density_ratio:2", 3, x) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(conditional_mean(nu, "propensity", 3, x), NuisanceMissing);
  CHECK_THROWS_AS(conditional_mean(nu, "weight:1", 3, x), Error);

  BetaParam zero = nu.beta;
  zero.values.setZero();
  FittedNuisance z = nu.with_beta(zero);
  CHECK(conditional_mean(z, "weight:2", 3, x) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("bundle scoping") {
  Dataset data = testing::simulated("fully_aligned", 300, 44);
  FusionDesign none;
  none.d = 3;
  none.k = 4;
  none.relevant = {IndexSets{1, {1, 2, 3, 4}, {}}, IndexSets{3, {1, 2}, {}}};
  FittedNuisance nu = fit_nuisance_bundle(data, none, zero_beta(none), simulation_estimand(), NuisanceOptions{});
  for (const auto& in : nu.index)
    for (const auto& s : in.spec) CHECK(!s.has_value());
  CHECK_THROWS_AS(nu.at(2), NuisanceMissing);

  FittedNuisance tb = truth_bundle("strongly_aligned", 300, 45);
  BetaParam b = tb.beta;
  b.values.array() += 0.1;
  FittedNuisance moved = tb.with_beta(b);
  double x[2] = {1.5, 1.0};
  CHECK(estimate_normalizer(moved, 3, 2, x).value != estimate_normalizer(tb, 3, 2, x).value);
  CHECK(seed_gradient(moved).plugin == seed_gradient(tb).plugin);
}
