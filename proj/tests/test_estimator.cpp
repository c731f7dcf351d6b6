#include <doctest.h>

#include <cmath>

#include "fusion/estimator.hpp"
#include "fusion/simulation.hpp"
#include "helpers.hpp"

using namespace fusion;

namespace {

EstimateReport fixed_report(double est, double se) {
  EstimateReport r;
  r.estimand = "ate";
  r.estimate = est;
  r.se = se;
  r.level = 0.95;
  return r;
}

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1));
  CHECK(normal_quantile(0.05) == doctest::Approx(-1.6448536269514722).epsilon(1e-12));
}

TEST_CASE("wald interval") {
  auto [lo, hi] = wald_interval(fixed_report(0.1667, 0.005), 0.95);
  CHECK(lo == doctest::Approx(0.1569).epsilon(1e-3));
  CHECK(hi == doctest::Approx(0.1765).epsilon(1e-3));
  CHECK(std::abs(lo - (0.1667 - 1.959964 * 0.005)) < 1e-8);

  auto [l0, h0] = wald_interval(fixed_report(0.3, 0.0), 0.95);
  CHECK(l0 == 0.3);
  CHECK(h0 == 0.3);

  CHECK_THROWS_AS(wald_interval(fixed_report(0.1, 0.01), 1.5), BadLevel);
  CHECK_THROWS_AS(wald_interval(fixed_report(0.1, 0.01), 0.0), BadLevel);
}

TEST_CASE("sensitivity interval") {
  // Wald interval (0.157, 0.177)
  EstimateReport r = fixed_report(0.167, 0.01 / normal_quantile(0.975));
  auto [lo, hi] = sensitivity_interval(r, 0.01);
  CHECK(lo == doctest::Approx(0.147).epsilon(1e-12));
  CHECK(hi == doctest::Approx(0.187).epsilon(1e-12));
  auto w = wald_interval(r, 0.95);
  CHECK(sensitivity_interval(r, 0.0) == w);
  CHECK_THROWS_AS(sensitivity_interval(r, -0.01), NegativeDelta);
  r.estimand = "working_linear";
  CHECK_THROWS_AS(sensitivity_interval(r, 0.01), InvalidShape);
}

TEST_CASE("variant names and design transforms") {
  for (const char* s : {"target_only", "naive_fusion", "efficient_fusion", "overparametrized+2"})
    CHECK(EstimatorVariant::parse(s).name() == s);
  CHECK(EstimatorVariant::parse("overparametrized(5)").extra_dims == 5);
  CHECK(EstimatorVariant::parse("efficient").tag == EstimatorVariant::Tag::efficient_fusion);
  CHECK_THROWS_AS(EstimatorVariant::parse("overparametrized+0"), ParseError);
  CHECK_THROWS_AS(EstimatorVariant::parse("fancy"), ParseError);

  FusionDesign d = simulation_design();
  FusionDesign t = apply_variant(d, EstimatorVariant::parse("target_only"));
  for (const auto& r : t.relevant) {
    CHECK(r.aligned == std::vector<int>{1});
    CHECK(r.weak.empty());
  }
  CHECK(t.weights.empty());
  FusionDesign nf = apply_variant(d, EstimatorVariant::parse("naive_fusion"));
  for (const auto& r : nf.relevant) CHECK(r.aligned == std::vector<int>{1, 2, 3, 4});
  FusionDesign o = apply_variant(d, EstimatorVariant::parse("overparametrized+2"));
  CHECK(o.weights.at({3, 3}).basis.size() == 3);
  CHECK(apply_variant(d, EstimatorVariant::parse("efficient_fusion")) == d);
}

TEST_CASE("one-step estimate") {
  Dataset data = testing::simulated("strongly_aligned", 1000, 51);
  EstimateOptions opt;
  opt.nuisance.grid_points = 100;
  EstimateReport e = one_step_estimate(data, simulation_design(), simulation_estimand(),
                                       EstimatorVariant::parse("efficient_fusion"), opt);
  CHECK(e.se > 0);
  CHECK(e.ci_lo < e.estimate);
  CHECK(e.estimate < e.ci_hi);
  CHECK(std::abs(e.estimate - 1.0 / 6) < 4 * e.se);
  CHECK(e.n == 4000);
  CHECK(e.n_per_source == std::vector<int>{1000, 1000, 1000, 1000});
  CHECK(e.beta.size() == 4);
  CHECK(e.beta_se.size() == 4);
  CHECK(e.se == doctest::Approx(std::sqrt(e.variances.D_eff / e.n)).epsilon(1e-12));
  CHECK(e.variances.D_eff <= 1.05 * e.variances.D_A);

  // single-threaded determinism
  EstimateReport again = one_step_estimate(data, simulation_design(), simulation_estimand(),
                                           EstimatorVariant::parse("efficient_fusion"), opt);
  CHECK(again.estimate == e.estimate);
  CHECK(again.se == e.se);
  CHECK(again.beta == e.beta);

  EstimateReport t = one_step_estimate(data, simulation_design(), simulation_estimand(),
                                       EstimatorVariant::parse("target_only"), opt);
  CHECK(t.beta.size() == 0);
  CHECK(t.se == doctest::Approx(std::sqrt(t.variances.D_A / t.n)).epsilon(1e-12));
  CHECK(t.se > e.se);

  CHECK_THROWS_AS(data.select_rows({}), StructuralError);
  CHECK_THROWS_AS(one_step_estimate(Dataset{}, simulation_design(), simulation_estimand(),
                                    EstimatorVariant::parse("efficient_fusion"), opt),
                  StructuralError);
  opt.level = 1.5;
  CHECK_THROWS_AS(one_step_estimate(data, simulation_design(), simulation_estimand(),
                                    EstimatorVariant::parse("target_only"), opt),
                  BadLevel);
}
