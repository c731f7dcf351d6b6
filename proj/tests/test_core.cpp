#include <doctest.h>

#include <cmath>

#include "fusion/design.hpp"
#include "fusion/estimand.hpp"
#include "fusion/weights.hpp"
#include "helpers.hpp"

using namespace fusion;

namespace {

FusionDesign small_design() {
  FusionDesign d;
  d.d = 3;
  d.k = 4;
  d.relevant = {IndexSets{1, {1}, {}}, IndexSets{2, {1}, {}}, IndexSets{3, {1}, {2, 3, 4}}};
  d.weights[{3, 2}] = make_tilt(3, {"z1*log(z3)", "z1*z2*log(z3)"});
  d.weights[{3, 3}] = make_tilt(3, {"z1*log1m(z3)"});
  d.weights[{3, 4}] = make_tilt(3, {"z1*z2*log(z3)"});
  return d;
}

}  // namespace

TEST_CASE("design structure checks") {
  FusionDesign d = small_design();
  CHECK_NOTHROW(check_design_structure(d));
  CHECK(d.relevant_indices() == std::vector<int>{1, 2, 3});
  CHECK(d.irrelevant_indices().empty());
  CHECK(d.has_weak());

  FusionDesign empty_a = d;
  empty_a.relevant[2].aligned.clear();
  CHECK_THROWS_AS(check_design_structure(empty_a), StructuralError);

  FusionDesign unknown = d;
  unknown.relevant[2].weak.push_back(5);
  unknown.weights[{3, 5}] = make_tilt(3, {"log(z3)"});
  CHECK_THROWS_AS(check_design_structure(unknown), StructuralError);

  FusionDesign overlap = d;
  overlap.relevant[2].aligned.push_back(2);
  CHECK_THROWS_AS(check_design_structure(overlap), StructuralError);

  FusionDesign missing = d;
  missing.weights.erase({3, 4});
  CHECK_THROWS_AS(check_design_structure(missing), StructuralError);
}

TEST_CASE("validate_design on simulated data") {
  Dataset data = testing::simulated("strongly_aligned", 300, 3);
  ValidationReport rep = validate_design(small_design(), data);
  REQUIRE(rep.indices.size() == 3);
  CHECK(rep.indices[2].weak_rows.size() == 3);
  CHECK(rep.indices[2].aligned_rows[0] == std::make_pair(1, 300));
  // no covariate shift: fitted ratios stay near 1
  for (const auto& e : rep.overlap) {
    CHECK(e.ratio_min > 0.5);
    CHECK(e.ratio_max < 2.0);
  }
  ValidationReport again = validate_design(small_design(), data);
  CHECK(again.overlap.size() == rep.overlap.size());
  for (size_t i = 0; i < rep.overlap.size(); ++i) CHECK(again.overlap[i].ratio_max == rep.overlap[i].ratio_max);

  // source with no rows
  std::vector<int> keep;
  for (int i = 0; i < data.n(); ++i)
    if (data.s(i) != 4) keep.push_back(i);
  CHECK_THROWS_AS(validate_design(small_design(), data.select_rows(keep)), StructuralError);
}

TEST_CASE("beta layout, slices and assembly") {
  FusionDesign d = small_design();
  BetaParam b = zero_beta(d);
  REQUIRE(b.layout.size() == 3);
  CHECK(b.layout[0].len == 2);
  CHECK(b.layout[1].offset == 2);
  b.values = Eigen::VectorXd::Constant(4, -0.2);
  CHECK(beta_slice(b, 3, 3).size() == 1);
  CHECK(beta_slice(b, 3, 3)[0] == doctest::Approx(-0.2));

  Eigen::VectorXd v(4);
  v << 1, 2, 3, 4;
  b.values = v;
  std::vector<Eigen::VectorXd> slices;
  for (const auto& blk : b.layout) slices.push_back(b.slice(blk.j, blk.s));
  CHECK(assemble_beta(b.layout, slices).values == v);

  BetaParam none;
  CHECK_THROWS_AS(beta_slice(none, 3, 2), KeyError);
}

TEST_CASE("basis term grammar") {
  BasisTerm t = parse_basis_term("z1*log(z3)", 3);
  CHECK(t.monomial == std::vector<std::pair<int, int>>{{1, 1}});
  CHECK(t.g == Transform::log);
  CHECK(t.str() == "z1*log(z3)");
  CHECK(parse_basis_term("z1^2*z2*z3^2", 3).g == Transform::square);
  CHECK(parse_basis_term(" z2 * log1m( z3 ) ", 3).str() == "z2*log1m(z3)");
  CHECK_THROWS_AS(parse_basis_term("z1^3*z3", 3), ParseError);
  CHECK_THROWS_AS(parse_basis_term("z1*z2", 3), ParseError);
  CHECK_THROWS_AS(parse_basis_term("log(z1)*z3", 3), ParseError);
  CHECK_THROWS_AS(parse_basis_term("z4*z3", 3), ParseError);
  CHECK_THROWS_AS(make_tilt(3, {"log(z3)", "log(z3)"}), StructuralError);
  CHECK_THROWS_AS(make_tilt(3, {}), StructuralError);
}

TEST_CASE("eval_weight examples") {
  WeightSpec s2 = make_tilt(3, {"z1*log(z3)", "z1*z2*log(z3)"});
  double z[3] = {1.0, 1.0, 0.5};
  CHECK(eval_weight(s2, Eigen::Vector2d::Zero(), z) == 1.0);
  CHECK(eval_weight(s2, Eigen::Vector2d(-0.5, -0.5), z) == doctest::Approx(2.0).epsilon(1e-14));

  WeightSpec tr = make_truncation(2, 0.3);
  double zt[2] = {1.0, 0.2};
  CHECK(eval_weight(tr, Eigen::VectorXd::Constant(1, 0.3), zt) == 0.0);
  zt[1] = 0.3;
  CHECK(eval_weight(tr, Eigen::VectorXd::Constant(1, 0.3), zt) == 1.0);
  CHECK_THROWS_AS(eval_weight_logderiv(tr, Eigen::VectorXd::Constant(1, 0.3), zt), UnsupportedFamily);

  double bad[3] = {1.0, 0.0, 1.0};
  WeightSpec s3 = make_tilt(3, {"z1*log1m(z3)"});
  CHECK_THROWS_AS(eval_weight(s3, Eigen::VectorXd::Constant(1, 0.1), bad), DomainError);
  bad[2] = 0.0;
  CHECK_THROWS_AS(eval_weight(s2, Eigen::Vector2d(0.1, 0.1), bad), DomainError);
  CHECK_THROWS_AS(eval_weight(s2, Eigen::VectorXd::Zero(3), z), InvalidShape);
}

TEST_CASE("log-derivative matches finite differences") {
  WeightSpec s = make_tilt(3, {"z1*log(z3)", "z1^2*z2*log1m(z3)", "z2*z3^2"});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 0.95), b(-1, 1);
  for (int rep = 0; rep < 50; ++rep) {
    double z[3] = {1 + u(rng), std::round(u(rng)), u(rng)};
    Eigen::Vector3d beta(b(rng), b(rng), b(rng));
    Eigen::VectorXd g = eval_weight_logderiv(s, beta, z);
    REQUIRE(g.size() == 3);
    for (int m = 0; m < 3; ++m) {
      const double h = 1e-6;
      Eigen::Vector3d bp = beta, bm = beta;
      bp[m] += h;
      bm[m] -= h;
      double fd = (std::log(eval_weight(s, bp, z)) - std::log(eval_weight(s, bm, z))) / (2 * h);
      CHECK(fd == doctest::Approx(g[m]).epsilon(1e-6).scale(1.0));
    }
    CHECK(eval_weight_logderiv(s, -beta, z) == g);
  }
  WeightSpec one = make_tilt(3, {"z1*log(z3)"});
  double z[3] = {2.0, 0.0, 0.5};
  CHECK(eval_weight_logderiv(one, Eigen::VectorXd::Zero(1), z)[0] == doctest::Approx(2 * std::log(0.5)));
}

TEST_CASE("redundant terms for overparametrized weights") {
  WeightSpec s = make_tilt(3, {"z1*log1m(z3)"});
  WeightSpec s2 = append_redundant_terms(s, 2);
  CHECK(s2.basis.size() == 3);
  CHECK(s2.basis[0] == s.basis[0]);
  CHECK_NOTHROW(check_weight_spec(s2));
  WeightSpec s5 = append_redundant_terms(s, 5);
  CHECK(s5.basis.size() == 6);
  for (size_t i = 0; i < s2.basis.size(); ++i) CHECK(s5.basis[i] == s2.basis[i]);
}

TEST_CASE("estimand views renumber coordinates") {
  FusionDesign d;
  d.d = 4;
  d.k = 2;
  d.relevant = {IndexSets{1, {1, 2}, {}}, IndexSets{3, {1}, {}}, IndexSets{4, {1}, {2}}};
  d.weights[{4, 2}] = make_tilt(4, {"z1*z4", "z3*log(z4)"});
  EstimandSpec wl;
  wl.kind = EstimandSpec::Kind::working_linear;
  wl.covariate = 1;
  wl.outcome = 4;
  // z3 is dropped by the view, so a term using it cannot be carried over
  CHECK_THROWS_AS(make_view(wl, d), StructuralError);
  d.weights[{4, 2}] = make_tilt(4, {"z1*z4"});
  EstimandView v = make_view(wl, d);
  CHECK(v.columns == std::vector<int>{1, 4});
  CHECK(v.design.d == 2);
  REQUIRE(v.design.weights.count({2, 2}));
  CHECK(v.design.weights.at({2, 2}).basis[0].str() == "z1*z2");
  wl.coefficient = 2;
  CHECK_THROWS_AS(make_view(wl, d), InvalidShape);
}
