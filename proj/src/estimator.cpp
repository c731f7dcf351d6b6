#include "fusion/estimator.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <regex>

#include "fusion/engine.hpp"
#include "fusion/seed.hpp"

namespace fusion {

std::string EstimatorVariant::name() const {
  switch (tag) {
    case Tag::target_only: return "target_only";
    case Tag::naive_fusion: return "naive_fusion";
    case Tag::efficient_fusion: return "efficient_fusion";
    case Tag::overparametrized: return "overparametrized+" + std::to_string(extra_dims);
  }
  return "?";
}

EstimatorVariant EstimatorVariant::parse(const std::string& s) {
  static const std::regex over(R"(overparametrized(\+|\(|:)?([0-9]+)\)?)");
  EstimatorVariant v;
  std::smatch m;
  if (s == "target_only")
    v.tag = Tag::target_only;
  else if (s == "naive_fusion")
    v.tag = Tag::naive_fusion;
  else if (s == "efficient_fusion" || s == "efficient")
    v.tag = Tag::efficient_fusion;
  else if (std::regex_match(s, m, over)) {
    v.tag = Tag::overparametrized;
    v.extra_dims = std::stoi(m[2]);
    if (v.extra_dims < 1) throw ParseError("overparametrized variant needs at least one extra dimension");
  } else {
    throw ParseError("unknown estimator variant '" + s + "'");
  }
  return v;
}

FusionDesign apply_variant(const FusionDesign& design, const EstimatorVariant& v) {
  FusionDesign out = design;
  switch (v.tag) {
    case EstimatorVariant::Tag::target_only:
    case EstimatorVariant::Tag::naive_fusion: {
      std::vector<int> all;
      for (int s = 1; s <= design.k; ++s) all.push_back(s);
      for (auto& r : out.relevant) {
        r.aligned = v.tag == EstimatorVariant::Tag::target_only ? std::vector<int>{design.reference} : all;
        r.weak.clear();
      }
      out.weights.clear();
      break;
    }
    case EstimatorVariant::Tag::efficient_fusion: break;
    case EstimatorVariant::Tag::overparametrized:
      for (auto& [key, spec] : out.weights)
        if (spec.family == WeightFamily::exponential_tilt) spec = append_redundant_terms(spec, v.extra_dims);
      break;
  }
  return out;
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::pair<double, double> wald_interval(const EstimateReport& report, double level) {
  if (!(level > 0.0 && level < 1.0)) throw BadLevel("level must lie in (0, 1), got " + std::to_string(level));
  double z = normal_quantile(0.5 * (1.0 + level));
  return {report.estimate - z * report.se, report.estimate + z * report.se};
}

std::pair<double, double> sensitivity_interval(const EstimateReport& report, double delta) {
  if (!(delta >= 0.0)) throw NegativeDelta("delta must be non-negative, got " + std::to_string(delta));
  if (report.estimand != "ate") throw InvalidShape("sensitivity intervals are defined for the ate only");
  auto [lo, hi] = wald_interval(report, report.level);
  return {lo - delta, hi + delta};
}

namespace {

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / (v.size() - 1);
}

struct Fitted {
  FittedNuisance nu;
  GradientSeed seed;
};

}  // namespace

EstimateReport one_step_estimate(const Dataset& data, const FusionDesign& design, const EstimandSpec& estimand,
                                 const EstimatorVariant& variant, const EstimateOptions& opt) {
  if (data.n() == 0) throw StructuralError("dataset has no rows");
  FusionDesign vdesign = apply_variant(design, variant);
  vdesign.normalize();
  EstimandView view = make_view(estimand, vdesign);
  Dataset vd = data.select_columns(view.columns);
  EstimandSpec vest = estimand;
  vest.covariate = 1;
  vest.treatment = estimand.kind == EstimandSpec::Kind::ate ? 2 : 0;
  vest.outcome = static_cast<int>(view.columns.size());

  EstimateReport rep;
  rep.variant = variant.name();
  rep.estimand = estimand_name(estimand.kind);
  rep.level = opt.level;
  rep.seed = opt.seed;
  rep.n = data.n();
  rep.n_per_source = data.counts();

  if (opt.validate) {
    ValidationReport vr = validate_design(view.design, vd, opt.nuisance.ratio_min, opt.nuisance.ratio_max);
    for (const auto& w : vr.warnings) rep.diag.warn(w);
  } else {
    check_design_structure(view.design);
    std::vector<int> counts = vd.counts();
    for (const auto& r : view.design.relevant)
      for (int s : r.support())
        if (counts[s - 1] == 0) throw StructuralError("source " + std::to_string(s) + " has no rows");
  }

  BetaParam beta = zero_beta(view.design);
  for (const auto& blk : beta.layout) {
    const WeightSpec& spec = vdesign.weights.at({view.columns[blk.j - 1], blk.s});
    for (int m = 0; m < blk.len; ++m)
      rep.beta_names.push_back("j" + std::to_string(view.columns[blk.j - 1]) + ".s" + std::to_string(blk.s) + "." +
                               spec.basis[m].str());
  }

  FittedNuisance nu = fit_nuisance_bundle(vd, view.design, beta, vest, opt.nuisance);
  rep.diag.merge(nu.diag);
  if (beta.size() > 0) {
    MomentResult mm = moment_match_beta(nu, opt.moment);
    rep.beta_init = mm.beta.values;
    if (!mm.converged) {
      rep.beta_converged = false;
      rep.diag.beta_converged = false;
      rep.diag.warn("NoConvergence: moment matching for beta did not reach the tolerance");
    }
    OneStepBeta os = one_step_beta(nu, mm.beta, &rep.diag);
    nu = nu.with_beta(os.beta);
  }
  rep.beta = nu.beta.values;

  const bool efficient = variant.uses_weak();
  Eigen::VectorXd D;
  InfluenceTable full;
  if (!opt.nuisance.cross_fit) {
    GradientSeed seed = seed_gradient(nu);
    rep.diag.merge(seed.diag);
    full = evaluate_gradients(nu, &seed, vd);
    D = efficient ? full.D_eff : full.D_A;
    rep.plugin = full.plugin;
    rep.estimate = full.plugin + D.mean();
  } else {
    // Two folds, alternating rows within each source; beta stays the
    // full-sample estimate and every other fit uses the opposite fold.
    std::vector<std::vector<int>> folds(2);
    std::vector<int> seen(data.k() + 1, 0);
    for (int i = 0; i < vd.n(); ++i) folds[seen[vd.s(i)]++ % 2].push_back(i);
    D.resize(vd.n());
    full.D_P.resize(vd.n());
    full.D_A.resize(vd.n());
    full.D_tilde.resize(vd.n());
    full.D_eff.resize(vd.n());
    rep.estimate = 0;
    rep.plugin = 0;
    for (int f = 0; f < 2; ++f) {
      Dataset train = vd.select_rows(folds[1 - f]);
      Dataset test = vd.select_rows(folds[f]);
      FittedNuisance nf = fit_nuisance_bundle(train, view.design, nu.beta, vest, opt.nuisance);
      rep.diag.merge(nf.diag);
      GradientSeed seed = seed_gradient(nf);
      rep.diag.merge(seed.diag);
      InfluenceTable t = evaluate_gradients(nf, &seed, test);
      rep.diag.merge(t.diag);
      Eigen::VectorXd Df = efficient ? t.D_eff : t.D_A;
      const double share = static_cast<double>(test.n()) / vd.n();
      rep.estimate += share * (t.plugin + Df.mean());
      rep.plugin += share * t.plugin;
      for (size_t q = 0; q < folds[f].size(); ++q) {
        int i = folds[f][q];
        D[i] = Df[q];
        full.D_P[i] = t.D_P[q];
        full.D_A[i] = t.D_A[q];
        full.D_tilde[i] = t.D_tilde[q];
        full.D_eff[i] = t.D_eff[q];
      }
    }
    InfluenceTable scores = evaluate_gradients(nu, nullptr, vd);
    full.info_pinv = scores.info_pinv;
    full.diag = scores.diag;
  }
  rep.diag.merge(full.diag);
  rep.se = std::sqrt(sample_variance(D) / vd.n());
  std::tie(rep.ci_lo, rep.ci_hi) = wald_interval(rep, opt.level);
  rep.variances = {sample_variance(full.D_P), sample_variance(full.D_A), sample_variance(full.D_tilde),
                   sample_variance(full.D_eff)};
  rep.beta_se = Eigen::VectorXd::Zero(rep.beta.size());
  for (long c = 0; c < rep.beta.size(); ++c)
    rep.beta_se[c] = std::sqrt(std::max(full.info_pinv(c, c), 0.0) / vd.n());
  return rep;
}

}  // namespace fusion
