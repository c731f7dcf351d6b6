#include "fusion/nuisance.hpp"

#include <algorithm>
#include <cmath>

namespace fusion {

double PropensityFit::operator()(const double* x, long* clips) const {
  return clip_ratio(model.prob(x), pmin, 1.0 - pmin, clips);
}

PropensityFit fit_propensity(const Dataset& data, const std::vector<int>& sources, int treatment, double pmin,
                             Diagnostics* diag) {
  if (treatment < 2 || treatment > data.d()) throw InvalidShape("treatment column needs at least one covariate before it");
  std::vector<int> rows = data.rows_in(sources);
  std::vector<int> y(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    double v = data.z(rows[i], treatment - 1);
    if (v != 0.0 && v != 1.0)
      throw NonBinaryTreatment("treatment column z" + std::to_string(treatment) + " takes value " + std::to_string(v));
    y[i] = static_cast<int>(v);
  }
  PropensityFit f;
  f.model = LogisticModel::fit(data, rows, treatment - 1, y, false, diag);
  f.treatment = treatment;
  f.pmin = pmin;
  return f;
}

double DensityRatioFit::rho_at(int pos, const double* x, long* clips) const {
  if (rho[pos].trivial()) return 1.0;
  return clip_ratio(rho[pos](x), lo, hi, clips);
}

double DensityRatioFit::lambda(const double* x, long* clips) const {
  if (factor_index.empty()) return 1.0;
  double v = 1.0;
  for (size_t f = 0; f < num.size(); ++f) v *= num[f](x) / den[f](x);
  return clip_ratio(v, lo, hi, clips);
}

DensityRatioFit fit_marginal_density_ratio(const Dataset& data, const FusionDesign& design, int j,
                                           const NuisanceOptions& opt, Diagnostics* diag) {
  const IndexSets* r = design.find(j);
  if (!r) throw NuisanceMissing("index " + std::to_string(j) + " is not relevant");
  DensityRatioFit f;
  f.j = j;
  f.S = r->support();
  f.A = r->aligned;
  f.lo = opt.ratio_min;
  f.hi = opt.ratio_max;
  for (int s : f.S) f.rho.push_back(MembershipRatio::fit(data, {s}, f.A, j - 1, opt.ratio_squares, diag));
  for (const auto& ri : design.relevant) {
    if (ri.j >= j || ri.aligned == f.S) continue;
    f.factor_index.push_back(ri.j);
    f.num.push_back(MembershipRatio::fit(data, ri.aligned, f.S, ri.j, opt.ratio_squares, diag));
    f.den.push_back(MembershipRatio::fit(data, ri.aligned, f.S, ri.j - 1, opt.ratio_squares, diag));
  }
  return f;
}

double ConditionalLaw::mean(const double* x) const {
  std::vector<int> idx;
  std::vector<double> w;
  smoother.weights(x, idx, w);
  double v = 0;
  for (size_t t = 0; t < idx.size(); ++t) v += w[t] * y[idx[t]];
  return v;
}

const IndexNuisance& FittedNuisance::at(int j) const {
  for (const auto& in : index)
    if (in.j == j) return in;
  throw NuisanceMissing("no fits for index " + std::to_string(j));
}

namespace {

void set_betas(IndexNuisance& in, const BetaParam& beta) {
  in.beta.assign(in.S.size(), Eigen::VectorXd());
  for (size_t p = 0; p < in.S.size(); ++p) {
    if (!in.weak[p]) continue;
    const WeightSpec& spec = *in.spec[p];
    if (spec.family == WeightFamily::truncation)
      in.beta[p] = Eigen::VectorXd::Constant(1, spec.threshold);
    else
      in.beta[p] = beta.slice(in.j, in.S[p]);
  }
}

}  // namespace

FittedNuisance FittedNuisance::with_beta(const BetaParam& b) const {
  FittedNuisance out = *this;
  out.beta = b;
  for (auto& in : out.index) set_betas(in, b);
  return out;
}

FittedNuisance fit_nuisance_bundle(const Dataset& data, const FusionDesign& design, const BetaParam& beta,
                                   const EstimandSpec& estimand, const NuisanceOptions& opt) {
  check_design_structure(design);
  if (design.d != data.d() || design.k != data.k()) throw StructuralError("design does not match the data shape");
  FittedNuisance nu;
  nu.data = data;
  nu.design = design;
  nu.estimand = estimand;
  nu.options = opt;
  nu.beta = beta;
  std::vector<int> counts = data.counts();
  nu.delta.resize(data.k());
  for (int s = 0; s < data.k(); ++s) nu.delta[s] = static_cast<double>(counts[s]) / data.n();

  for (const auto& r : design.relevant) {
    const std::string ctx = "index " + std::to_string(r.j) + ": ";
    IndexNuisance in;
    in.j = r.j;
    in.S = r.support();
    in.A = r.aligned;
    in.W = r.weak;
    in.pos.assign(data.k() + 1, -1);
    in.delta.resize(in.S.size());
    for (size_t p = 0; p < in.S.size(); ++p) {
      int s = in.S[p];
      in.pos[s] = static_cast<int>(p);
      in.delta[p] = nu.delta[s - 1];
      in.PS += in.delta[p];
      bool weak = std::binary_search(in.W.begin(), in.W.end(), s);
      in.weak.push_back(weak);
      if (weak)
        in.spec.emplace_back(design.weights.at({r.j, s}));
      else
        in.spec.emplace_back();
    }
    for (int s : in.A) in.PA += nu.delta[s - 1];
    set_betas(in, beta);

    in.law.j = r.j;
    in.law.rows = data.rows_in(in.A);
    if (in.law.rows.size() < 5) throw InsufficientData(ctx + "fewer than 5 aligned rows");
    RowMatrix x(in.law.rows.size(), r.j - 1);
    in.law.y.resize(in.law.rows.size());
    for (size_t t = 0; t < in.law.rows.size(); ++t) {
      for (int c = 0; c < r.j - 1; ++c) x(t, c) = data.z(in.law.rows[t], c);
      in.law.y[t] = data.z(in.law.rows[t], r.j - 1);
    }
    try {
      in.law.smoother = KernelSmoother(std::move(x), opt.bandwidth, &in.law.y, &nu.diag);
      in.ratios = fit_marginal_density_ratio(data, design, r.j, opt, &nu.diag);
    } catch (const InsufficientData& e) {
      throw InsufficientData(ctx + e.what());
    }
    in.terminal.resize(in.S.size());
    for (size_t p = 0; p < in.S.size(); ++p) {
      if (!in.weak[p] || in.spec[p]->family != WeightFamily::exponential_tilt) continue;
      const auto& basis = in.spec[p]->basis;
      Eigen::MatrixXd tm(in.law.y.size(), basis.size());
      for (long t = 0; t < tm.rows(); ++t)
        for (size_t m = 0; m < basis.size(); ++m) tm(t, m) = basis[m].terminal(in.law.y[t]);
      in.terminal[p] = std::move(tm);
    }
    nu.index.push_back(std::move(in));
  }

  if (estimand.kind == EstimandSpec::Kind::ate) {
    // Pool over the sources that enter the outcome gradient: S_2 when the
    // treatment index is itself relevant, S_3 otherwise.
    const IndexSets* r2 = design.find(2);
    const IndexSets* r3 = design.find(3);
    if (!r3) throw StructuralError("ate needs the outcome index 3 to be relevant");
    nu.propensity = fit_propensity(data, (r2 ? r2 : r3)->support(), 2, opt.propensity_min, &nu.diag);
  }
  return nu;
}

namespace {

const IndexNuisance& index_with_source(const FittedNuisance& nu, int j, int s, int* pos) {
  const IndexNuisance& in = nu.at(j);
  if (s < 1 || s > nu.data.k() || in.pos[s] < 0 || !in.weak[in.pos[s]])
    throw NuisanceMissing("no weight fit for (j=" + std::to_string(j) + ", s=" + std::to_string(s) + ")");
  *pos = in.pos[s];
  return in;
}

double raw_weight(const WeightSpec& spec, const Eigen::VectorXd& b, const double* x, double y) {
  if (spec.family == WeightFamily::truncation) return y >= b[0] ? 1.0 : 0.0;
  double e = 0;
  for (size_t m = 0; m < spec.basis.size(); ++m) e += b[m] * spec.basis[m].mono(x) * spec.basis[m].terminal(y);
  return std::exp(e);
}

}  // namespace

NormalizerEstimate estimate_normalizer(const FittedNuisance& nu, int j, int s, const Eigen::VectorXd& beta_js,
                                       const double* x, Diagnostics* diag) {
  int p;
  const IndexNuisance& in = index_with_source(nu, j, s, &p);
  const WeightSpec& spec = *in.spec[p];
  std::vector<int> idx;
  std::vector<double> w;
  bool ok = in.law.weights(x, idx, w);
  if (!ok && diag) {
    ++diag->empty_neighborhoods;
    diag->warn("normalizer evaluated away from the aligned rows");
  }
  NormalizerEstimate est;
  est.point.assign(x, x + (j - 1));
  double v = 0;
  for (size_t t = 0; t < idx.size(); ++t) v += w[t] * raw_weight(spec, beta_js, x, in.law.y[idx[t]]);
  est.raw = v;
  est.value = v;
  if (!(v > nu.options.normalizer_floor)) {
    est.value = nu.options.normalizer_floor;
    if (diag) {
      ++diag->normalizer_floors;
      diag->warn("DegenerateNormalizer: normalizer fit at or below the floor");
    }
  }
  return est;
}

NormalizerEstimate estimate_normalizer(const FittedNuisance& nu, int j, int s, const double* x, Diagnostics* diag) {
  int p;
  const IndexNuisance& in = index_with_source(nu, j, s, &p);
  return estimate_normalizer(nu, j, s, in.beta[p], x, diag);
}

double density_ratio(const FittedNuisance& nu, int j, int s, const double* zbar_j, Diagnostics* diag) {
  int p;
  const IndexNuisance& in = index_with_source(nu, j, s, &p);
  double w = raw_weight(*in.spec[p], in.beta[p], zbar_j, zbar_j[j - 1]);
  if (w == 0.0) return 0.0;
  double W = estimate_normalizer(nu, j, s, zbar_j, diag).value;
  long clips = 0;
  double v = clip_ratio(w / W, nu.options.ratio_min, nu.options.ratio_max, &clips);
  if (diag) diag->ratio_clips += clips;
  return v;
}

double conditional_mean(const FittedNuisance& nu, const std::string& tag, int j, const double* x, int scope) {
  const IndexNuisance& in = nu.at(j);
  auto source_of = [&](const std::string& prefix) {
    int s = std::stoi(tag.substr(prefix.size()));
    int p;
    index_with_source(nu, j, s, &p);
    return s;
  };
  enum { one, outcome, weight, ratio } kind;
  int ts = 0;
  if (tag == "one")
    kind = one;
  else if (tag == "outcome")
    kind = outcome;
  else if (tag.rfind("weight:", 0) == 0 && tag.size() > 7) {
    kind = weight;
    ts = source_of("weight:");
  } else if (tag.rfind("density_ratio:", 0) == 0 && tag.size() > 14) {
    kind = ratio;
    ts = source_of("density_ratio:");
  } else {
    throw NuisanceMissing("no conditional mean registered for '" + tag + "'");
  }
  if (scope != 0 && (scope < 1 || scope > nu.data.k() || in.pos[scope] < 0))
    throw NuisanceMissing("source " + std::to_string(scope) + " is not in S_" + std::to_string(j));

  std::vector<int> idx;
  std::vector<double> w;
  in.law.weights(x, idx, w);
  std::vector<double> z(x, x + j);
  double v = 0;
  for (size_t t = 0; t < idx.size(); ++t) {
    z[j - 1] = in.law.y[idx[t]];
    double f = 1.0;
    switch (kind) {
      case one: break;
      case outcome: f = z[j - 1]; break;
      case weight: {
        int p = in.pos[ts];
        f = raw_weight(*in.spec[p], in.beta[p], z.data(), z[j - 1]);
        break;
      }
      case ratio: f = density_ratio(nu, j, ts, z.data()); break;
    }
    if (scope != 0 && in.weak[in.pos[scope]]) f *= density_ratio(nu, j, scope, z.data());
    v += w[t] * f;
  }
  return v;
}

}  // namespace fusion
