#include "fusion/simulation.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <random>

namespace fusion {

namespace {

const char* kAlignments[] = {"fully_aligned", "strongly_aligned", "moderately_aligned", "poorly_aligned"};
const double kEpsilons[] = {0.0, 0.2, 0.5, 0.7};

double draw_beta(std::mt19937_64& rng, double a, double b) {
  if (!(a > 0) || !(b > 0)) throw InvalidShape("Beta shape parameters must be positive");
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  double x = ga(rng);
  double y = gb(rng);
  return x / (x + y);
}

}  // namespace

int Scenario::index() const {
  int level = 0;
  for (int i = 0; i < 4; ++i)
    if (alignment == kAlignments[i]) level = i;
  return level + (shift == Shift::beta_shift ? 4 : 0);
}

double alignment_epsilon(const std::string& alignment) {
  for (int i = 0; i < 4; ++i)
    if (alignment == kAlignments[i]) return kEpsilons[i];
  throw ParseError("unknown alignment '" + alignment + "'");
}

Shift parse_shift(const std::string& s) {
  if (s == "none") return Shift::none;
  if (s == "beta_shift" || s == "beta") return Shift::beta_shift;
  throw ParseError("unknown covariate shift '" + s + "'");
}

const char* shift_name(Shift s) { return s == Shift::none ? "none" : "beta_shift"; }

Scenario make_scenario(const std::string& alignment, Shift shift, int n_per_source,
                       std::vector<EstimatorVariant> variants) {
  if (n_per_source < 50) throw InvalidShape("n_per_source must be at least 50");
  Scenario sc;
  sc.alignment = alignment;
  sc.epsilon = alignment_epsilon(alignment);
  sc.shift = shift;
  sc.n_per_source = n_per_source;
  if (variants.empty()) {
    variants = {EstimatorVariant{EstimatorVariant::Tag::target_only, 0},
                EstimatorVariant{EstimatorVariant::Tag::naive_fusion, 0},
                EstimatorVariant{EstimatorVariant::Tag::efficient_fusion, 0}};
  }
  sc.variants = std::move(variants);
  return sc;
}

Dataset generate_dataset(const Scenario& sc, std::uint64_t master_seed, std::uint64_t rep) {
  if (sc.epsilon < 0) throw InvalidShape("epsilon must be non-negative");
  const int n = sc.n_per_source, k = 4;
  RowMatrix z(static_cast<long>(n) * k, 3);
  std::vector<int> s(static_cast<size_t>(n) * k);
  const double eps = sc.epsilon;
  for (int src = 1; src <= k; ++src) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(sc.index()), static_cast<std::uint32_t>(rep),
                      static_cast<std::uint32_t>(rep >> 32), static_cast<std::uint32_t>(src)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(1.0, 2.0);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < n; ++i) {
      long row = static_cast<long>(src - 1) * n + i;
      double z1 = sc.shift == Shift::none ? unif(rng) : 1.0 + draw_beta(rng, 0.5 * (src - 1) + 4.0, 5.0);
      double z2 = coin(rng) ? 1.0 : 0.0;
      double a = (2.0 - eps * (src == 2)) * (z1 + z1 * z2) - eps * (src == 4) * z1 * z2;
      double b = (2.0 - eps * (src == 3)) * z1;
      double z3 = draw_beta(rng, a, b);
      z(row, 0) = z1;
      z(row, 1) = z2;
      z(row, 2) = z3;
      s[row] = src;
    }
  }
  return Dataset(std::move(z), std::move(s), k);
}

Dataset generate_dataset(const Scenario& sc, std::uint64_t seed) { return generate_dataset(sc, seed, 0); }

TrueParameters true_parameters(const Scenario& sc) {
  TrueParameters t;
  t.psi = 1.0 / 6.0;
  t.beta[{3, 2}] = {-sc.epsilon, -sc.epsilon};
  t.beta[{3, 3}] = {-sc.epsilon};
  t.beta[{3, 4}] = {-sc.epsilon};
  return t;
}

FusionDesign simulation_design() {
  FusionDesign d;
  d.d = 3;
  d.k = 4;
  d.reference = 1;
  d.relevant = {IndexSets{1, {1, 2, 3, 4}, {}}, IndexSets{2, {1, 2, 3, 4}, {}}, IndexSets{3, {1}, {2, 3, 4}}};
  d.weights[{3, 2}] = make_tilt(3, {"z1*log(z3)", "z1*z2*log(z3)"});
  d.weights[{3, 3}] = make_tilt(3, {"z1*log1m(z3)"});
  d.weights[{3, 4}] = make_tilt(3, {"z1*z2*log(z3)"});
  return d;
}

EstimandSpec simulation_estimand() { return EstimandSpec{}; }

std::vector<SummaryRow> run_monte_carlo(const std::vector<Scenario>& grid, const MonteCarloOptions& opt,
                                        std::vector<std::vector<std::vector<ReplicationResult>>>* results) {
  if (opt.reps < 1) throw InvalidShape("reps must be at least 1");
  const FusionDesign design = simulation_design();
  const EstimandSpec est = simulation_estimand();
  std::vector<SummaryRow> rows;
  std::vector<std::vector<std::vector<ReplicationResult>>> all(grid.size());
  for (size_t g = 0; g < grid.size(); ++g) {
    const Scenario& sc = grid[g];
    const size_t V = sc.variants.size();
    std::vector<std::vector<ReplicationResult>> res(V, std::vector<ReplicationResult>(opt.reps));
    std::vector<std::vector<std::string>> names(V);
    EstimateOptions eo;
    eo.validate = false;
    eo.nuisance.grid_points = sc.grid_points;
    eo.nuisance.exec = Exec::serial;
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, opt.threads))
    for (int r = 0; r < opt.reps; ++r) {
      Dataset data;
      std::string gen_error;
      try {
        data = generate_dataset(sc, opt.master_seed, static_cast<std::uint64_t>(r));
      } catch (const std::exception& e) {
        gen_error = e.what();
      }
      for (size_t v = 0; v < V; ++v) {
        ReplicationResult& out = res[v][r];
        if (!gen_error.empty()) {
          out.error = gen_error;
          continue;
        }
        try {
          EstimateOptions o = eo;
          o.seed = opt.master_seed;
          EstimateReport rep = one_step_estimate(data, design, est, sc.variants[v], o);
          out.ok = std::isfinite(rep.estimate) && std::isfinite(rep.se);
          if (!out.ok) out.error = "non-finite estimate";
          out.estimate = rep.estimate;
          out.se = rep.se;
          out.ci_lo = rep.ci_lo;
          out.ci_hi = rep.ci_hi;
          out.beta.assign(rep.beta.data(), rep.beta.data() + rep.beta.size());
          out.beta_converged = rep.beta_converged;
          if (r == 0) names[v] = rep.beta_names;
        } catch (const std::exception& e) {
          out.error = e.what();
        }
      }
    }
    const double psi = true_parameters(sc).psi;
    for (size_t v = 0; v < V; ++v) {
      SummaryRow row;
      row.scenario = sc.alignment;
      row.shift = shift_name(sc.shift);
      row.variant = sc.variants[v].name();
      row.beta_names = names[v];
      std::vector<const ReplicationResult*> good;
      for (const auto& rr : res[v])
        if (rr.ok) good.push_back(&rr);
      row.reps = static_cast<int>(good.size());
      row.failed = opt.reps - row.reps;
      if (row.failed > 0.05 * opt.reps)
        throw Error("MonteCarloAborted", std::to_string(row.failed) + " of " + std::to_string(opt.reps) +
                                             " replications failed for " + row.scenario + "/" + row.variant +
                                             (res[v][0].error.empty() ? "" : ": " + res[v][0].error));
      if (good.empty()) continue;
      double mean = 0;
      int cover = 0;
      for (auto* p : good) {
        mean += p->estimate;
        cover += (p->ci_lo <= psi && psi <= p->ci_hi);
      }
      mean /= good.size();
      double var = 0;
      for (auto* p : good) var += (p->estimate - mean) * (p->estimate - mean);
      if (good.size() > 1) {
        var /= (good.size() - 1);
      } else {
        var = std::numeric_limits<double>::quiet_NaN();
        row.variance_defined = false;
      }
      row.bias2_e5 = (mean - psi) * (mean - psi) * 1e5;
      row.var_e5 = var * 1e5;
      row.coverage = static_cast<double>(cover) / good.size();
      const size_t nb = good[0]->beta.size();
      row.mean_beta.assign(nb, 0.0);
      row.mc_se_beta.assign(nb, 0.0);
      for (auto* p : good)
        for (size_t c = 0; c < nb; ++c) row.mean_beta[c] += p->beta[c] / good.size();
      if (good.size() > 1) {
        for (size_t c = 0; c < nb; ++c) {
          double ss = 0;
          for (auto* p : good) ss += (p->beta[c] - row.mean_beta[c]) * (p->beta[c] - row.mean_beta[c]);
          row.mc_se_beta[c] = std::sqrt(ss / (good.size() - 1) / good.size());
        }
      }
      rows.push_back(row);
    }
    all[g] = std::move(res);
  }
  if (results) *results = std::move(all);
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("NaN");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  out << "scenario,shift,variant,reps,failed,bias2_e5,var_e5,coverage,variance_defined,mean_beta\n";
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.shift << ',' << r.variant << ',' << r.reps << ',' << r.failed << ','
        << num(r.bias2_e5) << ',' << num(r.var_e5) << ',' << num(r.coverage) << ',' << (r.variance_defined ? 1 : 0)
        << ',';
    for (size_t c = 0; c < r.mean_beta.size(); ++c) {
      if (c) out << ';';
      out << (c < r.beta_names.size() ? r.beta_names[c] : "b" + std::to_string(c)) << '=' << num(r.mean_beta[c]);
    }
    out << '\n';
  }
}

}  // namespace fusion
