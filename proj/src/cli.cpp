#include "fusion/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fusion/config.hpp"
#include "fusion/csv.hpp"
#include "fusion/simulation.hpp"

namespace fusion {

namespace {

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error("UsageError", msg) {}
};

std::string fmt(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("IoError", "write to '" + path + "' failed");
}

void set_threads(int threads) {
  if (threads < 1) throw UsageError("--threads must be at least 1");
  omp_set_num_threads(threads);
}

void print_warnings(std::ostream& err, const Diagnostics& diag) {
  for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
}

struct LoadedRun {
  RunConfig cfg;
  CsvDataset csv;
};

LoadedRun load_run(const std::string& config_path, const std::string& data_path, std::ostream& err) {
  LoadedRun r;
  r.cfg = parse_config(config_path);
  r.csv = ingest_csv(data_path, r.cfg.data);
  err << "sources:";
  for (size_t i = 0; i < r.csv.source_labels.size(); ++i) err << ' ' << r.csv.source_labels[i] << "->" << i + 1;
  err << '\n';
  return r;
}

EstimateOptions options_for(const RunConfig& cfg, int threads) {
  EstimateOptions o;
  o.nuisance = cfg.nuisance;
  o.nuisance.exec = threads > 1 ? Exec::parallel : Exec::serial;
  o.level = cfg.level;
  o.seed = cfg.seed;
  return o;
}

EstimateReport run_estimate(const LoadedRun& r, const EstimatorVariant& variant, int threads) {
  EstimateReport rep = one_step_estimate(r.csv.data, r.cfg.design, r.cfg.estimand, variant, options_for(r.cfg, threads));
  rep.config_hash = config_hash(r.cfg);
  return rep;
}

std::vector<Scenario> scenario_grid(const std::string& scenario, const std::string& shift, int n,
                                    const std::vector<EstimatorVariant>& variants, int grid_points) {
  const std::vector<std::string> all_alignments = {"fully_aligned", "strongly_aligned", "moderately_aligned",
                                                   "poorly_aligned"};
  std::vector<std::string> alignments = scenario == "all" ? all_alignments : std::vector<std::string>{scenario};
  std::vector<Shift> shifts =
      shift == "all" ? std::vector<Shift>{Shift::none, Shift::beta_shift} : std::vector<Shift>{parse_shift(shift)};
  std::vector<Scenario> grid;
  for (Shift sh : shifts)
    for (const auto& a : alignments) {
      Scenario sc = make_scenario(a, sh, n, variants);
      sc.grid_points = grid_points;
      grid.push_back(sc);
    }
  return grid;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (auto* fe = dynamic_cast<const Error*>(&e)) {
    static const std::set<std::string> internal = {"NuisanceMissing", "AllSingular", "MonteCarloAborted", "IoError"};
    return internal.count(fe->kind()) ? 2 : 1;
  }
  return 2;
}

nlohmann::ordered_json report_json(const EstimateReport& rep, const std::vector<std::string>& source_labels) {
  nlohmann::ordered_json j;
  j["estimate"] = rep.estimate;
  j["se"] = rep.se;
  j["ci_lo"] = rep.ci_lo;
  j["ci_hi"] = rep.ci_hi;
  j["level"] = rep.level;
  j["beta"] = std::vector<double>(rep.beta.data(), rep.beta.data() + rep.beta.size());
  j["beta_se"] = std::vector<double>(rep.beta_se.data(), rep.beta_se.data() + rep.beta_se.size());
  j["variant"] = rep.variant;
  j["n_per_source"] = rep.n_per_source;
  j["clip_counts"] = {{"ratio", rep.diag.ratio_clips},
                      {"propensity", rep.diag.propensity_clips},
                      {"normalizer_floor", rep.diag.normalizer_floors},
                      {"empty_neighborhood", rep.diag.empty_neighborhoods}};
  j["seed"] = rep.seed;
  j["estimand"] = rep.estimand;
  j["plugin"] = rep.plugin;
  j["n"] = rep.n;
  j["source_labels"] = source_labels;
  j["beta_names"] = rep.beta_names;
  j["beta_init"] = std::vector<double>(rep.beta_init.data(), rep.beta_init.data() + rep.beta_init.size());
  j["beta_converged"] = rep.beta_converged;
  j["singular_information"] = rep.diag.singular_information;
  j["gradient_variances"] = {{"D_P", rep.variances.D_P},
                             {"D_A", rep.variances.D_A},
                             {"D_tilde", rep.variances.D_tilde},
                             {"D_eff", rep.variances.D_eff}};
  j["config_hash"] = rep.config_hash;
  j["warnings"] = rep.diag.warnings;
  return j;
}

std::vector<double> parse_delta_grid(const std::string& text) {
  double v[3];
  size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    size_t colon = text.find(':', start);
    if ((i < 2) != (colon != std::string::npos)) throw UsageError("delta grid must read lo:hi:step, got '" + text + "'");
    std::string part = text.substr(start, colon == std::string::npos ? std::string::npos : colon - start);
    try {
      size_t used = 0;
      v[i] = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("delta grid entry '" + part + "' is not a number");
    }
    start = colon + 1;
  }
  const double lo = v[0], hi = v[1], step = v[2];
  if (lo < 0) throw NegativeDelta("delta grid starts below zero");
  if (!(step > 0) || hi < lo) throw UsageError("delta grid needs step > 0 and hi >= lo");
  const long count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (count > 1000000) throw UsageError("delta grid has too many points");
  std::vector<double> out;
  for (long i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

std::vector<SensitivityRow> sensitivity_sweep(const EstimateReport& fused, const EstimateReport& target,
                                              const std::vector<double>& deltas) {
  auto [tlo, thi] = wald_interval(target, target.level);
  std::vector<SensitivityRow> rows;
  for (double d : deltas) {
    SensitivityRow r;
    r.delta = d;
    std::tie(r.ci_lo, r.ci_hi) = sensitivity_interval(fused, d);
    r.target_lo = tlo;
    r.target_hi = thi;
    rows.push_back(r);
  }
  return rows;
}

void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows) {
  out << "delta,ci_lo,ci_hi,width,target_lo,target_hi,target_width,wider_than_target\n";
  for (const auto& r : rows)
    out << fmt(r.delta) << ',' << fmt(r.ci_lo) << ',' << fmt(r.ci_hi) << ',' << fmt(r.width()) << ','
        << fmt(r.target_lo) << ',' << fmt(r.target_hi) << ',' << fmt(r.target_width()) << ','
        << (r.width() > r.target_width() ? 1 : 0) << '\n';
}

int run_command(int argc, const char* const* argv, std::ostream& err) {
  CLI::App app{"Data fusion estimators with aligned and weakly aligned sources"};
  app.require_subcommand(1);

  std::string scenario = "all", shift = "none", out, variants_text = "target_only,naive_fusion,efficient_fusion";
  int reps = 300, n = 2000, threads = 1, grid_points = 100;
  std::uint64_t seed = 1;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study on the built-in data-generating process");
  sim->add_option("--scenario", scenario, "fully_aligned | strongly_aligned | moderately_aligned | poorly_aligned | all");
  sim->add_option("--shift", shift, "none | beta_shift | all");
  sim->add_option("--reps", reps, "replications per scenario");
  sim->add_option("--n", n, "rows per source");
  sim->add_option("--seed", seed, "master seed");
  sim->add_option("--out", out, "summary CSV path")->required();
  sim->add_option("--threads", threads, "replications run concurrently");
  sim->add_option("--variants", variants_text, "comma separated estimator variants");
  sim->add_option("--grid-points", grid_points, "nuisance evaluation grid size (0 = exact)");

  std::string config, data;
  auto* est = app.add_subcommand("estimate", "One-step estimate from a config and a CSV");
  est->add_option("--config", config, "config JSON")->required();
  est->add_option("--data", data, "data CSV")->required();
  est->add_option("--out", out, "report JSON path (defaults to output.report)");
  est->add_option("--threads", threads, "OpenMP threads");

  std::string delta_grid = "0:0.02:0.002";
  auto* sens = app.add_subcommand("sensitivity", "Delta-band intervals for the ate");
  sens->add_option("--config", config, "config JSON")->required();
  sens->add_option("--data", data, "data CSV")->required();
  sens->add_option("--delta-grid", delta_grid, "lo:hi:step");
  sens->add_option("--out", out, "interval CSV path (defaults to output.sensitivity)");
  sens->add_option("--threads", threads, "OpenMP threads");

  auto* dump = app.add_subcommand("config-dump", "Write the canonical form of a config");
  dump->add_option("--config", config, "config JSON (default: the simulation design)");
  dump->add_option("--out", out, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    int code = app.exit(e, o, e2);
    err << o.str() << e2.str();
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      set_threads(threads);
      std::vector<EstimatorVariant> variants;
      std::stringstream ss(variants_text);
      std::string v;
      while (std::getline(ss, v, ','))
        if (!v.empty()) variants.push_back(EstimatorVariant::parse(v));
      if (variants.empty()) throw UsageError("--variants is empty");
      if (grid_points < 0 || grid_points == 1) throw UsageError("--grid-points must be 0 or at least 2");
      std::vector<Scenario> grid = scenario_grid(scenario, shift, n, variants, grid_points);
      MonteCarloOptions mc;
      mc.reps = reps;
      mc.master_seed = seed;
      mc.threads = threads;
      err << "simulate: " << grid.size() << " scenario(s) x " << variants.size() << " variant(s) x " << reps
          << " reps\n";
      std::vector<SummaryRow> rows = run_monte_carlo(grid, mc);
      std::ostringstream csv;
      write_summary_csv(csv, rows);
      write_file(out, csv.str());
      for (const auto& r : rows)
        if (r.failed > 0) err << "warning: " << r.failed << " failed replications in " << r.scenario << "/" << r.variant << '\n';
    } else if (est->parsed()) {
      set_threads(threads);
      LoadedRun r = load_run(config, data, err);
      if (out.empty()) out = r.cfg.output.report;
      if (out.empty()) throw UsageError("no --out given and the config has no output.report");
      EstimateReport rep = run_estimate(r, r.cfg.variant, threads);
      print_warnings(err, rep.diag);
      write_file(out, report_json(rep, r.csv.source_labels).dump(2) + "\n");
      err << "estimate " << fmt(rep.estimate) << " (se " << fmt(rep.se) << ")\n";
    } else if (sens->parsed()) {
      set_threads(threads);
      std::vector<double> deltas = parse_delta_grid(delta_grid);
      LoadedRun r = load_run(config, data, err);
      if (r.cfg.estimand.kind != EstimandSpec::Kind::ate)
        throw UsageError("sensitivity intervals are defined for the ate only");
      if (out.empty()) out = r.cfg.output.sensitivity;
      if (out.empty()) throw UsageError("no --out given and the config has no output.sensitivity");
      EstimateReport fused = run_estimate(r, r.cfg.variant, threads);
      print_warnings(err, fused.diag);
      EstimateReport target = run_estimate(r, EstimatorVariant{EstimatorVariant::Tag::target_only, 0}, threads);
      print_warnings(err, target.diag);
      std::ostringstream csv;
      write_sensitivity_csv(csv, sensitivity_sweep(fused, target, deltas));
      write_file(out, csv.str());
    } else if (dump->parsed()) {
      RunConfig cfg = config.empty() ? default_simulation_config() : parse_config(config);
      write_file(out, dump_config(cfg));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace fusion
