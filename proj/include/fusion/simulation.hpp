#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/design.hpp"
#include "fusion/estimator.hpp"

namespace fusion {

enum class Shift { none, beta_shift };

struct Scenario {
  std::string alignment = "fully_aligned";  // fully / strongly / moderately / poorly aligned
  double epsilon = 0.0;
  Shift shift = Shift::none;
  int n_per_source = 2000;
  std::vector<EstimatorVariant> variants;
  int grid_points = 100;  // nuisance evaluation grid used by the runner

  // Stable index (alignment level, shift) used in the seed schedule.
  int index() const;
};

double alignment_epsilon(const std::string& alignment);
Shift parse_shift(const std::string& s);
const char* shift_name(Shift s);
Scenario make_scenario(const std::string& alignment, Shift shift, int n_per_source,
                       std::vector<EstimatorVariant> variants = {});

// Sub-seeds (master, scenario index, replication, source).
Dataset generate_dataset(const Scenario& sc, std::uint64_t master_seed, std::uint64_t rep);
Dataset generate_dataset(const Scenario& sc, std::uint64_t seed);

struct TrueParameters {
  double psi = 1.0 / 6.0;
  std::map<std::pair<int, int>, std::vector<double>> beta;  // keyed by (j, s)
};
TrueParameters true_parameters(const Scenario& sc);

// Efficient fusion design for the simulated sources with parsimonious
// outcome weights: A_1 = A_2 = {1..4}, A_3 = {1}, W_3 = {2, 3, 4}.
FusionDesign simulation_design();
EstimandSpec simulation_estimand();

struct ReplicationResult {
  bool ok = false;
  std::string error;
  double estimate = 0, se = 0, ci_lo = 0, ci_hi = 0;
  std::vector<double> beta;
  bool beta_converged = true;
};

struct SummaryRow {
  std::string scenario;
  std::string shift;
  std::string variant;
  int reps = 0;
  int failed = 0;
  double bias2_e5 = 0, var_e5 = 0, coverage = 0;
  bool variance_defined = true;
  std::vector<std::string> beta_names;
  std::vector<double> mean_beta, mc_se_beta;
};

struct MonteCarloOptions {
  int reps = 300;
  std::uint64_t master_seed = 1;
  int threads = 1;
};

// results, if given, receives [scenario][variant][rep].
std::vector<SummaryRow> run_monte_carlo(const std::vector<Scenario>& grid, const MonteCarloOptions& opt,
                                        std::vector<std::vector<std::vector<ReplicationResult>>>* results = nullptr);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

}  // namespace fusion
