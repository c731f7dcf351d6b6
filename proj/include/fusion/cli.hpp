#pragma once

#include <exception>
#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "fusion/estimator.hpp"

namespace fusion {

// Exit codes: 0 success, 1 user error (bad input, config or data), 2 internal error.
int run_command(int argc, const char* const* argv, std::ostream& err);
int exit_code_for(const std::exception& e);

nlohmann::ordered_json report_json(const EstimateReport& rep, const std::vector<std::string>& source_labels);

// "lo:hi:step", inclusive of hi up to rounding.
std::vector<double> parse_delta_grid(const std::string& text);

struct SensitivityRow {
  double delta = 0;
  double ci_lo = 0, ci_hi = 0;
  double target_lo = 0, target_hi = 0;
  double width() const { return ci_hi - ci_lo; }
  double target_width() const { return target_hi - target_lo; }
};

// The fused interval is widened by delta; the target-only interval needs no
// transport assumption and is held fixed.
std::vector<SensitivityRow> sensitivity_sweep(const EstimateReport& fused, const EstimateReport& target,
                                              const std::vector<double>& deltas);
void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows);

}  // namespace fusion
