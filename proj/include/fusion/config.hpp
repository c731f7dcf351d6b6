#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "fusion/design.hpp"
#include "fusion/estimand.hpp"
#include "fusion/estimator.hpp"
#include "fusion/nuisance.hpp"

namespace fusion {

// How CSV columns map onto (z_1..z_d, S).
struct DataMapping {
  std::vector<std::string> columns;         // header names for z_1..z_d; empty means "z1".."zd"
  std::string source = "source";
  std::vector<std::string> source_labels;   // label of source 1..k; empty means sorted distinct labels

  bool operator==(const DataMapping&) const = default;
};

struct OutputPaths {
  std::string report;
  std::string sensitivity;

  bool operator==(const OutputPaths&) const = default;
};

struct RunConfig {
  FusionDesign design;
  EstimandSpec estimand;
  EstimatorVariant variant;
  NuisanceOptions nuisance;
  double level = 0.95;
  std::uint64_t seed = 0;
  DataMapping data;
  OutputPaths output;

  bool operator==(const RunConfig&) const = default;
};

// Parsing rejects unknown keys (ParseError naming the key path) and runs the
// structural design checks (StructuralError).
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);

nlohmann::ordered_json config_to_json(const RunConfig& cfg);
std::string dump_config(const RunConfig& cfg);  // canonical text, re-parses to an equal config
std::string config_hash(const RunConfig& cfg);  // FNV-1a of the canonical text, hex

// The simulation design with the default estimand and variant.
RunConfig default_simulation_config();

}  // namespace fusion
