#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fusion/dataset.hpp"
#include "fusion/weights.hpp"

namespace fusion {

struct IndexSets {
  int j = 0;
  std::vector<int> aligned;  // A_j, sorted
  std::vector<int> weak;     // W_j, sorted
  std::vector<int> support() const;  // S_j = A_j u W_j, sorted
  bool operator==(const IndexSets&) const = default;
};

struct FusionDesign {
  int d = 0;
  int k = 0;
  int reference = 1;
  std::vector<IndexSets> relevant;                    // ascending in j
  std::map<std::pair<int, int>, WeightSpec> weights;  // keyed by (j, s)

  const IndexSets* find(int j) const;
  std::vector<int> relevant_indices() const;
  std::vector<int> irrelevant_indices() const;
  bool has_weak() const;
  void normalize();  // sorts sets and indices
  bool operator==(const FusionDesign&) const = default;
};

// Structural checks only (Condition 1); throws StructuralError.
void check_design_structure(const FusionDesign& design);

struct OverlapEntry {
  int j = 0;
  int s = 0;
  double ratio_min = 0, ratio_max = 0;
  double fraction_clipped = 0;
};

struct ValidationReport {
  struct IndexCounts {
    int j = 0;
    std::vector<std::pair<int, int>> aligned_rows;  // (source, rows)
    std::vector<std::pair<int, int>> weak_rows;
  };
  std::vector<IndexCounts> indices;
  std::vector<OverlapEntry> overlap;
  std::vector<std::string> warnings;
};

// Structural checks against data plus density-ratio overlap diagnostics.
ValidationReport validate_design(const FusionDesign& design, const Dataset& data, double ratio_min = 1e-3,
                                 double ratio_max = 1e3);

struct BetaBlock {
  int j = 0, s = 0, len = 0, offset = 0;
};

struct BetaParam {
  Eigen::VectorXd values;
  std::vector<BetaBlock> layout;

  int size() const { return static_cast<int>(values.size()); }
  const BetaBlock& block(int j, int s) const;  // KeyError
  bool contains(int j, int s) const;
  Eigen::VectorXd slice(int j, int s) const;
  void set_slice(int j, int s, const Eigen::VectorXd& v);
  std::string coordinate_name(int c, const FusionDesign& design) const;
};

// Layout over estimated (exponential tilt) weights in (j, s) order.
std::vector<BetaBlock> beta_layout(const FusionDesign& design);
BetaParam zero_beta(const FusionDesign& design);
BetaParam assemble_beta(const std::vector<BetaBlock>& layout, const std::vector<Eigen::VectorXd>& slices);
Eigen::VectorXd beta_slice(const BetaParam& beta, int j, int s);

}  // namespace fusion
