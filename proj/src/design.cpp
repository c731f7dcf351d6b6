#include "fusion/design.hpp"

#include <algorithm>
#include <set>

#include "fusion/error.hpp"
#include "fusion/logistic.hpp"

namespace fusion {

std::vector<int> IndexSets::support() const {
  std::vector<int> s = aligned;
  s.insert(s.end(), weak.begin(), weak.end());
  std::sort(s.begin(), s.end());
  return s;
}

const IndexSets* FusionDesign::find(int j) const {
  for (const auto& r : relevant)
    if (r.j == j) return &r;
  return nullptr;
}

std::vector<int> FusionDesign::relevant_indices() const {
  std::vector<int> out;
  for (const auto& r : relevant) out.push_back(r.j);
  return out;
}

std::vector<int> FusionDesign::irrelevant_indices() const {
  std::vector<int> out;
  for (int j = 1; j <= d; ++j)
    if (!find(j)) out.push_back(j);
  return out;
}

bool FusionDesign::has_weak() const {
  for (const auto& r : relevant)
    if (!r.weak.empty()) return true;
  return false;
}

void FusionDesign::normalize() {
  for (auto& r : relevant) {
    std::sort(r.aligned.begin(), r.aligned.end());
    std::sort(r.weak.begin(), r.weak.end());
  }
  std::sort(relevant.begin(), relevant.end(), [](const IndexSets& a, const IndexSets& b) { return a.j < b.j; });
}

void check_design_structure(const FusionDesign& design) {
  if (design.d < 1 || design.k < 1) throw StructuralError("design needs d >= 1 and k >= 1");
  if (design.relevant.empty()) throw StructuralError("design has no relevant indices");
  std::set<int> seen;
  for (const auto& r : design.relevant) {
    const std::string at = " at index " + std::to_string(r.j);
    if (r.j < 1 || r.j > design.d) throw StructuralError("relevant index " + std::to_string(r.j) + " outside 1..d");
    if (!seen.insert(r.j).second) throw StructuralError("index " + std::to_string(r.j) + " listed twice");
    if (r.aligned.empty()) throw StructuralError("aligned set is empty" + at);
    std::set<int> a(r.aligned.begin(), r.aligned.end());
    if (a.size() != r.aligned.size()) throw StructuralError("duplicate aligned source" + at);
    for (int s : r.aligned)
      if (s < 1 || s > design.k) throw StructuralError("unknown source " + std::to_string(s) + at);
    std::set<int> w;
    for (int s : r.weak) {
      if (s < 1 || s > design.k) throw StructuralError("unknown source " + std::to_string(s) + at);
      if (a.count(s)) throw StructuralError("source " + std::to_string(s) + " is both aligned and weak" + at);
      if (!w.insert(s).second) throw StructuralError("duplicate weak source" + at);
      auto it = design.weights.find({r.j, s});
      if (it == design.weights.end())
        throw StructuralError("missing weight spec for source " + std::to_string(s) + at);
      if (it->second.j != r.j) throw StructuralError("weight spec index mismatch" + at);
      check_weight_spec(it->second);
    }
  }
  for (const auto& [key, spec] : design.weights) {
    const IndexSets* r = design.find(key.first);
    if (!r || std::find(r->weak.begin(), r->weak.end(), key.second) == r->weak.end())
      throw StructuralError("weight spec for (" + std::to_string(key.first) + ", " + std::to_string(key.second) +
                            ") does not belong to a weak set");
  }
  if (design.reference < 1 || design.reference > design.k) throw StructuralError("reference source outside 1..k");
}

ValidationReport validate_design(const FusionDesign& design, const Dataset& data, double ratio_min,
                                 double ratio_max) {
  check_design_structure(design);
  if (design.k != data.k())
    throw StructuralError("design has k = " + std::to_string(design.k) + " but data has k = " + std::to_string(data.k()));
  if (design.d != data.d())
    throw StructuralError("design has d = " + std::to_string(design.d) + " but data has d = " + std::to_string(data.d()));
  ValidationReport rep;
  std::vector<int> counts = data.counts();
  for (const auto& r : design.relevant) {
    ValidationReport::IndexCounts ic;
    ic.j = r.j;
    for (int s : r.aligned) ic.aligned_rows.emplace_back(s, counts[s - 1]);
    for (int s : r.weak) ic.weak_rows.emplace_back(s, counts[s - 1]);
    for (int s : r.support())
      if (counts[s - 1] == 0)
        throw StructuralError("source " + std::to_string(s) + " referenced at index " + std::to_string(r.j) +
                              " has no rows");
    rep.indices.push_back(ic);
  }
  for (const auto& r : design.relevant) {
    if (r.j == 1) continue;
    for (int s : r.support()) {
      Diagnostics diag;
      MembershipRatio ratio = MembershipRatio::fit(data, {s}, r.aligned, r.j - 1, true, &diag);
      OverlapEntry e;
      e.j = r.j;
      e.s = s;
      e.ratio_min = 1e300;
      e.ratio_max = 0;
      long clipped = 0;
      std::vector<int> rows = data.rows_in({s});
      for (int i : rows) {
        double v = ratio(data.row(i));
        e.ratio_min = std::min(e.ratio_min, v);
        e.ratio_max = std::max(e.ratio_max, v);
        if (v < ratio_min || v > ratio_max) ++clipped;
      }
      e.fraction_clipped = rows.empty() ? 0.0 : static_cast<double>(clipped) / rows.size();
      if (clipped > 0)
        rep.warnings.push_back("index " + std::to_string(r.j) + ", source " + std::to_string(s) + ": " +
                               std::to_string(clipped) + " rows with density ratio outside the overlap bounds");
      for (const auto& w : diag.warnings) rep.warnings.push_back(w);
      rep.overlap.push_back(e);
    }
  }
  return rep;
}

const BetaBlock& BetaParam::block(int j, int s) const {
  for (const auto& b : layout)
    if (b.j == j && b.s == s) return b;
  throw KeyError("no beta block for (j=" + std::to_string(j) + ", s=" + std::to_string(s) + ")");
}

bool BetaParam::contains(int j, int s) const {
  for (const auto& b : layout)
    if (b.j == j && b.s == s) return true;
  return false;
}

Eigen::VectorXd BetaParam::slice(int j, int s) const {
  const BetaBlock& b = block(j, s);
  return values.segment(b.offset, b.len);
}

void BetaParam::set_slice(int j, int s, const Eigen::VectorXd& v) {
  const BetaBlock& b = block(j, s);
  if (v.size() != b.len) throw InvalidShape("beta slice has wrong length");
  values.segment(b.offset, b.len) = v;
}

std::string BetaParam::coordinate_name(int c, const FusionDesign& design) const {
  for (const auto& b : layout) {
    if (c >= b.offset && c < b.offset + b.len) {
      const auto& spec = design.weights.at({b.j, b.s});
      return "j" + std::to_string(b.j) + ".s" + std::to_string(b.s) + "." + spec.basis[c - b.offset].str();
    }
  }
  throw KeyError("beta coordinate out of range");
}

std::vector<BetaBlock> beta_layout(const FusionDesign& design) {
  std::vector<BetaBlock> out;
  int off = 0;
  for (const auto& [key, spec] : design.weights) {
    if (spec.dim() == 0) continue;
    out.push_back({key.first, key.second, spec.dim(), off});
    off += spec.dim();
  }
  return out;
}

BetaParam zero_beta(const FusionDesign& design) {
  BetaParam b;
  b.layout = beta_layout(design);
  int t = 0;
  for (const auto& blk : b.layout) t += blk.len;
  b.values = Eigen::VectorXd::Zero(t);
  return b;
}

BetaParam assemble_beta(const std::vector<BetaBlock>& layout, const std::vector<Eigen::VectorXd>& slices) {
  if (layout.size() != slices.size()) throw InvalidShape("one slice per layout block required");
  BetaParam b;
  b.layout = layout;
  int t = 0;
  for (size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].offset != t || slices[i].size() != layout[i].len) throw InvalidShape("slices do not match layout");
    t += layout[i].len;
  }
  b.values.resize(t);
  for (size_t i = 0; i < layout.size(); ++i) b.values.segment(layout[i].offset, layout[i].len) = slices[i];
  return b;
}

Eigen::VectorXd beta_slice(const BetaParam& beta, int j, int s) { return beta.slice(j, s); }

}  // namespace fusion
