#include "fusion/estimand.hpp"

#include <algorithm>
#include <map>

#include "fusion/error.hpp"

namespace fusion {

const char* estimand_name(EstimandSpec::Kind k) {
  switch (k) {
    case EstimandSpec::Kind::ate: return "ate";
    case EstimandSpec::Kind::working_linear: return "working_linear";
    case EstimandSpec::Kind::mean: return "mean";
    case EstimandSpec::Kind::variance: return "variance";
  }
  return "?";
}

EstimandSpec::Kind parse_estimand_kind(const std::string& s) {
  if (s == "ate") return EstimandSpec::Kind::ate;
  if (s == "working_linear") return EstimandSpec::Kind::working_linear;
  if (s == "mean") return EstimandSpec::Kind::mean;
  if (s == "variance") return EstimandSpec::Kind::variance;
  throw ParseError("unknown estimand kind '" + s + "'");
}

EstimandView make_view(const EstimandSpec& est, const FusionDesign& design) {
  EstimandView v;
  switch (est.kind) {
    case EstimandSpec::Kind::ate:
      v.columns = {est.covariate, est.treatment, est.outcome};
      break;
    case EstimandSpec::Kind::working_linear:
      if (est.coefficient != 0 && est.coefficient != 1)
        throw InvalidShape("working_linear coefficient must be 0 (intercept) or 1 (slope)");
      v.columns = {est.covariate, est.outcome};
      break;
    case EstimandSpec::Kind::mean:
    case EstimandSpec::Kind::variance:
      v.columns = {est.outcome};
      break;
  }
  for (size_t i = 0; i < v.columns.size(); ++i) {
    if (v.columns[i] < 1 || v.columns[i] > design.d)
      throw InvalidShape("estimand column z" + std::to_string(v.columns[i]) + " outside 1..d");
    if (i > 0 && v.columns[i] <= v.columns[i - 1])
      throw InvalidShape("estimand columns must be increasing (covariate before treatment before outcome)");
  }
  std::map<int, int> to_view;
  for (size_t i = 0; i < v.columns.size(); ++i) to_view[v.columns[i]] = static_cast<int>(i) + 1;

  FusionDesign& out = v.design;
  out.d = static_cast<int>(v.columns.size());
  out.k = design.k;
  out.reference = design.reference;
  for (const auto& r : design.relevant) {
    auto it = to_view.find(r.j);
    if (it == to_view.end()) continue;
    IndexSets nr = r;
    nr.j = it->second;
    out.relevant.push_back(nr);
  }
  for (const auto& [key, spec] : design.weights) {
    auto it = to_view.find(key.first);
    if (it == to_view.end()) continue;
    WeightSpec ns = spec;
    ns.j = it->second;
    for (auto& term : ns.basis) {
      term.j = ns.j;
      for (auto& [c, p] : term.monomial) {
        auto ic = to_view.find(c);
        if (ic == to_view.end())
          throw StructuralError("weight term " + term.str() + " uses z" + std::to_string(c) +
                                ", which the estimand does not use");
        c = ic->second;
      }
      std::sort(term.monomial.begin(), term.monomial.end());
    }
    out.weights[{ns.j, key.second}] = ns;
  }
  out.normalize();

  std::vector<int> needed;
  if (est.kind == EstimandSpec::Kind::ate)
    needed = {1, 3};
  else if (est.kind == EstimandSpec::Kind::working_linear)
    needed = {1, 2};
  else
    needed = {1};
  for (int j : needed)
    if (!out.find(j))
      throw StructuralError(std::string(estimand_name(est.kind)) + " needs z" + std::to_string(v.columns[j - 1]) +
                            " to be a relevant index");
  return v;
}

}  // namespace fusion
