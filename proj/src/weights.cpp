#include "fusion/weights.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>

#include "fusion/error.hpp"

namespace fusion {

double BasisTerm::mono(const double* zbar) const {
  double v = 1.0;
  for (const auto& [c, p] : monomial) {
    double x = zbar[c - 1];
    v *= (p == 2) ? x * x : x;
  }
  return v;
}

double BasisTerm::terminal(double zj) const {
  switch (g) {
    case Transform::identity: return zj;
    case Transform::square: return zj * zj;
    case Transform::log:
      if (!(zj > 0)) throw DomainError("log(z" + std::to_string(j) + ") at " + std::to_string(zj));
      return std::log(zj);
    case Transform::log1m:
      if (!(zj < 1)) throw DomainError("log1m(z" + std::to_string(j) + ") at " + std::to_string(zj));
      return std::log1p(-zj);
  }
  return 0.0;
}

std::string BasisTerm::str() const {
  std::string out;
  for (const auto& [c, p] : monomial) {
    out += "z" + std::to_string(c) + (p == 2 ? "^2" : "") + "*";
  }
  std::string zj = "z" + std::to_string(j);
  switch (g) {
    case Transform::identity: out += zj; break;
    case Transform::square: out += zj + "^2"; break;
    case Transform::log: out += "log(" + zj + ")"; break;
    case Transform::log1m: out += "log1m(" + zj + ")"; break;
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

BasisTerm parse_basis_term(const std::string& text, int j) {
  static const std::regex power(R"(z([0-9]+)(\^([0-9]+))?)");
  static const std::regex fn(R"((log|log1m)\(\s*z([0-9]+)\s*\))");
  BasisTerm t;
  t.j = j;
  std::map<int, int> powers;
  int terminal_power = 0;
  int transforms = 0;
  size_t start = 0;
  const std::string bad = "bad basis term '" + text + "'";
  while (true) {
    size_t star = text.find('*', start);
    std::string f = trim(text.substr(start, star == std::string::npos ? std::string::npos : star - start));
    std::smatch m;
    if (std::regex_match(f, m, power)) {
      int c = std::stoi(m[1]);
      int p = m[3].matched ? std::stoi(m[3]) : 1;
      if (p < 1 || p > 2) throw ParseError(bad + ": exponents beyond 2 unsupported");
      if (c < 1 || c > j) throw ParseError(bad + ": z" + std::to_string(c) + " not allowed for index " + std::to_string(j));
      if (c == j)
        terminal_power += p;
      else
        powers[c] += p;
    } else if (std::regex_match(f, m, fn)) {
      int c = std::stoi(m[2]);
      if (c != j) throw ParseError(bad + ": transforms apply to z" + std::to_string(j) + " only");
      t.g = m[1] == "log" ? Transform::log : Transform::log1m;
      ++transforms;
    } else {
      throw ParseError(bad + ": cannot read factor '" + f + "'");
    }
    if (star == std::string::npos) break;
    start = star + 1;
  }
  if (transforms + (terminal_power > 0 ? 1 : 0) != 1)
    throw ParseError(bad + ": exactly one factor must involve z" + std::to_string(j));
  if (terminal_power > 2) throw ParseError(bad + ": exponents beyond 2 unsupported");
  if (terminal_power == 1) t.g = Transform::identity;
  if (terminal_power == 2) t.g = Transform::square;
  for (const auto& [c, p] : powers) {
    if (p > 2) throw ParseError(bad + ": exponents beyond 2 unsupported");
    t.monomial.emplace_back(c, p);
  }
  return t;
}

WeightSpec make_tilt(int j, const std::vector<std::string>& terms) {
  WeightSpec w;
  w.family = WeightFamily::exponential_tilt;
  w.j = j;
  for (const auto& s : terms) w.basis.push_back(parse_basis_term(s, j));
  check_weight_spec(w);
  return w;
}

WeightSpec make_truncation(int j, double threshold) {
  WeightSpec w;
  w.family = WeightFamily::truncation;
  w.j = j;
  w.threshold = threshold;
  return w;
}

void check_weight_spec(const WeightSpec& spec) {
  if (spec.family != WeightFamily::exponential_tilt) return;
  if (spec.basis.empty()) throw StructuralError("exponential tilt for index " + std::to_string(spec.j) + " has no basis terms");
  for (size_t a = 0; a < spec.basis.size(); ++a) {
    if (spec.basis[a].j != spec.j) throw StructuralError("basis term " + spec.basis[a].str() + " has wrong index");
    for (size_t b = a + 1; b < spec.basis.size(); ++b)
      if (spec.basis[a] == spec.basis[b]) throw StructuralError("duplicate basis term " + spec.basis[a].str());
  }
}

double eval_weight(const WeightSpec& spec, const Eigen::VectorXd& beta_js, const double* zbar_j) {
  if (spec.family == WeightFamily::truncation) {
    if (beta_js.size() != 1) throw InvalidShape("truncation weight takes a scalar threshold");
    return zbar_j[spec.j - 1] >= beta_js[0] ? 1.0 : 0.0;
  }
  if (beta_js.size() != static_cast<long>(spec.basis.size()))
    throw InvalidShape("beta has " + std::to_string(beta_js.size()) + " entries, basis has " +
                       std::to_string(spec.basis.size()));
  double e = 0.0;
  for (size_t m = 0; m < spec.basis.size(); ++m) e += beta_js[m] * spec.basis[m].eval(zbar_j);
  return std::exp(e);
}

Eigen::VectorXd eval_weight_logderiv(const WeightSpec& spec, const Eigen::VectorXd& beta_js, const double* zbar_j) {
  if (spec.family != WeightFamily::exponential_tilt)
    throw UnsupportedFamily("truncation weights have no score in the threshold");
  if (beta_js.size() != static_cast<long>(spec.basis.size())) throw InvalidShape("beta length does not match basis");
  Eigen::VectorXd t(spec.basis.size());
  for (size_t m = 0; m < spec.basis.size(); ++m) t[m] = spec.basis[m].eval(zbar_j);
  return t;
}

const char* family_name(WeightFamily f) {
  return f == WeightFamily::exponential_tilt ? "exponential_tilt" : "truncated_above_threshold";
}

WeightFamily parse_family(const std::string& s) {
  if (s == "exponential_tilt") return WeightFamily::exponential_tilt;
  if (s == "truncated_above_threshold" || s == "truncation") return WeightFamily::truncation;
  throw ParseError("unknown weight family '" + s + "'");
}

std::vector<BasisTerm> complex_family_index3() {
  std::vector<BasisTerm> out;
  for (const char* s : {"log(z3)", "z1*log(z3)", "z2*log(z3)", "z1*z2*log(z3)", "log1m(z3)", "z1*log1m(z3)",
                        "z2*log1m(z3)", "z1*z2*log1m(z3)"})
    out.push_back(parse_basis_term(s, 3));
  return out;
}

WeightSpec append_redundant_terms(const WeightSpec& spec, int extra) {
  if (extra <= 0) return spec;
  if (spec.family != WeightFamily::exponential_tilt || spec.j != 3)
    throw UnsupportedFamily("redundant terms are defined for index-3 exponential tilts");
  WeightSpec out = spec;
  int added = 0;
  for (const auto& t : complex_family_index3()) {
    if (added == extra) break;
    if (std::find(out.basis.begin(), out.basis.end(), t) != out.basis.end()) continue;
    out.basis.push_back(t);
    ++added;
  }
  if (added < extra) throw StructuralError("not enough redundant terms available");
  return out;
}

}  // namespace fusion
