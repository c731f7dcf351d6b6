#include "fusion/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fusion/simulation.hpp"

namespace fusion {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ParseError("'" + path + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key)) throw ParseError("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

std::string at(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json* field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& required(const json& obj, const std::string& path, const std::string& key) {
  const json* v = field(obj, key);
  if (!v) throw ParseError("missing key '" + at(path, key) + "'");
  return *v;
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ParseError("'" + where + "' must be an integer");
  return v.get<int>();
}

double as_double(const json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError("'" + where + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ParseError("'" + where + "' must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ParseError("'" + where + "' must be a string");
  return v.get<std::string>();
}

std::vector<int> as_int_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError("'" + where + "' must be an array of integers");
  std::vector<int> out;
  for (size_t i = 0; i < v.size(); ++i) out.push_back(as_int(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::string> as_string_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError("'" + where + "' must be an array of strings");
  std::vector<std::string> out;
  for (size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

FusionDesign parse_design(const json& v) {
  const std::string p = "design";
  check_keys(v, p, {"d", "k", "reference", "relevant", "weights"});
  FusionDesign d;
  d.d = as_int(required(v, p, "d"), "design.d");
  d.k = as_int(required(v, p, "k"), "design.k");
  if (const json* r = field(v, "reference")) d.reference = as_int(*r, "design.reference");
  const json& rel = required(v, p, "relevant");
  if (!rel.is_array()) throw ParseError("'design.relevant' must be an array");
  for (size_t i = 0; i < rel.size(); ++i) {
    const std::string q = "design.relevant[" + std::to_string(i) + "]";
    check_keys(rel[i], q, {"j", "aligned", "weak"});
    IndexSets s;
    s.j = as_int(required(rel[i], q, "j"), q + ".j");
    s.aligned = as_int_list(required(rel[i], q, "aligned"), q + ".aligned");
    if (const json* w = field(rel[i], "weak")) s.weak = as_int_list(*w, q + ".weak");
    d.relevant.push_back(std::move(s));
  }
  if (const json* ws = field(v, "weights")) {
    if (!ws->is_array()) throw ParseError("'design.weights' must be an array");
    for (size_t i = 0; i < ws->size(); ++i) {
      const json& w = (*ws)[i];
      const std::string q = "design.weights[" + std::to_string(i) + "]";
      check_keys(w, q, {"j", "source", "family", "terms", "threshold"});
      int j = as_int(required(w, q, "j"), q + ".j");
      int s = as_int(required(w, q, "source"), q + ".source");
      WeightFamily fam = WeightFamily::exponential_tilt;
      if (const json* f = field(w, "family")) fam = parse_family(as_string(*f, q + ".family"));
      WeightSpec spec;
      if (fam == WeightFamily::exponential_tilt) {
        if (field(w, "threshold")) throw ParseError("'" + q + ".threshold' applies to truncation weights only");
        std::vector<std::string> terms = as_string_list(required(w, q, "terms"), q + ".terms");
        try {
          spec = make_tilt(j, terms);
        } catch (const Error& e) {
          throw ParseError(q + ": " + e.what());
        }
      } else {
        if (field(w, "terms")) throw ParseError("'" + q + ".terms' applies to exponential_tilt weights only");
        spec = make_truncation(j, as_double(required(w, q, "threshold"), q + ".threshold"));
      }
      if (!d.weights.emplace(std::make_pair(j, s), spec).second)
        throw ParseError(q + ": duplicate weight spec for (" + std::to_string(j) + ", " + std::to_string(s) + ")");
    }
  }
  d.normalize();
  return d;
}

EstimandSpec parse_estimand(const json& v) {
  const std::string p = "estimand";
  check_keys(v, p, {"kind", "covariate", "treatment", "outcome", "coefficient"});
  EstimandSpec e;
  if (const json* k = field(v, "kind")) e.kind = parse_estimand_kind(as_string(*k, "estimand.kind"));
  if (const json* c = field(v, "covariate")) e.covariate = as_int(*c, "estimand.covariate");
  if (const json* t = field(v, "treatment")) e.treatment = as_int(*t, "estimand.treatment");
  if (const json* o = field(v, "outcome")) e.outcome = as_int(*o, "estimand.outcome");
  if (const json* c = field(v, "coefficient")) e.coefficient = as_int(*c, "estimand.coefficient");
  return e;
}

BandwidthRule parse_bandwidth(const json& v) {
  const std::string p = "nuisance.bandwidth";
  if (v.is_string()) {
    if (v.get<std::string>() == "silverman") return BandwidthRule::silverman();
    throw ParseError("'" + p + "' must be \"silverman\" or an object with a rule");
  }
  check_keys(v, p, {"rule", "h", "grid"});
  std::string rule = as_string(required(v, p, "rule"), p + ".rule");
  if (rule == "silverman") {
    if (field(v, "h") || field(v, "grid")) throw ParseError("'" + p + "': silverman takes no parameters");
    return BandwidthRule::silverman();
  }
  if (rule == "fixed") {
    if (field(v, "grid")) throw ParseError("'" + p + ".grid' applies to cv_loo only");
    double h = as_double(required(v, p, "h"), p + ".h");
    if (!(h > 0)) throw ParseError("'" + p + ".h' must be positive");
    return BandwidthRule::fixed(h);
  }
  if (rule == "cv_loo") {
    if (field(v, "h")) throw ParseError("'" + p + ".h' applies to fixed only");
    const json& g = required(v, p, "grid");
    if (!g.is_array() || g.empty()) throw ParseError("'" + p + ".grid' must be a non-empty array");
    std::vector<double> grid;
    for (size_t i = 0; i < g.size(); ++i) {
      double m = as_double(g[i], p + ".grid[" + std::to_string(i) + "]");
      if (!(m > 0)) throw ParseError("'" + p + ".grid' multipliers must be positive");
      grid.push_back(m);
    }
    return BandwidthRule::cv_loo(std::move(grid));
  }
  throw ParseError("unknown bandwidth rule '" + rule + "'");
}

NuisanceOptions parse_nuisance(const json& v) {
  const std::string p = "nuisance";
  check_keys(v, p,
             {"bandwidth", "propensity_min", "ratio_min", "ratio_max", "normalizer_floor", "ratio_squares",
              "cross_fit", "grid_points"});
  NuisanceOptions o;
  if (const json* b = field(v, "bandwidth")) o.bandwidth = parse_bandwidth(*b);
  if (const json* x = field(v, "propensity_min")) o.propensity_min = as_double(*x, at(p, "propensity_min"));
  if (const json* x = field(v, "ratio_min")) o.ratio_min = as_double(*x, at(p, "ratio_min"));
  if (const json* x = field(v, "ratio_max")) o.ratio_max = as_double(*x, at(p, "ratio_max"));
  if (const json* x = field(v, "normalizer_floor")) o.normalizer_floor = as_double(*x, at(p, "normalizer_floor"));
  if (const json* x = field(v, "ratio_squares")) o.ratio_squares = as_bool(*x, at(p, "ratio_squares"));
  if (const json* x = field(v, "cross_fit")) o.cross_fit = as_bool(*x, at(p, "cross_fit"));
  if (const json* x = field(v, "grid_points")) o.grid_points = as_int(*x, at(p, "grid_points"));
  if (!(o.propensity_min > 0 && o.propensity_min < 0.5)) throw ParseError("'nuisance.propensity_min' must lie in (0, 0.5)");
  if (!(o.ratio_min > 0 && o.ratio_min < o.ratio_max)) throw ParseError("need 0 < nuisance.ratio_min < nuisance.ratio_max");
  if (!(o.normalizer_floor > 0)) throw ParseError("'nuisance.normalizer_floor' must be positive");
  if (o.grid_points < 0 || o.grid_points == 1) throw ParseError("'nuisance.grid_points' must be 0 or at least 2");
  return o;
}

DataMapping parse_data(const json& v) {
  check_keys(v, "data", {"columns", "source", "source_labels"});
  DataMapping m;
  if (const json* c = field(v, "columns")) m.columns = as_string_list(*c, "data.columns");
  if (const json* s = field(v, "source")) m.source = as_string(*s, "data.source");
  if (const json* l = field(v, "source_labels")) m.source_labels = as_string_list(*l, "data.source_labels");
  return m;
}

std::string line_context(const std::string& text, size_t byte) {
  size_t line = 1, col = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    // nlohmann reports the byte offset; translate it for humans
    throw ParseError("invalid JSON at " + line_context(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + msg);
  }
  check_keys(root, "", {"design", "estimand", "variant", "nuisance", "level", "seed", "data", "output"});
  RunConfig cfg;
  cfg.design = parse_design(required(root, "", "design"));
  if (const json* e = field(root, "estimand")) cfg.estimand = parse_estimand(*e);
  if (const json* v = field(root, "variant")) cfg.variant = EstimatorVariant::parse(as_string(*v, "variant"));
  if (const json* n = field(root, "nuisance")) cfg.nuisance = parse_nuisance(*n);
  if (const json* l = field(root, "level")) {
    cfg.level = as_double(*l, "level");
    if (!(cfg.level > 0 && cfg.level < 1)) throw BadLevel("level must lie in (0, 1)");
  }
  if (const json* s = field(root, "seed")) {
    if (!s->is_number_unsigned()) throw ParseError("'seed' must be a non-negative integer");
    cfg.seed = s->get<std::uint64_t>();
  }
  if (const json* d = field(root, "data")) cfg.data = parse_data(*d);
  if (const json* o = field(root, "output")) {
    check_keys(*o, "output", {"report", "sensitivity"});
    if (const json* r = field(*o, "report")) cfg.output.report = as_string(*r, "output.report");
    if (const json* s = field(*o, "sensitivity")) cfg.output.sensitivity = as_string(*s, "output.sensitivity");
  }

  check_design_structure(cfg.design);
  if (cfg.design.reference < 1 || cfg.design.reference > cfg.design.k)
    throw StructuralError("reference source " + std::to_string(cfg.design.reference) + " outside 1..k");
  if (!cfg.data.columns.empty() && static_cast<int>(cfg.data.columns.size()) != cfg.design.d)
    throw ParseError("'data.columns' lists " + std::to_string(cfg.data.columns.size()) + " names but design.d = " +
                     std::to_string(cfg.design.d));
  if (!cfg.data.source_labels.empty() && static_cast<int>(cfg.data.source_labels.size()) != cfg.design.k)
    throw ParseError("'data.source_labels' lists " + std::to_string(cfg.data.source_labels.size()) +
                     " labels but design.k = " + std::to_string(cfg.design.k));
  FusionDesign vd = apply_variant(cfg.design, cfg.variant);
  vd.normalize();
  make_view(cfg.estimand, vd);
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ojson config_to_json(const RunConfig& cfg) {
  ojson root;
  ojson design;
  design["d"] = cfg.design.d;
  design["k"] = cfg.design.k;
  design["reference"] = cfg.design.reference;
  design["relevant"] = ojson::array();
  for (const auto& r : cfg.design.relevant) {
    ojson e;
    e["j"] = r.j;
    e["aligned"] = r.aligned;
    e["weak"] = r.weak;
    design["relevant"].push_back(e);
  }
  design["weights"] = ojson::array();
  for (const auto& [key, spec] : cfg.design.weights) {
    ojson w;
    w["j"] = key.first;
    w["source"] = key.second;
    w["family"] = family_name(spec.family);
    if (spec.family == WeightFamily::exponential_tilt) {
      w["terms"] = ojson::array();
      for (const auto& t : spec.basis) w["terms"].push_back(t.str());
    } else {
      w["threshold"] = spec.threshold;
    }
    design["weights"].push_back(w);
  }
  root["design"] = design;

  ojson est;
  est["kind"] = estimand_name(cfg.estimand.kind);
  est["covariate"] = cfg.estimand.covariate;
  est["treatment"] = cfg.estimand.treatment;
  est["outcome"] = cfg.estimand.outcome;
  est["coefficient"] = cfg.estimand.coefficient;
  root["estimand"] = est;
  root["variant"] = cfg.variant.name();

  const NuisanceOptions& o = cfg.nuisance;
  ojson nu;
  switch (o.bandwidth.kind) {
    case BandwidthRule::Kind::silverman: nu["bandwidth"] = "silverman"; break;
    case BandwidthRule::Kind::fixed: nu["bandwidth"] = {{"rule", "fixed"}, {"h", o.bandwidth.h}}; break;
    case BandwidthRule::Kind::cv_loo: nu["bandwidth"] = {{"rule", "cv_loo"}, {"grid", o.bandwidth.grid}}; break;
  }
  nu["propensity_min"] = o.propensity_min;
  nu["ratio_min"] = o.ratio_min;
  nu["ratio_max"] = o.ratio_max;
  nu["normalizer_floor"] = o.normalizer_floor;
  nu["ratio_squares"] = o.ratio_squares;
  nu["cross_fit"] = o.cross_fit;
  nu["grid_points"] = o.grid_points;
  root["nuisance"] = nu;
  root["level"] = cfg.level;
  root["seed"] = cfg.seed;

  ojson data;
  data["columns"] = cfg.data.columns;
  data["source"] = cfg.data.source;
  data["source_labels"] = cfg.data.source_labels;
  root["data"] = data;
  root["output"] = {{"report", cfg.output.report}, {"sensitivity", cfg.output.sensitivity}};
  return root;
}

std::string dump_config(const RunConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump_config(cfg)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig default_simulation_config() {
  RunConfig cfg;
  cfg.design = simulation_design();
  cfg.design.normalize();
  cfg.estimand = simulation_estimand();
  cfg.data.columns = {"z1", "z2", "z3"};
  return cfg;
}

}  // namespace fusion
