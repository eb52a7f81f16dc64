#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "toml.hpp"

#include "nodalmc/diffusion.hpp"
#include "nodalmc/models.hpp"
#include "nodalmc/oracle.hpp"

namespace nodalmc::cli {

struct ModelSection {
  std::string name;
  std::map<std::string, double> params;
  std::vector<double> theta;  //!< empty: catalog default
};

struct PropagationSection {
  std::size_t walkers = 0;  //!< 0: catalog default
  double dt = 0.0;          //!< 0: catalog default
  double total_time = 0.0;  //!< 0: catalog default
  double burn_in = -1.0;
  std::optional<double> lambda;  //!< empty: "auto"
  std::string mode;              //!< plain | drifted; empty: catalog default
  std::string initial;           //!< uniform_box | trial; empty: catalog default
  std::size_t resample_interval = 10;
  double ess_fraction = 0.5;
  double bisection_tol = 1e-6;
  bool bridge_correction = true;
  bool regularize = true;
  std::size_t metropolis_steps = 200;
  double metropolis_scale = 0.5;
  double roulette_threshold = 1e-3;
  double max_exit_time = 20.0;
};

struct MuSection {
  std::vector<std::string> functionals;  //!< empty: 1 and the coordinates
};

struct ShapeSection {
  std::string velocity = "endpoints";  //!< endpoints (1D box-like domains) | family
  double left = 0.0;
  double right = 1.0;
};

struct VmcSection {
  std::size_t steps = 100000;
  double proposal_scale = 1.0;
};

struct OracleSection {
  double spacing = 0.0;  //!< 0: catalog default
  std::string boundary = "staircase";
  std::string domain = "nodal";
  bool fd_gradient = true;
  double fd_delta = 0.02;
  std::optional<double> lambda;
  std::vector<std::string> functionals;
  std::string dump;
};

struct OptimizeSection {
  double step = 0.5;
  std::size_t iterations = 15;
  std::string gradient = "surface";
  std::size_t max_halvings = 6;
};

struct OutputSection {
  std::string csv;
  std::string json;
  bool walltime = true;
};

struct RunConfig {
  std::string source = "<config>";
  std::uint64_t seed = 1;
  int threads = 1;
  ModelSection model;
  PropagationSection propagation;
  MuSection mu;
  ShapeSection shape;
  VmcSection vmc;
  OracleSection oracle;
  OptimizeSection optimize;
  OutputSection output;
};

// ---------------------------------------------------------------------------
// functional names

//! Monomials in the coordinates: "1", "x", "y^2", "x1*x2^3". Coordinates are x, y, z for d ≤ 3
//! or x1 … xd in any dimension.
inline NamedFunction parse_monomial(const std::string& text, std::size_t d) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) throw ConfigError("empty functional name");
  std::vector<std::pair<std::size_t, int>> factors;
  double coeff = 1.0;
  std::stringstream ss(s);
  std::string f;
  while (std::getline(ss, f, '*')) {
    std::string var = f;
    int power = 1;
    if (auto caret = f.find('^'); caret != std::string::npos) {
      var = f.substr(0, caret);
      const std::string p = f.substr(caret + 1);
      if (p.empty() || !std::all_of(p.begin(), p.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw ConfigError("bad exponent in functional '" + text + "'");
      power = std::stoi(p);
    }
    if (var == "1") continue;
    std::size_t axis;
    if (var == "x" || var == "y" || var == "z") {
      axis = static_cast<std::size_t>(var == "x" ? 0 : var == "y" ? 1 : 2);
    } else if (var.size() > 1 && var[0] == 'x' &&
               std::all_of(var.begin() + 1, var.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      axis = static_cast<std::size_t>(std::stoul(var.substr(1))) - 1;
    } else {
      try {
        std::size_t used = 0;
        coeff *= std::stod(var, &used);
        if (used != var.size()) throw std::invalid_argument(var);
        continue;
      } catch (const std::logic_error&) {
        throw ConfigError("unknown factor '" + var + "' in functional '" + text + "'");
      }
    }
    if (axis >= d) throw ConfigError("functional '" + text + "' uses a coordinate beyond dimension " + std::to_string(d));
    factors.emplace_back(axis, power);
  }
  return {text, [factors, coeff](const Configuration& x) {
            double v = coeff;
            for (const auto& [a, p] : factors) v *= std::pow(x[a], p);
            return v;
          }};
}

inline std::vector<NamedFunction> functionals_or_default(const std::vector<std::string>& names, std::size_t d) {
  std::vector<NamedFunction> out;
  if (names.empty()) {
    out.push_back(parse_monomial("1", d));
    for (std::size_t a = 0; a < d; ++a) out.push_back(parse_monomial(d <= 3 ? std::string(1, "xyz"[a]) : "x" + std::to_string(a + 1), d));
    return out;
  }
  for (const auto& n : names) out.push_back(parse_monomial(n, d));
  return out;
}

// ---------------------------------------------------------------------------
// TOML reading

namespace detail {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const toml::node& node, const std::string& msg) const {
    const auto& src = node.source();
    throw ConfigError(source_ + ":" + std::to_string(src.begin.line) + ": " + msg);
  }

  void check_keys(const toml::table& t, const std::string& section, std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : t)
      if (!ok.count(std::string(k.str())))
        fail(v, "unknown key '" + (section.empty() ? "" : section + ".") + std::string(k.str()) + "'");
  }

  const toml::table* section(const toml::table& root, const char* name) const {
    const auto* n = root.get(name);
    if (!n) return nullptr;
    if (!n->is_table()) fail(*n, std::string("'") + name + "' must be a table");
    return n->as_table();
  }

  double number(const toml::node& n, const std::string& key) const {
    if (auto v = n.value<double>()) return *v;
    fail(n, key + " must be a number");
  }

  void read(const toml::table* t, const char* key, const std::string& ctx, double& out) const {
    if (const auto* n = t ? t->get(key) : nullptr) out = number(*n, ctx + "." + key);
  }
  void read(const toml::table* t, const char* key, const std::string& ctx, std::size_t& out) const {
    if (const auto* n = t ? t->get(key) : nullptr) {
      const auto v = n->value<std::int64_t>();
      if (!v || !n->is_integer() || *v < 0) fail(*n, ctx + "." + key + " must be a non-negative integer");
      out = static_cast<std::size_t>(*v);
    }
  }
  void read(const toml::table* t, const char* key, const std::string& ctx, bool& out) const {
    if (const auto* n = t ? t->get(key) : nullptr) {
      if (!n->is_boolean()) fail(*n, ctx + "." + key + " must be true or false");
      out = *n->value<bool>();
    }
  }
  void read(const toml::table* t, const char* key, const std::string& ctx, std::string& out,
            std::initializer_list<const char*> choices = {}) const {
    if (const auto* n = t ? t->get(key) : nullptr) {
      if (!n->is_string()) fail(*n, ctx + "." + key + " must be a string");
      out = *n->value<std::string>();
      if (choices.size() && std::none_of(choices.begin(), choices.end(), [&](const char* c) { return out == c; })) {
        std::string list;
        for (const char* c : choices) list += (list.empty() ? "" : ", ") + std::string(c);
        fail(*n, ctx + "." + key + " must be one of: " + list);
      }
    }
  }
  void read(const toml::table* t, const char* key, const std::string& ctx, std::vector<std::string>& out) const {
    if (const auto* n = t ? t->get(key) : nullptr) {
      const auto* arr = n->as_array();
      if (!arr) fail(*n, ctx + "." + key + " must be an array of strings");
      out.clear();
      for (const auto& e : *arr) {
        if (!e.is_string()) fail(e, ctx + "." + key + " must be an array of strings");
        out.push_back(*e.value<std::string>());
      }
    }
  }
  void read(const toml::table* t, const char* key, const std::string& ctx, std::vector<double>& out) const {
    if (const auto* n = t ? t->get(key) : nullptr) {
      out.clear();
      if (const auto* arr = n->as_array()) {
        for (const auto& e : *arr) out.push_back(number(e, ctx + "." + key));
      } else {
        out.push_back(number(*n, ctx + "." + key));
      }
    }
  }
  //! number or "auto"
  void read_auto(const toml::table* t, const char* key, const std::string& ctx, std::optional<double>& out) const {
    if (const auto* n = t ? t->get(key) : nullptr) {
      if (n->is_string()) {
        if (*n->value<std::string>() != "auto") fail(*n, ctx + "." + key + " must be a number or \"auto\"");
        out.reset();
      } else {
        out = number(*n, ctx + "." + key);
      }
    }
  }

 private:
  std::string source_;
};

inline toml::table parse_toml(const std::string& text, const std::string& source) {
  try {
    return toml::parse(std::string_view{text}, std::string_view{source});
  } catch (const toml::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
  }
}

}  // namespace detail

//! Applies "a.b.c=value"; the value is read as a TOML value and falls back to a bare string.
inline void apply_override(toml::table& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  std::vector<std::string> path;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("bad key in --set '" + assignment + "'");
    path.push_back(part);
  }
  toml::table* t = &root;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    auto* n = t->get(path[i]);
    if (!n) {
      t->insert(path[i], toml::table{});
      n = t->get(path[i]);
    }
    if (!n->is_table()) throw ConfigError("--set " + key + ": '" + path[i] + "' is not a table");
    t = n->as_table();
  }
  toml::table parsed;
  try {
    parsed = toml::parse(std::string_view{"v = " + raw}, std::string_view{"--set"});
  } catch (const toml::parse_error&) {
    parsed.insert("v", raw);
  }
  t->insert_or_assign(path.back(), *parsed.get("v"));
}

inline RunConfig config_from_table(const toml::table& root, const std::string& source) {
  const detail::Reader r(source);
  RunConfig c;
  c.source = source;
  r.check_keys(root, "", {"seed", "threads", "model", "propagation", "mu", "shape", "vmc", "oracle", "optimize", "output"});
  if (const auto* n = root.get("seed")) {
    const auto v = n->value<std::int64_t>();
    if (!n->is_integer() || !v || *v < 0) r.fail(*n, "seed must be a non-negative integer");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  if (const auto* n = root.get("threads")) {
    const auto v = n->value<std::int64_t>();
    if (!n->is_integer() || !v || *v < 1) r.fail(*n, "threads must be a positive integer");
    c.threads = static_cast<int>(*v);
  }

  const auto* m = r.section(root, "model");
  if (!m) throw ConfigError(source + ": missing [model] table");
  r.check_keys(*m, "model", {"name", "theta", "params"});
  r.read(m, "name", "model", c.model.name);
  if (c.model.name.empty()) throw ConfigError(source + ": model.name is required");
  r.read(m, "theta", "model", c.model.theta);
  if (const auto* p = r.section(*m, "params"))
    for (const auto& [k, v] : *p) c.model.params[std::string(k.str())] = r.number(v, "model.params." + std::string(k.str()));

  const auto* p = r.section(root, "propagation");
  if (p)
    r.check_keys(*p, "propagation",
                 {"walkers", "dt", "total_time", "burn_in", "lambda", "mode", "initial", "resample_interval", "ess_fraction",
                  "bisection_tol", "bridge_correction", "regularize", "metropolis_steps", "metropolis_scale", "roulette_threshold", "max_exit_time"});
  auto& pc = c.propagation;
  r.read(p, "walkers", "propagation", pc.walkers);
  r.read(p, "dt", "propagation", pc.dt);
  r.read(p, "total_time", "propagation", pc.total_time);
  r.read(p, "burn_in", "propagation", pc.burn_in);
  r.read_auto(p, "lambda", "propagation", pc.lambda);
  r.read(p, "mode", "propagation", pc.mode, {"plain", "drifted"});
  r.read(p, "initial", "propagation", pc.initial, {"uniform_box", "trial"});
  r.read(p, "resample_interval", "propagation", pc.resample_interval);
  r.read(p, "ess_fraction", "propagation", pc.ess_fraction);
  r.read(p, "bisection_tol", "propagation", pc.bisection_tol);
  r.read(p, "bridge_correction", "propagation", pc.bridge_correction);
  r.read(p, "regularize", "propagation", pc.regularize);
  r.read(p, "metropolis_steps", "propagation", pc.metropolis_steps);
  r.read(p, "metropolis_scale", "propagation", pc.metropolis_scale);
  r.read(p, "roulette_threshold", "propagation", pc.roulette_threshold);
  r.read(p, "max_exit_time", "propagation", pc.max_exit_time);
  if (p) {
    auto positive = [&](const char* key, double v) {
      if (const auto* n = p->get(key); n && !(v > 0)) r.fail(*n, std::string("propagation.") + key + " must be positive");
    };
    positive("dt", pc.dt);
    positive("total_time", pc.total_time);
    positive("max_exit_time", pc.max_exit_time);
    positive("bisection_tol", pc.bisection_tol);
    if (const auto* n = p->get("walkers"); n && pc.walkers < 2) r.fail(*n, "propagation.walkers must be at least 2");
    if (const auto* n = p->get("ess_fraction"); n && !(pc.ess_fraction >= 0 && pc.ess_fraction <= 1))
      r.fail(*n, "propagation.ess_fraction must lie in [0, 1]");
    if (const auto* n = p->get("resample_interval"); n && pc.resample_interval == 0)
      r.fail(*n, "propagation.resample_interval must be at least 1");
    if (const auto* n = p->get("roulette_threshold"); n && !(pc.roulette_threshold > 0 && pc.roulette_threshold < 1))
      r.fail(*n, "propagation.roulette_threshold must lie in (0, 1)");
  }

  if (const auto* t = r.section(root, "mu")) {
    r.check_keys(*t, "mu", {"functionals"});
    r.read(t, "functionals", "mu", c.mu.functionals);
  }
  if (const auto* t = r.section(root, "shape")) {
    r.check_keys(*t, "shape", {"velocity", "left", "right"});
    r.read(t, "velocity", "shape", c.shape.velocity, {"endpoints", "family"});
    r.read(t, "left", "shape", c.shape.left);
    r.read(t, "right", "shape", c.shape.right);
  }
  if (const auto* t = r.section(root, "vmc")) {
    r.check_keys(*t, "vmc", {"steps", "proposal_scale"});
    r.read(t, "steps", "vmc", c.vmc.steps);
    r.read(t, "proposal_scale", "vmc", c.vmc.proposal_scale);
    if (const auto* n = t->get("proposal_scale"); n && !(c.vmc.proposal_scale > 0)) r.fail(*n, "vmc.proposal_scale must be positive");
    if (const auto* n = t->get("steps"); n && c.vmc.steps < 160) r.fail(*n, "vmc.steps must be at least 160");
  }
  if (const auto* t = r.section(root, "oracle")) {
    r.check_keys(*t, "oracle", {"spacing", "boundary", "domain", "fd_gradient", "fd_delta", "lambda", "functionals", "dump"});
    r.read(t, "spacing", "oracle", c.oracle.spacing);
    r.read(t, "boundary", "oracle", c.oracle.boundary, {"staircase", "linear_ghost"});
    r.read(t, "domain", "oracle", c.oracle.domain, {"nodal", "box"});
    r.read(t, "fd_gradient", "oracle", c.oracle.fd_gradient);
    r.read(t, "fd_delta", "oracle", c.oracle.fd_delta);
    if (const auto* n = t->get("lambda")) c.oracle.lambda = r.number(*n, "oracle.lambda");
    r.read(t, "functionals", "oracle", c.oracle.functionals);
    r.read(t, "dump", "oracle", c.oracle.dump);
    if (const auto* n = t->get("spacing"); n && !(c.oracle.spacing > 0)) r.fail(*n, "oracle.spacing must be positive");
    if (const auto* n = t->get("fd_delta"); n && !(c.oracle.fd_delta > 0)) r.fail(*n, "oracle.fd_delta must be positive");
  }
  if (const auto* t = r.section(root, "optimize")) {
    r.check_keys(*t, "optimize", {"step", "iterations", "gradient", "max_halvings"});
    r.read(t, "step", "optimize", c.optimize.step);
    r.read(t, "iterations", "optimize", c.optimize.iterations);
    r.read(t, "gradient", "optimize", c.optimize.gradient, {"surface", "bulk"});
    r.read(t, "max_halvings", "optimize", c.optimize.max_halvings);
    if (const auto* n = t->get("step"); n && !(c.optimize.step > 0)) r.fail(*n, "optimize.step must be positive");
  }
  if (const auto* t = r.section(root, "output")) {
    r.check_keys(*t, "output", {"csv", "json", "walltime"});
    r.read(t, "csv", "output", c.output.csv);
    r.read(t, "json", "output", c.output.json);
    r.read(t, "walltime", "output", c.output.walltime);
  }
  return c;
}

inline RunConfig parse_config_string(const std::string& text, const std::string& source = "<string>",
                                     const std::vector<std::string>& overrides = {}) {
  auto root = detail::parse_toml(text, source);
  for (const auto& o : overrides) apply_override(root, o);
  return config_from_table(root, source);
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str(), path, overrides);
}

// ---------------------------------------------------------------------------
// digest

//! Canonical JSON of everything that affects results (threads and output paths excluded).
inline nlohmann::ordered_json canonical_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["model"]["name"] = c.model.name;
  j["model"]["params"] = c.model.params;
  j["model"]["theta"] = c.model.theta;
  const auto& p = c.propagation;
  j["propagation"] = {{"walkers", p.walkers},
                      {"dt", p.dt},
                      {"total_time", p.total_time},
                      {"burn_in", p.burn_in},
                      {"lambda", p.lambda ? nlohmann::ordered_json(*p.lambda) : nlohmann::ordered_json("auto")},
                      {"mode", p.mode},
                      {"initial", p.initial},
                      {"resample_interval", p.resample_interval},
                      {"ess_fraction", p.ess_fraction},
                      {"bisection_tol", p.bisection_tol},
                      {"bridge_correction", p.bridge_correction},
                      {"regularize", p.regularize},
                      {"metropolis_steps", p.metropolis_steps},
                      {"metropolis_scale", p.metropolis_scale},
                      {"roulette_threshold", p.roulette_threshold},
                      {"max_exit_time", p.max_exit_time}};
  j["mu"]["functionals"] = c.mu.functionals;
  j["shape"] = {{"velocity", c.shape.velocity}, {"left", c.shape.left}, {"right", c.shape.right}};
  j["vmc"] = {{"steps", c.vmc.steps}, {"proposal_scale", c.vmc.proposal_scale}};
  const auto& o = c.oracle;
  j["oracle"] = {{"spacing", o.spacing},
                 {"boundary", o.boundary},
                 {"domain", o.domain},
                 {"fd_gradient", o.fd_gradient},
                 {"fd_delta", o.fd_delta},
                 {"lambda", o.lambda ? nlohmann::ordered_json(*o.lambda) : nlohmann::ordered_json(nullptr)},
                 {"functionals", o.functionals}};
  j["optimize"] = {{"step", c.optimize.step},
                   {"iterations", c.optimize.iterations},
                   {"gradient", c.optimize.gradient},
                   {"max_halvings", c.optimize.max_halvings}};
  return j;
}

//! FNV-1a (64 bit) of the canonical JSON, as 16 hex digits.
inline std::string config_digest(const RunConfig& c) {
  const std::string s = canonical_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// resolution against the catalog

struct ResolvedRun {
  models::ModelCatalogEntry entry;
  Parameters theta;
  diffusion::PropagationConfig propagation;
  std::size_t walkers = 0;
  bool lambda_auto = false;
};

inline Parameters to_parameters(const std::vector<double>& v) {
  if (v.size() > Parameters::capacity()) throw ConfigError("too many theta components");
  Parameters p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i];
  return p;
}

inline ResolvedRun resolve(const RunConfig& c) {
  ResolvedRun r;
  r.entry = models::make_model(c.model.name, c.model.params);
  r.theta = r.entry.default_theta;
  if (!c.model.theta.empty()) {
    if (c.model.theta.size() != r.entry.family->parameter_count())
      throw ConfigError(c.source + ": model.theta has " + std::to_string(c.model.theta.size()) + " components; model '" + c.model.name +
                        "' needs " + std::to_string(r.entry.family->parameter_count()));
    r.theta = to_parameters(c.model.theta);
    validate_family(*r.entry.model, *r.entry.family, r.theta);
  }
  const auto& d = r.entry.propagation;
  const auto& p = c.propagation;
  auto& pc = r.propagation;
  r.walkers = p.walkers ? p.walkers : d.walkers;
  pc.dt = p.dt > 0 ? p.dt : d.dt;
  pc.total_time = p.total_time > 0 ? p.total_time : d.total_time;
  pc.burn_in = p.burn_in;
  const std::string init = !p.initial.empty() ? p.initial : d.init;
  pc.initial = init == "trial" ? diffusion::InitialDistribution::trial_density : diffusion::InitialDistribution::uniform_box;
  const std::string mode = !p.mode.empty() ? p.mode : (d.init == "trial" ? "drifted" : "plain");
  pc.mode = mode == "drifted" ? diffusion::PropagationMode::drifted : diffusion::PropagationMode::plain;
  pc.resample_interval = p.resample_interval;
  pc.ess_fraction = p.ess_fraction;
  pc.bisection_tol = p.bisection_tol;
  pc.bridge_correction = p.bridge_correction;
  pc.regularize = p.regularize;
  pc.metropolis_steps = p.metropolis_steps;
  pc.metropolis_scale = p.metropolis_scale;
  pc.roulette_threshold = p.roulette_threshold;
  pc.threads = c.threads;
  r.lambda_auto = !p.lambda.has_value();
  pc.lambda = p.lambda.value_or(0.0);
  const auto steps = pc.total_time / pc.dt / static_cast<double>(pc.resample_interval);
  if (steps < 20) throw ConfigError(c.source + ": total_time/(dt*resample_interval) must be at least 20 for the energy fit");
  return r;
}

}  // namespace nodalmc::cli
