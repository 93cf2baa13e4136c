#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "flemvi/cylinder.hpp"
#include "flemvi/geometry.hpp"
#include "flemvi/io.hpp"
#include "flemvi/kernels.hpp"
#include "flemvi/spectral.hpp"

namespace flemvi {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ComponentSpec {
  double weight = 1.0;
  std::vector<double> coefficients;  // a_2, a_3, ...
  std::optional<double> c;
};

struct ObservableSpec {
  std::vector<std::size_t> modes;  // 1-based
  std::vector<Polynomial::Term> phi;
};

struct RunConfig {
  std::vector<double> lower{0.0};
  std::vector<double> upper{std::numbers::pi};
  std::size_t truncation = 64;
  std::vector<ComponentSpec> law{ComponentSpec{}};
  std::string kernel = "paper_lll";
  std::size_t n = 100;
  std::vector<std::size_t> n_list{25, 100, 400};
  std::size_t replicas = 200;
  double dt = 1e-4;
  double horizon = 1.0;
  double t = 0.25;
  double beta = 2.0;
  std::vector<double> t_list{0.0, 0.25, 0.5, 1.0};
  std::size_t output_stride = 100;
  std::vector<ObservableSpec> observables;
  std::uint64_t seed = 20240611;
  std::size_t jobs = 0;  // 0: all available cores
  std::string out = "flemvi_out";

  std::size_t dimension() const { return lower.size(); }
  std::size_t effective_jobs() const {
    if (jobs > 0) return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

namespace detail {

inline const std::set<std::string>& top_level_keys() {
  static const std::set<std::string> keys = {"domain", "truncation", "law",     "kernel", "n",
                                             "n_list", "replicas",   "dt",      "horizon", "t",
                                             "beta",   "t_list",     "output_stride", "observables", "seed",
                                             "jobs",   "out"};
  return keys;
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("config key '" + key + "': expected a nonnegative integer");
  return v.get<std::size_t>();
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  const std::size_t dim = c.lower.size();
  if (dim != 1 && dim != 2) throw ConfigError("domain: dimension must be 1 or 2");
  if (c.upper.size() != dim) throw ConfigError("domain: lower and upper differ in length");
  for (std::size_t a = 0; a < dim; ++a) {
    if (!std::isfinite(c.lower[a]) || !std::isfinite(c.upper[a]) || !(c.upper[a] > c.lower[a])) throw ConfigError("domain: upper must exceed lower on every axis");
  }
  if (c.truncation == 0) throw ConfigError("truncation must be positive");
  if (c.law.empty()) throw ConfigError("law: at least one component required");
  for (const auto& comp : c.law) {
    if (!(comp.weight >= 0.0)) throw ConfigError("law: weights must be nonnegative");
    if (comp.coefficients.size() + 1 > c.truncation) throw ConfigError("law: more coefficients than retained modes");
    if (comp.c && !(*comp.c > 1.0)) throw ConfigError("law: c must exceed 1");
  }
  try {
    (void)parse_kernel_kind(c.kernel);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.n == 0) throw ConfigError("n must be at least 1");
  if (c.n_list.empty()) throw ConfigError("n_list must not be empty");
  for (std::size_t j = 0; j < c.n_list.size(); ++j) {
    if (c.n_list[j] == 0) throw ConfigError("n_list entries must be at least 1");
    if (j > 0 && c.n_list[j] <= c.n_list[j - 1]) throw ConfigError("n_list must be strictly increasing");
  }
  if (c.replicas < 2) throw ConfigError("replicas must be at least 2");
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(c.horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(c.t >= 0.0)) throw ConfigError("t must be nonnegative");
  if (!(c.beta > 0.0)) throw ConfigError("beta must be positive");
  for (double t : c.t_list) {
    if (!(t >= 0.0)) throw ConfigError("t_list entries must be nonnegative");
  }
  if (c.output_stride == 0) throw ConfigError("output_stride must be positive");
  for (const auto& o : c.observables) {
    if (o.modes.empty()) throw ConfigError("observables: modes must not be empty");
    for (std::size_t m : o.modes) {
      if (m == 0 || m > c.truncation) throw ConfigError("observables: mode index out of range");
    }
    for (const auto& term : o.phi) {
      if (term.powers.size() != o.modes.size()) throw ConfigError("observables: powers length must match modes");
      for (int p : term.powers) {
        if (p < 0) throw ConfigError("observables: negative power");
      }
    }
  }
  if (c.out.empty()) throw ConfigError("out must not be empty");
}

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::get;
  using detail::get_count;
  detail::reject_unknown(j, detail::top_level_keys(), "config");
  RunConfig c;
  if (j.contains("domain")) {
    const auto& d = j.at("domain");
    detail::reject_unknown(d, {"lower", "upper"}, "domain");
    c.lower = get<std::vector<double>>(d, "lower");
    c.upper = get<std::vector<double>>(d, "upper");
  }
  if (j.contains("truncation")) c.truncation = get_count(j, "truncation");
  if (j.contains("law")) {
    const auto& law = j.at("law");
    if (!law.is_array()) throw ConfigError("law: expected an array of components");
    c.law.clear();
    for (const auto& comp : law) {
      detail::reject_unknown(comp, {"weight", "coefficients", "c"}, "law component");
      ComponentSpec s;
      if (comp.contains("weight")) s.weight = get<double>(comp, "weight");
      if (comp.contains("coefficients")) s.coefficients = get<std::vector<double>>(comp, "coefficients");
      if (comp.contains("c") && !comp.at("c").is_null()) s.c = get<double>(comp, "c");
      c.law.push_back(std::move(s));
    }
  }
  if (j.contains("kernel")) c.kernel = get<std::string>(j, "kernel");
  if (j.contains("n")) c.n = get_count(j, "n");
  if (j.contains("n_list")) c.n_list = get<std::vector<std::size_t>>(j, "n_list");
  if (j.contains("replicas")) c.replicas = get_count(j, "replicas");
  if (j.contains("dt")) c.dt = get<double>(j, "dt");
  if (j.contains("horizon")) c.horizon = get<double>(j, "horizon");
  if (j.contains("t")) c.t = get<double>(j, "t");
  if (j.contains("beta")) c.beta = get<double>(j, "beta");
  if (j.contains("t_list")) c.t_list = get<std::vector<double>>(j, "t_list");
  if (j.contains("output_stride")) c.output_stride = get_count(j, "output_stride");
  if (j.contains("observables")) {
    const auto& obs = j.at("observables");
    if (!obs.is_array()) throw ConfigError("observables: expected an array");
    for (const auto& o : obs) {
      detail::reject_unknown(o, {"modes", "phi"}, "observable");
      ObservableSpec s;
      s.modes = get<std::vector<std::size_t>>(o, "modes");
      if (o.contains("phi")) {
        for (const auto& term : o.at("phi")) {
          detail::reject_unknown(term, {"coef", "powers"}, "observable term");
          s.phi.push_back({get<double>(term, "coef"), get<std::vector<int>>(term, "powers")});
        }
      } else {
        if (s.modes.size() != 1) throw ConfigError("observables: phi is required for more than one mode");
        s.phi.push_back({1.0, {1}});
      }
      c.observables.push_back(std::move(s));
    }
  }
  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (!v.is_number_unsigned()) throw ConfigError("config key 'seed': expected an unsigned integer");
    c.seed = v.get<std::uint64_t>();
  }
  if (j.contains("jobs")) c.jobs = get_count(j, "jobs");
  if (j.contains("out")) c.out = get<std::string>(j, "out");
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["domain"] = {{"lower", c.lower}, {"upper", c.upper}};
  j["truncation"] = c.truncation;
  j["law"] = nlohmann::json::array();
  for (const auto& comp : c.law) {
    nlohmann::json e{{"weight", comp.weight}, {"coefficients", comp.coefficients}};
    e["c"] = comp.c ? nlohmann::json(*comp.c) : nlohmann::json(nullptr);
    j["law"].push_back(std::move(e));
  }
  j["kernel"] = c.kernel;
  j["n"] = c.n;
  j["n_list"] = c.n_list;
  j["replicas"] = c.replicas;
  j["dt"] = c.dt;
  j["horizon"] = c.horizon;
  j["t"] = c.t;
  j["beta"] = c.beta;
  j["t_list"] = c.t_list;
  j["output_stride"] = c.output_stride;
  j["observables"] = nlohmann::json::array();
  for (const auto& o : c.observables) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : o.phi) terms.push_back({{"coef", t.coef}, {"powers", t.powers}});
    j["observables"].push_back({{"modes", o.modes}, {"phi", terms}});
  }
  j["seed"] = c.seed;
  return j;
}

/// Hash of everything that determines the numerical output (jobs and the
/// output directory excluded).
inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(to_json(c).dump()); }

/// FLEMVI_<KEY> overrides for scalar top-level keys, e.g. FLEMVI_SEED=7.
inline void apply_env_overrides(RunConfig& c,
                                const std::function<const char*(const char*)>& getenv_fn = [](const char* k) {
                                  return std::getenv(k);
                                }) {
  auto parse_count = [](const std::string& key, const char* v) -> std::size_t {
    try {
      std::size_t pos = 0;
      const unsigned long long x = std::stoull(v, &pos);
      if (pos != std::string(v).size() || std::string(v).find('-') != std::string::npos) throw std::invalid_argument(key);
      return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
      throw ConfigError("environment " + key + ": expected a nonnegative integer, got '" + v + "'");
    }
  };
  auto parse_real = [](const std::string& key, const char* v) {
    try {
      return parse_double(v);
    } catch (const std::exception&) {
      throw ConfigError("environment " + key + ": expected a number, got '" + v + "'");
    }
  };
  if (const char* v = getenv_fn("FLEMVI_SEED")) c.seed = parse_count("FLEMVI_SEED", v);
  if (const char* v = getenv_fn("FLEMVI_JOBS")) c.jobs = parse_count("FLEMVI_JOBS", v);
  if (const char* v = getenv_fn("FLEMVI_OUT")) c.out = v;
  if (const char* v = getenv_fn("FLEMVI_N")) c.n = parse_count("FLEMVI_N", v);
  if (const char* v = getenv_fn("FLEMVI_REPLICAS")) c.replicas = parse_count("FLEMVI_REPLICAS", v);
  if (const char* v = getenv_fn("FLEMVI_TRUNCATION")) c.truncation = parse_count("FLEMVI_TRUNCATION", v);
  if (const char* v = getenv_fn("FLEMVI_OUTPUT_STRIDE")) c.output_stride = parse_count("FLEMVI_OUTPUT_STRIDE", v);
  if (const char* v = getenv_fn("FLEMVI_DT")) c.dt = parse_real("FLEMVI_DT", v);
  if (const char* v = getenv_fn("FLEMVI_HORIZON")) c.horizon = parse_real("FLEMVI_HORIZON", v);
  if (const char* v = getenv_fn("FLEMVI_T")) c.t = parse_real("FLEMVI_T", v);
  if (const char* v = getenv_fn("FLEMVI_BETA")) c.beta = parse_real("FLEMVI_BETA", v);
  if (const char* v = getenv_fn("FLEMVI_KERNEL")) c.kernel = v;
  validate(c);
}

template <std::size_t Dim>
Box<Dim> make_domain(const RunConfig& c) {
  if (c.dimension() != Dim) throw ConfigError("domain dimension mismatch");
  Point<Dim> lo, hi;
  for (std::size_t a = 0; a < Dim; ++a) {
    lo[a] = c.lower[a];
    hi[a] = c.upper[a];
  }
  return Box<Dim>(lo, hi);
}

/// Basis, initial law, kernel and observables built from a validated config.
template <std::size_t Dim>
struct Model {
  BasisPtr<Dim> basis;
  std::shared_ptr<const InitialLaw<Dim>> law;
  RelocationKernel<Dim> kernel;
  std::vector<CylinderFunction> observables;
};

template <std::size_t Dim>
Model<Dim> build_model(const RunConfig& c) {
  auto basis = make_basis(make_domain<Dim>(c), c.truncation);
  std::vector<typename InitialLaw<Dim>::Component> comps;
  for (const auto& spec : c.law) {
    try {
      comps.push_back({spec.weight, make_admissible<Dim>(basis, spec.coefficients, spec.c)});
    } catch (const AdmissibilityError& e) {
      std::string msg = std::string("law: ") + e.what();
      for (const auto& v : e.violations()) msg += "\n  " + v;
      throw ConfigError(msg);
    }
  }
  std::shared_ptr<const InitialLaw<Dim>> law;
  try {
    law = std::make_shared<const InitialLaw<Dim>>(std::move(comps));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("law: ") + e.what());
  }
  const auto kind = parse_kernel_kind(c.kernel);
  auto kernel = kind == KernelKind::UniformSurvivor ? RelocationKernel<Dim>::uniform_survivor()
                : kind == KernelKind::FixedH1       ? RelocationKernel<Dim>::fixed_h1(basis)
                                                    : RelocationKernel<Dim>::paper_lll(law);
  std::vector<CylinderFunction> obs;
  if (c.observables.empty()) {
    for (std::size_t k = 0; k < std::min<std::size_t>(4, c.truncation); ++k) obs.push_back(CylinderFunction::linear(k));
  } else {
    for (const auto& o : c.observables) {
      std::vector<std::size_t> modes;
      for (std::size_t m : o.modes) modes.push_back(m - 1);
      obs.emplace_back(std::move(modes), Polynomial(o.modes.size(), o.phi));
    }
  }
  return {std::move(basis), std::move(law), std::move(kernel), std::move(obs)};
}

}  // namespace flemvi
