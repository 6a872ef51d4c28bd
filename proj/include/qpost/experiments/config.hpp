#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/estimators/fisher.hpp"
#include "qpost/models/dgp.hpp"
#include "qpost/samplers/chain.hpp"

namespace qpost {

enum class Method { q_posterior, exact, generalized };
enum class IntervalKind { equal_tailed, hpd };
enum class GeneralizedKind { loss, median_likelihood };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::q_posterior: return "q_posterior";
    case Method::exact: return "exact";
    case Method::generalized: return "generalized";
  }
  return "?";
}

/// Column-block label used in tables.
inline std::string display_name(Method m) {
  switch (m) {
    case Method::q_posterior: return "Q-posterior";
    case Method::exact: return "Exact";
    case Method::generalized: return "Generalized";
  }
  return "?";
}

enum class WeightMode { per_theta, fixed_at_estimate };

/// Latent draws used when the weight is estimated once at a preliminary estimate.
inline constexpr std::size_t kFixedWeightDraws = 200;

struct ExperimentConfig {
  std::string name = "experiment";
  DgpSpec dgp;
  std::vector<Method> methods{Method::q_posterior, Method::exact};
  std::size_t replications = 500;
  ChainConfig chain;
  /// Random-walk scale relative to the model's rough posterior scales; 0 means 2.38/sqrt(d).
  double step_scale = 0.0;
  bool adapt = true;
  double target_acceptance = 0.234;
  std::size_t n_latent = 5;
  WeightComposition weight = WeightComposition::w1_plus_w2_over_n;
  /// Weight re-estimated at every theta, or estimated once at a preliminary
  /// consistent estimate and held fixed (latent-variable models only).
  WeightMode weight_mode = WeightMode::per_theta;
  /// -1 picks the default for the model (on for likelihood scores, off for the median loss).
  int include_det = -1;
  bool q_estimate_sigma2_alpha = false;
  std::size_t bootstrap_resamples = 200;
  /// Exact baselines: whether sigma^2 / sigma_alpha^2 are sampled or held at their generating values.
  bool exact_sample_sigma2 = false;
  bool exact_sample_sigma2_alpha = true;
  GeneralizedKind generalized = GeneralizedKind::loss;
  double credible_level = 0.95;
  IntervalKind interval = IntervalKind::equal_tailed;
  std::size_t workers = 1;
  std::uint64_t seed = 1;
  bool save_traces = false;
  /// Keep the full per-replication traces only for the first this-many replications.
  std::size_t trace_limit = 5;

  bool resolved_include_det() const {
    if (include_det >= 0) return include_det != 0;
    return dgp.kind != ModelKind::median;
  }

  void validate() const {
    dgp.validate();
    if (replications < 1) throw ConfigError("replications must be >= 1");
    if (!(credible_level > 0.0 && credible_level < 1.0)) throw ConfigError("credible_level must lie in (0, 1)");
    if (chain.iterations < 1 || chain.burn_in >= chain.iterations)
      throw ConfigError("chain.burn_in must be smaller than chain.iterations");
    if (chain.iterations - chain.burn_in < 100) throw ConfigError("need at least 100 retained draws per chain");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (n_latent < 1) throw ConfigError("q.n_latent must be >= 1");
    if (step_scale < 0.0) throw ConfigError("chain.step_scale must be >= 0");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) throw ConfigError("chain.target_acceptance must lie in (0, 1)");
    if (dgp.kind == ModelKind::median && bootstrap_resamples < 50) throw ConfigError("q.bootstrap_resamples must be >= 50");
    if (weight_mode == WeightMode::fixed_at_estimate && dgp.kind != ModelKind::lin_re && dgp.kind != ModelKind::probit_re)
      throw ConfigError("q.weight_mode = fixed_at_estimate needs a latent-variable model (lin_re or probit_re)");
    if (methods.empty()) return;
    for (Method m : methods) {
      if (m == Method::generalized && dgp.kind != ModelKind::median)
        throw ConfigError("method 'generalized' is only defined for the median model");
      if (m == Method::exact && dgp.kind == ModelKind::median)
        throw ConfigError("the median model has no exact baseline; use 'generalized'");
    }
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_list(std::string s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError("unterminated list: " + s);
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end)
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

template <class E>
E pick(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError("key '" + key + "': unknown value '" + v + "' (expected one of " + names + ")");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace config_detail

/// Every accepted key, in the order used when echoing a resolved config.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "name", "methods", "replications", "seed", "workers", "credible_level", "interval",
      "dgp.model", "dgp.n", "dgp.beta", "dgp.sigma", "dgp.gamma", "dgp.intercept", "dgp.sigma2_alpha",
      "dgp.latent_dist", "dgp.median_dgp", "dgp.coverage_target",
      "chain.iterations", "chain.burn_in", "chain.step_scale", "chain.adapt", "chain.target_acceptance",
      "q.n_latent", "q.weight", "q.weight_mode", "q.include_det", "q.estimate_sigma2_alpha", "q.bootstrap_resamples",
      "exact.sigma2", "exact.sigma2_alpha", "generalized.kind", "output.traces", "output.trace_limit"};
  return keys;
}

/// Applies one `key = value` setting.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  using namespace config_detail;
  const std::string v = unquote(raw);
  if (key == "name") c.name = v;
  else if (key == "methods") {
    c.methods.clear();
    for (const auto& m : split_list(raw))
      c.methods.push_back(pick<Method>(key, m, {{"q_posterior", Method::q_posterior}, {"exact", Method::exact},
                                                 {"generalized", Method::generalized}}));
  } else if (key == "replications") c.replications = to_uint(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "workers") c.workers = to_uint(key, v);
  else if (key == "credible_level") c.credible_level = to_double(key, v);
  else if (key == "interval")
    c.interval = pick<IntervalKind>(key, v, {{"equal_tailed", IntervalKind::equal_tailed}, {"hpd", IntervalKind::hpd}});
  else if (key == "dgp.model") c.dgp.kind = pick<ModelKind>(key, v, {{"linreg", ModelKind::linreg}, {"lin_re", ModelKind::lin_re},
                                                                        {"probit_re", ModelKind::probit_re}, {"median", ModelKind::median}});
  else if (key == "dgp.n") c.dgp.n = to_uint(key, v);
  else if (key == "dgp.beta") {
    const auto items = split_list(raw);
    c.dgp.beta.resize(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) c.dgp.beta(static_cast<Eigen::Index>(i)) = to_double(key, items[i]);
  } else if (key == "dgp.sigma") c.dgp.sigma = to_double(key, v);
  else if (key == "dgp.gamma") c.dgp.gamma = to_double(key, v);
  else if (key == "dgp.intercept") c.dgp.intercept = to_bool(key, v);
  else if (key == "dgp.sigma2_alpha") c.dgp.sigma2_alpha = to_double(key, v);
  else if (key == "dgp.latent_dist")
    c.dgp.latent_dist = pick<LatentDist>(key, v, {{"gaussian", LatentDist::gaussian}, {"student_t4", LatentDist::student_t4}});
  else if (key == "dgp.median_dgp") c.dgp.median_dgp = pick<MedianDgp>(key, v, {{"dgp1", MedianDgp::dgp1}, {"dgp2", MedianDgp::dgp2}});
  else if (key == "dgp.coverage_target")
    c.dgp.coverage_target =
        pick<CoverageTarget>(key, v, {{"pseudo_true", CoverageTarget::pseudo_true}, {"generating", CoverageTarget::generating}});
  else if (key == "chain.iterations") c.chain.iterations = to_uint(key, v);
  else if (key == "chain.burn_in") c.chain.burn_in = to_uint(key, v);
  else if (key == "chain.step_scale") c.step_scale = to_double(key, v);
  else if (key == "chain.adapt") c.adapt = to_bool(key, v);
  else if (key == "chain.target_acceptance") c.target_acceptance = to_double(key, v);
  else if (key == "q.n_latent") c.n_latent = to_uint(key, v);
  else if (key == "q.weight")
    c.weight = pick<WeightComposition>(key, v, {{"w1_only", WeightComposition::w1_only},
                                                {"w1_plus_w2_over_n", WeightComposition::w1_plus_w2_over_n},
                                                {"w1_plus_w2", WeightComposition::w1_plus_w2}});
  else if (key == "q.weight_mode")
    c.weight_mode = pick<WeightMode>(key, v, {{"per_theta", WeightMode::per_theta},
                                              {"fixed_at_estimate", WeightMode::fixed_at_estimate}});
  else if (key == "q.include_det") c.include_det = v == "auto" ? -1 : (to_bool(key, v) ? 1 : 0);
  else if (key == "q.estimate_sigma2_alpha") c.q_estimate_sigma2_alpha = to_bool(key, v);
  else if (key == "q.bootstrap_resamples") c.bootstrap_resamples = to_uint(key, v);
  else if (key == "exact.sigma2") c.exact_sample_sigma2 = pick<bool>(key, v, {{"sampled", true}, {"fixed", false}});
  else if (key == "exact.sigma2_alpha") c.exact_sample_sigma2_alpha = pick<bool>(key, v, {{"sampled", true}, {"fixed", false}});
  else if (key == "generalized.kind")
    c.generalized = pick<GeneralizedKind>(key, v, {{"loss", GeneralizedKind::loss}, {"median_likelihood", GeneralizedKind::median_likelihood}});
  else if (key == "output.traces") c.save_traces = to_bool(key, v);
  else if (key == "output.trace_limit") c.trace_limit = to_uint(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Parses `key = value` lines. `#` starts a comment; a `[section]` header
/// prefixes the following keys with `section.`; lists are `[a, b]` or `a, b`.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig base = {}) {
  using config_detail::trim;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // strip comments outside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      apply_setting(base, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// Applies a `key=value` override string.
inline void apply_override(ExperimentConfig& c, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not of the form key=value");
  apply_setting(c, config_detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
}

/// Resolved config as ordered (key, value) pairs; parsing the rendered pairs
/// reproduces the config.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  using config_detail::fmt;
  std::string methods;
  for (Method m : c.methods) methods += (methods.empty() ? "" : ", ") + to_string(m);
  std::string beta;
  for (Eigen::Index i = 0; i < c.dgp.beta.size(); ++i) beta += (i ? ", " : "") + fmt(c.dgp.beta(i));
  auto weight = [&] {
    switch (c.weight) {
      case WeightComposition::w1_only: return "w1_only";
      case WeightComposition::w1_plus_w2_over_n: return "w1_plus_w2_over_n";
      case WeightComposition::w1_plus_w2: return "w1_plus_w2";
    }
    return "?";
  };
  return {
      {"name", c.name},
      {"methods", "[" + methods + "]"},
      {"replications", std::to_string(c.replications)},
      {"seed", std::to_string(c.seed)},
      {"workers", std::to_string(c.workers)},
      {"credible_level", fmt(c.credible_level)},
      {"interval", c.interval == IntervalKind::hpd ? "hpd" : "equal_tailed"},
      {"dgp.model", to_string(c.dgp.kind)},
      {"dgp.n", std::to_string(c.dgp.n)},
      {"dgp.beta", "[" + beta + "]"},
      {"dgp.sigma", fmt(c.dgp.sigma)},
      {"dgp.gamma", fmt(c.dgp.gamma)},
      {"dgp.intercept", c.dgp.intercept ? "true" : "false"},
      {"dgp.sigma2_alpha", fmt(c.dgp.sigma2_alpha)},
      {"dgp.latent_dist", c.dgp.latent_dist == LatentDist::gaussian ? "gaussian" : "student_t4"},
      {"dgp.median_dgp", c.dgp.median_dgp == MedianDgp::dgp1 ? "dgp1" : "dgp2"},
      {"dgp.coverage_target", c.dgp.coverage_target == CoverageTarget::pseudo_true ? "pseudo_true" : "generating"},
      {"chain.iterations", std::to_string(c.chain.iterations)},
      {"chain.burn_in", std::to_string(c.chain.burn_in)},
      {"chain.step_scale", fmt(c.step_scale)},
      {"chain.adapt", c.adapt ? "true" : "false"},
      {"chain.target_acceptance", fmt(c.target_acceptance)},
      {"q.n_latent", std::to_string(c.n_latent)},
      {"q.weight", weight()},
      {"q.weight_mode", c.weight_mode == WeightMode::per_theta ? "per_theta" : "fixed_at_estimate"},
      {"q.include_det", c.include_det < 0 ? "auto" : (c.include_det ? "true" : "false")},
      {"q.estimate_sigma2_alpha", c.q_estimate_sigma2_alpha ? "true" : "false"},
      {"q.bootstrap_resamples", std::to_string(c.bootstrap_resamples)},
      {"exact.sigma2", c.exact_sample_sigma2 ? "sampled" : "fixed"},
      {"exact.sigma2_alpha", c.exact_sample_sigma2_alpha ? "sampled" : "fixed"},
      {"generalized.kind", c.generalized == GeneralizedKind::loss ? "loss" : "median_likelihood"},
      {"output.traces", c.save_traces ? "true" : "false"},
      {"output.trace_limit", std::to_string(c.trace_limit)},
  };
}

inline std::string render_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) {
    const bool needs_quotes = k == "name";
    out += k + " = " + (needs_quotes ? "\"" + v + "\"" : v) + "\n";
  }
  return out;
}

}  // namespace qpost
