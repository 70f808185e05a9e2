#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "randobs/bandit.hpp"
#include "randobs/dynamics.hpp"
#include "randobs/letkf.hpp"
#include "randobs/localization.hpp"
#include "randobs/rng.hpp"

namespace randobs {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Trajectory, MseSweep, LearnNj, BanditSelftest };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Trajectory: return "trajectory";
    case ExperimentKind::MseSweep: return "mse-sweep";
    case ExperimentKind::LearnNj: return "learn-nj";
    case ExperimentKind::BanditSelftest: return "bandit-selftest";
  }
  return "unknown";
}

inline ExperimentKind kind_from_string(const std::string& s) {
  if (s == "trajectory") return ExperimentKind::Trajectory;
  if (s == "mse-sweep") return ExperimentKind::MseSweep;
  if (s == "learn-nj") return ExperimentKind::LearnNj;
  if (s == "bandit-selftest") return ExperimentKind::BanditSelftest;
  throw config_error("unknown experiment '" + s + "'");
}

// Fully resolved run specification. Defaults follow the paper-configuration
// table; per-experiment defaults are applied first, then the config file,
// then command-line overrides. The manifest echoes every field.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::LearnNj;
  std::uint64_t seed = 1;
  ModelKind model = ModelKind::Lorenz96;
  int n_x = 40;
  double l63_sigma = 10.0;
  double l63_rho = 28.0;
  double l63_beta = 8.0 / 3.0;
  double forcing = 8.0;
  double eps = 0.25;
  int m = 30;
  double dt = 0.01;
  long cycles = 3000;
  int n_inner = 5;
  long n_steps = 20000;
  int n_j = 1;
  std::vector<double> eps_list;
  double lambda = 1000.0;
  std::vector<int> arms;
  double alpha = 3.2;
  double beta = 2.5;
  double gamma = 0.25;
  double tau_corr = 0.30;
  double ucb_coeff = 1.0;
  double r_loc = 10.0;
  double inflation = 1.05;
  double noise_amplitude = 1.4142135623730951;  // sqrt(2), D = I
  double floor = 1e-12;
  double burn_in_frac = 0.2;
  double divergence_rmse = 1e3;
  int n_reps = 50;
  int observed_component = 3;  // 1-based, the paper's component labels
  long record_every = 1;
  int threads = 0;  // 0 = hardware concurrency
  bool write_runs = true;
  bool paper_scale = false;
  long bandit_pulls = 10000;
  int bandit_seeds = 20;
  std::vector<double> bandit_means = {0.9, 0.5, 0.1};

  bool operator==(const ExperimentConfig&) const = default;

  DriftModel drift_model() const {
    return model == ModelKind::Lorenz63
               ? DriftModel::lorenz63(l63_sigma, l63_rho, l63_beta)
               : DriftModel::lorenz96(n_x, forcing);
  }

  // L63 components carry no spatial arrangement: phi is all-ones there.
  LocalizationSpec localization_spec() const {
    if (model == ModelKind::Lorenz63) return LocalizationSpec::uniform();
    return LocalizationSpec{Kernel::GaspariCohn, r_loc,
                            DistanceKind::CyclicIndex};
  }

  AnalysisConfig analysis_config() const {
    AnalysisConfig a;
    a.inflation = inflation;
    a.r_loc = r_loc;
    a.eps = eps;
    a.localized = model != ModelKind::Lorenz63;
    return a;
  }

  RewardParams reward_params() const {
    return RewardParams{alpha, beta, gamma, tau_corr, r_loc};
  }

  int observed_index() const { return observed_component - 1; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline double parse_double_value(const std::string& key,
                                 const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': cannot parse '" + value +
                       "' as a number");
  }
}

inline long parse_long_value(const std::string& key,
                             const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': cannot parse '" + value +
                       "' as an integer");
  }
}

inline std::uint64_t parse_u64_value(const std::string& key,
                                     const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': cannot parse '" + value +
                       "' as an unsigned integer");
  }
}

inline bool parse_bool_value(const std::string& key,
                             const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error("key '" + key + "': expected true/false, got '" + value +
                     "'");
}

inline std::vector<double> parse_double_list(const std::string& key,
                                             const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double_value(key, item));
  }
  if (out.empty()) {
    throw config_error("key '" + key + "': list must be non-empty");
  }
  return out;
}

// Arm grid "start:stride:stop", stop inclusive when hit exactly.
inline std::vector<int> parse_arm_grid(const std::string& key,
                                       const std::string& value) {
  int parts[3];
  std::stringstream ss(value);
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ':')) {
    if (n >= 3) throw config_error("key '" + key + "': expected start:stride:stop");
    parts[n++] = static_cast<int>(parse_long_value(key, trim(item)));
  }
  if (n != 3) {
    throw config_error("key '" + key + "': expected start:stride:stop");
  }
  const int start = parts[0];
  const int stride = parts[1];
  const int stop = parts[2];
  if (start < 1 || stride < 1 || stop < start) {
    throw config_error("key '" + key +
                       "': need 1 <= start <= stop and stride >= 1");
  }
  std::vector<int> arms;
  for (int v = start; v <= stop; v += stride) arms.push_back(v);
  return arms;
}

inline std::string format_double_17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string join_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double_17(v[i]);
  }
  return out;
}

inline std::string render_arm_grid(const std::vector<int>& arms) {
  const int start = arms.front();
  const int stop = arms.back();
  const int stride = arms.size() > 1 ? arms[1] - arms[0] : 1;
  return std::to_string(start) + ":" + std::to_string(stride) + ":" +
         std::to_string(stop);
}

}  // namespace detail

inline std::vector<double> default_eps_list() {
  return {0.02, 0.05, 0.1, 0.2, 0.4};
}

// Per-dimension defaults: r_loc = N_x/4 and arm stride = N_x/16 reproduce
// the table pairing 40->(10,2), 80->(20,5), 120->(30,7), 160->(40,10).
inline double default_r_loc(int n_x) { return n_x / 4.0; }

inline std::vector<int> default_arms(int n_x) {
  const int stride = std::max(1, n_x / 16);
  std::vector<int> arms;
  for (int v = 1; v < n_x; v += stride) arms.push_back(v);
  return arms;
}

// Parses flat `key = value` text ('#' comments allowed) on top of the
// experiment-kind defaults, then applies command-line overrides given as
// "key=value" strings. Unknown keys and violated invariants are errors that
// name the key.
inline ExperimentConfig parse_config(
    const std::string& text, ExperimentKind kind,
    const std::vector<std::string>& overrides = {}) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case ExperimentKind::Trajectory:
      cfg.model = ModelKind::Lorenz63;
      cfg.n_x = 3;
      cfg.dt = 1e-3;
      cfg.n_steps = 20000;
      cfg.n_reps = 20;
      break;
    case ExperimentKind::MseSweep:
      cfg.model = ModelKind::Lorenz63;
      cfg.n_x = 3;
      cfg.dt = 1e-4;
      cfg.n_steps = 200000;
      cfg.n_reps = 20;
      cfg.record_every = 100;
      cfg.eps_list = default_eps_list();
      break;
    case ExperimentKind::LearnNj:
      break;
    case ExperimentKind::BanditSelftest:
      break;
  }

  std::set<std::string> seen;
  auto assign = [&cfg, &seen, kind](const std::string& key,
                                    const std::string& value) {
    using namespace detail;
    if (key == "experiment") {
      if (kind_from_string(value) != kind) {
        throw config_error("key 'experiment': config says '" + value +
                           "' but the invoked experiment is '" +
                           std::string(to_string(kind)) + "'");
      }
    } else if (key == "rng") {
      if (value != kRngName) {
        throw config_error("key 'rng': this build provides '" +
                           std::string(kRngName) + "', not '" + value + "'");
      }
    } else if (key == "seed") {
      cfg.seed = parse_u64_value(key, value);
    } else if (key == "model") {
      if (value == "l63") cfg.model = ModelKind::Lorenz63;
      else if (value == "l96") cfg.model = ModelKind::Lorenz96;
      else throw config_error("key 'model': expected l63 or l96");
    } else if (key == "n_x") {
      cfg.n_x = static_cast<int>(parse_long_value(key, value));
    } else if (key == "l63_sigma") {
      cfg.l63_sigma = parse_double_value(key, value);
    } else if (key == "l63_rho") {
      cfg.l63_rho = parse_double_value(key, value);
    } else if (key == "l63_beta") {
      cfg.l63_beta = parse_double_value(key, value);
    } else if (key == "forcing") {
      cfg.forcing = parse_double_value(key, value);
    } else if (key == "eps") {
      cfg.eps = parse_double_value(key, value);
    } else if (key == "m") {
      cfg.m = static_cast<int>(parse_long_value(key, value));
    } else if (key == "dt") {
      cfg.dt = parse_double_value(key, value);
    } else if (key == "cycles") {
      cfg.cycles = parse_long_value(key, value);
    } else if (key == "n_inner") {
      cfg.n_inner = static_cast<int>(parse_long_value(key, value));
    } else if (key == "n_steps") {
      cfg.n_steps = parse_long_value(key, value);
    } else if (key == "n_j") {
      cfg.n_j = static_cast<int>(parse_long_value(key, value));
    } else if (key == "eps_list") {
      cfg.eps_list = parse_double_list(key, value);
    } else if (key == "lambda") {
      cfg.lambda = parse_double_value(key, value);
    } else if (key == "arms") {
      cfg.arms = parse_arm_grid(key, value);
    } else if (key == "alpha") {
      cfg.alpha = parse_double_value(key, value);
    } else if (key == "beta") {
      cfg.beta = parse_double_value(key, value);
    } else if (key == "gamma") {
      cfg.gamma = parse_double_value(key, value);
    } else if (key == "tau_corr") {
      cfg.tau_corr = parse_double_value(key, value);
    } else if (key == "ucb_coeff") {
      cfg.ucb_coeff = parse_double_value(key, value);
    } else if (key == "r_loc") {
      cfg.r_loc = parse_double_value(key, value);
    } else if (key == "inflation") {
      cfg.inflation = parse_double_value(key, value);
    } else if (key == "noise_amplitude") {
      cfg.noise_amplitude = parse_double_value(key, value);
    } else if (key == "floor") {
      cfg.floor = parse_double_value(key, value);
    } else if (key == "burn_in_frac") {
      cfg.burn_in_frac = parse_double_value(key, value);
    } else if (key == "divergence_rmse") {
      cfg.divergence_rmse = parse_double_value(key, value);
    } else if (key == "n_reps") {
      cfg.n_reps = static_cast<int>(parse_long_value(key, value));
    } else if (key == "observed_component") {
      cfg.observed_component = static_cast<int>(parse_long_value(key, value));
    } else if (key == "record_every") {
      cfg.record_every = parse_long_value(key, value);
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(parse_long_value(key, value));
    } else if (key == "write_runs") {
      cfg.write_runs = parse_bool_value(key, value);
    } else if (key == "paper_scale") {
      cfg.paper_scale = parse_bool_value(key, value);
    } else if (key == "bandit_pulls") {
      cfg.bandit_pulls = parse_long_value(key, value);
    } else if (key == "bandit_seeds") {
      cfg.bandit_seeds = static_cast<int>(parse_long_value(key, value));
    } else if (key == "bandit_means") {
      cfg.bandit_means = parse_double_list(key, value);
    } else {
      throw config_error("unknown key '" + key + "'");
    }
    seen.insert(key);
  };

  auto consume_line = [&assign](const std::string& raw_line) {
    std::string line = raw_line;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) return;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("malformed line (expected key = value): '" + line +
                         "'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw config_error("malformed line: empty key");
    assign(key, value);
  };

  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) consume_line(line);
  for (const auto& ov : overrides) consume_line(ov);

  // Dimension-driven defaults for anything not set explicitly.
  if (cfg.model == ModelKind::Lorenz63 && !seen.count("n_x")) cfg.n_x = 3;
  if (!seen.count("r_loc")) {
    cfg.r_loc =
        cfg.model == ModelKind::Lorenz63 ? 1.0 : default_r_loc(cfg.n_x);
  }
  if (cfg.arms.empty()) cfg.arms = default_arms(cfg.n_x);
  if (cfg.eps_list.empty()) cfg.eps_list = default_eps_list();

  if (cfg.paper_scale && kind == ExperimentKind::MseSweep) {
    if (!seen.count("dt")) cfg.dt = 5e-6;
    if (!seen.count("n_steps")) cfg.n_steps = 1000000;
    if (!seen.count("n_reps")) cfg.n_reps = 50;
  }

  // Invariants, each error naming its key.
  if (cfg.model == ModelKind::Lorenz63 && cfg.n_x != 3) {
    throw config_error("key 'n_x': l63 has exactly 3 components");
  }
  if (cfg.model == ModelKind::Lorenz96 && cfg.n_x < 4) {
    throw config_error("key 'n_x': l96 needs n_x >= 4");
  }
  if (!(cfg.eps > 0.0)) throw config_error("key 'eps': must be positive");
  if (cfg.m < 2) throw config_error("key 'm': ensemble size must be >= 2");
  if (!(cfg.dt > 0.0)) throw config_error("key 'dt': must be positive");
  if (cfg.cycles < 1) throw config_error("key 'cycles': must be >= 1");
  if (cfg.n_inner < 1) throw config_error("key 'n_inner': must be >= 1");
  if (cfg.n_steps < 1) throw config_error("key 'n_steps': must be >= 1");
  if (cfg.n_j < 0 || cfg.n_j > cfg.n_x) {
    throw config_error("key 'n_j': must be in [0, n_x]");
  }
  for (double e : cfg.eps_list) {
    if (!(e > 0.0)) throw config_error("key 'eps_list': entries must be positive");
  }
  if (!(cfg.lambda >= 0.0)) throw config_error("key 'lambda': must be >= 0");
  for (std::size_t i = 0; i < cfg.arms.size(); ++i) {
    if (cfg.arms[i] < 1 || cfg.arms[i] > cfg.n_x) {
      throw config_error("key 'arms': values must lie in [1, n_x]");
    }
    if (i > 0 && cfg.arms[i] <= cfg.arms[i - 1]) {
      throw config_error("key 'arms': values must be strictly increasing");
    }
  }
  if (!(cfg.alpha >= 0.0)) throw config_error("key 'alpha': must be >= 0");
  if (!(cfg.beta >= 0.0)) throw config_error("key 'beta': must be >= 0");
  if (!(cfg.gamma >= 0.0)) throw config_error("key 'gamma': must be >= 0");
  if (!(cfg.tau_corr > 0.0 && cfg.tau_corr < 1.0)) {
    throw config_error("key 'tau_corr': must be in (0,1)");
  }
  if (!(cfg.ucb_coeff > 0.0)) {
    throw config_error("key 'ucb_coeff': must be positive");
  }
  if (!(cfg.r_loc > 0.0)) throw config_error("key 'r_loc': must be positive");
  if (!(cfg.inflation >= 1.0)) {
    throw config_error("key 'inflation': must be >= 1");
  }
  if (!(cfg.noise_amplitude >= 0.0)) {
    throw config_error("key 'noise_amplitude': must be >= 0");
  }
  if (!(cfg.floor > 0.0)) throw config_error("key 'floor': must be positive");
  if (!(cfg.burn_in_frac >= 0.0 && cfg.burn_in_frac < 1.0)) {
    throw config_error("key 'burn_in_frac': must be in [0,1)");
  }
  if (!(cfg.divergence_rmse > 0.0)) {
    throw config_error("key 'divergence_rmse': must be positive");
  }
  if (cfg.n_reps < 1) throw config_error("key 'n_reps': must be >= 1");
  if (cfg.observed_component < 1 || cfg.observed_component > cfg.n_x) {
    throw config_error(
        "key 'observed_component': must be in [1, n_x] (1-based)");
  }
  if (cfg.record_every < 1) {
    throw config_error("key 'record_every': must be >= 1");
  }
  if (cfg.threads < 0) throw config_error("key 'threads': must be >= 0");
  if (cfg.bandit_pulls < 1) {
    throw config_error("key 'bandit_pulls': must be >= 1");
  }
  if (cfg.bandit_seeds < 1) {
    throw config_error("key 'bandit_seeds': must be >= 1");
  }
  for (double p : cfg.bandit_means) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw config_error("key 'bandit_means': entries must be in [0,1]");
    }
  }
  if (kind == ExperimentKind::Trajectory && cfg.model != ModelKind::Lorenz63) {
    throw config_error("key 'model': trajectory runs the l63 comparison");
  }
  if (kind == ExperimentKind::MseSweep && cfg.model != ModelKind::Lorenz63) {
    throw config_error("key 'model': mse-sweep runs on l63");
  }
  if (kind == ExperimentKind::LearnNj && cfg.model != ModelKind::Lorenz96) {
    throw config_error("key 'model': learn-nj runs on l96");
  }
  return cfg;
}

// The manifest is itself a parseable config: a rerun of the same subcommand
// with `--config manifest` reproduces the run byte for byte.
inline std::string render_manifest(const ExperimentConfig& cfg) {
  using detail::format_double_17;
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  };
  kv("experiment", to_string(cfg.kind));
  kv("rng", kRngName);
  kv("seed", std::to_string(cfg.seed));
  kv("model", cfg.model == ModelKind::Lorenz63 ? "l63" : "l96");
  kv("n_x", std::to_string(cfg.n_x));
  kv("l63_sigma", format_double_17(cfg.l63_sigma));
  kv("l63_rho", format_double_17(cfg.l63_rho));
  kv("l63_beta", format_double_17(cfg.l63_beta));
  kv("forcing", format_double_17(cfg.forcing));
  kv("eps", format_double_17(cfg.eps));
  kv("m", std::to_string(cfg.m));
  kv("dt", format_double_17(cfg.dt));
  kv("cycles", std::to_string(cfg.cycles));
  kv("n_inner", std::to_string(cfg.n_inner));
  kv("n_steps", std::to_string(cfg.n_steps));
  kv("n_j", std::to_string(cfg.n_j));
  kv("eps_list", detail::join_double_list(cfg.eps_list));
  kv("lambda", format_double_17(cfg.lambda));
  kv("arms", detail::render_arm_grid(cfg.arms));
  kv("alpha", format_double_17(cfg.alpha));
  kv("beta", format_double_17(cfg.beta));
  kv("gamma", format_double_17(cfg.gamma));
  kv("tau_corr", format_double_17(cfg.tau_corr));
  kv("ucb_coeff", format_double_17(cfg.ucb_coeff));
  kv("r_loc", format_double_17(cfg.r_loc));
  kv("inflation", format_double_17(cfg.inflation));
  kv("noise_amplitude", format_double_17(cfg.noise_amplitude));
  kv("floor", format_double_17(cfg.floor));
  kv("burn_in_frac", format_double_17(cfg.burn_in_frac));
  kv("divergence_rmse", format_double_17(cfg.divergence_rmse));
  kv("n_reps", std::to_string(cfg.n_reps));
  kv("observed_component", std::to_string(cfg.observed_component));
  kv("record_every", std::to_string(cfg.record_every));
  kv("threads", std::to_string(cfg.threads));
  kv("write_runs", cfg.write_runs ? "true" : "false");
  kv("paper_scale", cfg.paper_scale ? "true" : "false");
  kv("bandit_pulls", std::to_string(cfg.bandit_pulls));
  kv("bandit_seeds", std::to_string(cfg.bandit_seeds));
  kv("bandit_means", detail::join_double_list(cfg.bandit_means));
  return out;
}

}  // namespace randobs
