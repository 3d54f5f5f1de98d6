// Experiment configuration: a flat `key = value` text format, named profiles
// holding the default hyperparameters of each experiment, and validation.
//
// Lists are comma separated ("30,30"); an empty list is written "[]".
// Lines starting with '#' are comments.

#ifndef PVN_CONFIG_HPP_
#define PVN_CONFIG_HPP_

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pvn/error.hpp"
#include "pvn/mlp.hpp"
#include "pvn/optim.hpp"
#include "pvn/policy.hpp"
#include "pvn/pvn.hpp"

namespace pvn {

struct ExperimentConfig {
  std::string profile = "cartpole-linear";
  std::uint64_t seed = 0;
  std::string out = "out";
  std::size_t jobs = 1;

  // Policies.
  std::vector<std::size_t> policy_hidden;
  Activation activation = Activation::relu;
  double temperature = 3.0;
  std::size_t max_steps = 100;

  // Dataset.
  std::size_t num_policies = 1000;
  std::size_t returns_per_policy = 100;
  double return_limit = 30.0;
  std::size_t bins = 41;

  // PVN.
  InputMode pvn_mode = InputMode::fingerprint;
  std::vector<std::size_t> pvn_hidden{80};
  OptimizerKind pvn_optimizer = OptimizerKind::adam;
  double pvn_lr = 0.003;
  std::size_t batch_size = 32;
  std::size_t train_steps = 3000;
  std::size_t eval_every = 100;
  double test_fraction = 0.1;
  bool train_probes = true;
  std::size_t num_probes = 20;
  ProbeInit probe_init = ProbeInit::normal;

  // Ascent.
  OptimizerKind ascent_optimizer = OptimizerKind::adam;
  double ascent_lr = 0.001;
  std::size_t ascent_steps = 100;
  std::size_t ascent_restarts = 5;
  std::size_t eval_rollouts = 1;
  std::size_t final_eval_rollouts = 200;
  std::size_t patience = 0;

  // Polytope.
  double gamma = 0.8;
  std::vector<double> d0{0.5, 0.5};
  std::size_t polytope_count = 40;
  std::size_t polytope_train = 20;
  std::size_t grid = 11;
  std::vector<double> start_policy{0.5, 0.0};

  // Files; empty means the default location under `out`.
  std::string dataset;
  std::string checkpoint;
  std::string traces;
  bool svg = true;

  std::string dataset_path() const { return dataset.empty() ? out + "/dataset.jsonl" : dataset; }
  std::string checkpoint_path() const { return checkpoint.empty() ? out + "/checkpoint.json" : checkpoint; }
  std::string traces_path() const { return traces.empty() ? out + "/traces.csv" : traces; }

  MlpArch policy_architecture() const {
    return policy_arch(4, policy_hidden, 2, temperature, activation);
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno != 0 || std::isnan(v)) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::string t = trim(s);
  if (!t.empty() && t.front() == '[' && t.back() == ']') t = t.substr(1, t.size() - 2);
  std::vector<std::string> out;
  if (trim(t).empty()) return out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) out.push_back(parse_uint(key, item));
  return out;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_double(key, item));
  return out;
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  if (v.empty()) return "[]";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define PVN_UINT_FIELD(name)                                                                     \
  {#name, Field{[](ExperimentConfig& c, const std::string& v) { c.name = parse_uint(#name, v); }, \
                [](const ExperimentConfig& c) { return std::to_string(c.name); }}}
#define PVN_DOUBLE_FIELD(name)                                                                     \
  {#name, Field{[](ExperimentConfig& c, const std::string& v) { c.name = parse_double(#name, v); }, \
                [](const ExperimentConfig& c) { return fmt_double(c.name); }}}
#define PVN_STRING_FIELD(name)                                                               \
  {#name, Field{[](ExperimentConfig& c, const std::string& v) { c.name = trim(v); }, \
                [](const ExperimentConfig& c) { return c.name; }}}
#define PVN_BOOL_FIELD(name)                                                                     \
  {#name, Field{[](ExperimentConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
                [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); }}}
#define PVN_SIZE_LIST_FIELD(name)                                                                     \
  {#name, Field{[](ExperimentConfig& c, const std::string& v) { c.name = parse_size_list(#name, v); }, \
                [](const ExperimentConfig& c) { return fmt_list(c.name); }}}
#define PVN_DOUBLE_LIST_FIELD(name)                                                                     \
  {#name, Field{[](ExperimentConfig& c, const std::string& v) { c.name = parse_double_list(#name, v); }, \
                [](const ExperimentConfig& c) { return fmt_list(c.name); }}}

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      PVN_STRING_FIELD(profile),
      PVN_UINT_FIELD(seed),
      PVN_STRING_FIELD(out),
      PVN_UINT_FIELD(jobs),
      PVN_SIZE_LIST_FIELD(policy_hidden),
      {"activation", Field{[](ExperimentConfig& c, const std::string& v) { c.activation = parse_activation(trim(v)); },
                           [](const ExperimentConfig& c) { return to_string(c.activation); }}},
      PVN_DOUBLE_FIELD(temperature),
      PVN_UINT_FIELD(max_steps),
      PVN_UINT_FIELD(num_policies),
      PVN_UINT_FIELD(returns_per_policy),
      PVN_DOUBLE_FIELD(return_limit),
      PVN_UINT_FIELD(bins),
      {"pvn_mode", Field{[](ExperimentConfig& c, const std::string& v) { c.pvn_mode = parse_input_mode(trim(v)); },
                         [](const ExperimentConfig& c) { return to_string(c.pvn_mode); }}},
      PVN_SIZE_LIST_FIELD(pvn_hidden),
      {"pvn_optimizer",
       Field{[](ExperimentConfig& c, const std::string& v) { c.pvn_optimizer = parse_optimizer(trim(v)); },
             [](const ExperimentConfig& c) { return to_string(c.pvn_optimizer); }}},
      PVN_DOUBLE_FIELD(pvn_lr),
      PVN_UINT_FIELD(batch_size),
      PVN_UINT_FIELD(train_steps),
      PVN_UINT_FIELD(eval_every),
      PVN_DOUBLE_FIELD(test_fraction),
      PVN_BOOL_FIELD(train_probes),
      PVN_UINT_FIELD(num_probes),
      {"probe_init", Field{[](ExperimentConfig& c, const std::string& v) { c.probe_init = parse_probe_init(trim(v)); },
                           [](const ExperimentConfig& c) { return to_string(c.probe_init); }}},
      {"ascent_optimizer",
       Field{[](ExperimentConfig& c, const std::string& v) { c.ascent_optimizer = parse_optimizer(trim(v)); },
             [](const ExperimentConfig& c) { return to_string(c.ascent_optimizer); }}},
      PVN_DOUBLE_FIELD(ascent_lr),
      PVN_UINT_FIELD(ascent_steps),
      PVN_UINT_FIELD(ascent_restarts),
      PVN_UINT_FIELD(eval_rollouts),
      PVN_UINT_FIELD(final_eval_rollouts),
      PVN_UINT_FIELD(patience),
      PVN_DOUBLE_FIELD(gamma),
      PVN_DOUBLE_LIST_FIELD(d0),
      PVN_UINT_FIELD(polytope_count),
      PVN_UINT_FIELD(polytope_train),
      PVN_UINT_FIELD(grid),
      PVN_DOUBLE_LIST_FIELD(start_policy),
      PVN_STRING_FIELD(dataset),
      PVN_STRING_FIELD(checkpoint),
      PVN_STRING_FIELD(traces),
      PVN_BOOL_FIELD(svg),
  };
  return table;
}

#undef PVN_UINT_FIELD
#undef PVN_DOUBLE_FIELD
#undef PVN_STRING_FIELD
#undef PVN_BOOL_FIELD
#undef PVN_SIZE_LIST_FIELD
#undef PVN_DOUBLE_LIST_FIELD

}  // namespace config_detail

/// Hyperparameter defaults of a named experiment.
inline ExperimentConfig profile_defaults(const std::string& name) {
  ExperimentConfig c;
  c.profile = name;
  if (name == "cartpole-linear") return c;
  if (name == "cartpole-mlp") {
    c.policy_hidden = {30};
    c.ascent_steps = 400;
    return c;
  }
  if (name == "polytope") {
    c.pvn_mode = InputMode::tabular;
    c.pvn_hidden = {50};
    c.pvn_optimizer = OptimizerKind::rmsprop;
    c.pvn_lr = 0.01;
    c.train_steps = 20000;
    c.eval_every = 500;
    c.ascent_optimizer = OptimizerKind::sgd;
    c.ascent_lr = 0.1;
    c.ascent_steps = 100;
    c.gamma = 0.8;
    c.train_probes = false;
    return c;
  }
  throw ConfigError("unknown profile '" + name + "' (expected polytope, cartpole-linear or cartpole-mlp)");
}

inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const auto& table = config_detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second.set(c, value);
}

inline std::string get_config_value(const ExperimentConfig& c, const std::string& key) {
  const auto& table = config_detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second.get(c);
}

/// Splits "key=value"; throws on a missing '='.
inline std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
  return {config_detail::trim(line.substr(0, eq)), config_detail::trim(line.substr(eq + 1))};
}

/// Parses config text into assignments, in file order.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string t = config_detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      out.push_back(split_assignment(t));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  profile_defaults(c.profile);
  require(c.jobs >= 1, "jobs must be >= 1");
  for (std::size_t h : c.policy_hidden) require(h >= 1, "policy_hidden widths must be >= 1");
  for (std::size_t h : c.pvn_hidden) require(h >= 1, "pvn_hidden widths must be >= 1");
  require(c.temperature > 0.0 && std::isfinite(c.temperature), "temperature must be a positive number");
  require(c.max_steps >= 1, "max_steps must be >= 1");
  require(c.num_policies >= 1, "num_policies must be >= 1");
  require(c.returns_per_policy >= 1, "returns_per_policy must be >= 1");
  require(!std::isnan(c.return_limit), "return_limit must be a number");
  require(c.bins >= 1, "bins must be >= 1");
  require(c.pvn_lr > 0.0 && std::isfinite(c.pvn_lr), "pvn_lr must be positive");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.test_fraction >= 0.0 && c.test_fraction < 1.0, "test_fraction must lie in [0, 1)");
  require(c.num_probes >= 1, "num_probes must be >= 1");
  require(c.ascent_lr > 0.0 && std::isfinite(c.ascent_lr), "ascent_lr must be positive");
  require(c.ascent_restarts >= 1, "ascent_restarts must be >= 1");
  require(c.eval_rollouts >= 1, "eval_rollouts must be >= 1");
  require(c.final_eval_rollouts >= 1, "final_eval_rollouts must be >= 1");
  require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must lie in [0, 1)");
  require(c.d0.size() == 2, "d0 must list one probability per state of the two-state MDP");
  double total = 0.0;
  for (double v : c.d0) {
    require(v >= 0.0, "d0 entries must be non-negative");
    total += v;
  }
  require(std::abs(total - 1.0) <= 1e-12, "d0 must sum to 1");
  require(c.polytope_count >= 2, "polytope_count must be >= 2");
  require(c.polytope_train >= 1 && c.polytope_train < c.polytope_count,
          "polytope_train must be >= 1 and below polytope_count");
  require(c.grid >= 1, "grid must be >= 1");
  require(c.start_policy.size() == 2, "start_policy must have two entries");
  for (double v : c.start_policy) require(v >= 0.0 && v <= 1.0, "start_policy entries must lie in [0, 1]");
  require(!c.out.empty(), "out must not be empty");
}

/// Applies assignments on top of the profile they select. The profile is
/// taken from the last `profile` assignment (or `default_profile`), then every
/// other assignment is applied in order, so later values win.
inline ExperimentConfig build_config(const std::vector<std::pair<std::string, std::string>>& assignments,
                                     const std::string& default_profile) {
  std::string profile = default_profile;
  for (const auto& [k, v] : assignments)
    if (k == "profile") profile = config_detail::trim(v);
  ExperimentConfig c = profile_defaults(profile);
  for (const auto& [k, v] : assignments)
    if (k != "profile") set_config_value(c, k, v);
  validate(c);
  return c;
}

/// Every key in sorted order, one `key = value` per line.
inline std::string emit_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [key, field] : config_detail::fields()) out += key + " = " + field.get(c) + "\n";
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("file not found: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace pvn

#endif  // PVN_CONFIG_HPP_
