// Policy evaluation network: an MLP that maps a policy representation to a
// categorical distribution over return bins (or, for tabular policies, to a
// direct regression of the state values).
//
// Input representations:
//   fingerprint  policy outputs on learned probing states, concatenated
//   flatten      the raw flat parameter vector of the policy
//   tabular      the probability vector [P(a1|s1), ..., P(a1|sS)]
//
// Scalar estimate for the categorical head: J_hat = sum_i psi_i * midpoint_i.
// For the regression head: J_hat = weights . outputs (weights = d0).

#ifndef PVN_PVN_HPP_
#define PVN_PVN_HPP_

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvn/autodiff.hpp"
#include "pvn/dataset.hpp"
#include "pvn/error.hpp"
#include "pvn/mlp.hpp"
#include "pvn/optim.hpp"
#include "pvn/policy.hpp"
#include "pvn/rng.hpp"
#include "pvn/tensor.hpp"

namespace pvn {

enum class InputMode { fingerprint, flatten, tabular };
enum class PvnHead { categorical, regression };

inline std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::fingerprint: return "fingerprint";
    case InputMode::flatten: return "flatten";
    case InputMode::tabular: return "tabular";
  }
  return "?";
}

inline InputMode parse_input_mode(const std::string& s) {
  if (s == "fingerprint") return InputMode::fingerprint;
  if (s == "flatten") return InputMode::flatten;
  if (s == "tabular") return InputMode::tabular;
  throw ConfigError("unknown input mode '" + s + "'");
}

inline std::string to_string(PvnHead h) { return h == PvnHead::categorical ? "categorical" : "regression"; }

inline PvnHead parse_pvn_head(const std::string& s) {
  if (s == "categorical") return PvnHead::categorical;
  if (s == "regression") return PvnHead::regression;
  throw ConfigError("unknown PVN head '" + s + "'");
}

/// Floor applied to predicted probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

struct Pvn {
  InputMode mode = InputMode::fingerprint;
  PvnHead head = PvnHead::categorical;
  /// Network architecture; output width is the bin count (categorical) or the
  /// regression target width.
  MlpArch arch;
  std::vector<double> params;
  /// Fingerprint mode only.
  std::optional<ProbingStates> probes;
  /// Architecture of the policies being evaluated (fingerprint / flatten).
  MlpArch policy_arch;
  /// Categorical head only.
  BinSpec bins;
  /// Regression head only.
  std::vector<double> regression_weights;

  /// Width of the policy vector theta this PVN consumes.
  std::size_t policy_width() const {
    return mode == InputMode::tabular ? arch.input : policy_arch.param_count();
  }

  void validate() const {
    arch.validate();
    if (params.size() != arch.param_count()) throw ShapeError("PVN parameter count does not match architecture");
    switch (mode) {
      case InputMode::fingerprint:
        if (!probes) throw ShapeError("fingerprint PVN without probing states");
        check_probe_width(policy_arch, probes->width());
        if (arch.input != fingerprint_width(policy_arch, probes->count()))
          throw ShapeError("PVN input width does not match fingerprint width");
        break;
      case InputMode::flatten:
        if (arch.input != policy_arch.param_count()) throw ShapeError("PVN input width does not match |theta|");
        break;
      case InputMode::tabular:
        break;
    }
    if (head == PvnHead::categorical) {
      bins.validate();
      if (arch.head != OutputHead::softmax || arch.output != bins.m)
        throw ShapeError("categorical PVN needs a softmax head with one output per bin");
    } else {
      if (arch.head != OutputHead::linear) throw ShapeError("regression PVN needs a linear head");
      if (regression_weights.size() != arch.output) throw ShapeError("regression weights do not match output width");
    }
  }
};

struct PvnSpec {
  InputMode mode = InputMode::fingerprint;
  PvnHead head = PvnHead::categorical;
  std::vector<std::size_t> hidden{80};
  Activation activation = Activation::relu;
  MlpArch policy_arch;
  /// Tabular mode: width of the policy vector.
  std::size_t tabular_width = 2;
  BinSpec bins;
  std::vector<double> regression_weights;
  std::size_t num_probes = 20;
  ProbeInit probe_init = ProbeInit::normal;
};

/// Fresh PVN: Glorot weights from derive_seed(seed, {0}), probes from derive_seed(seed, {1}).
inline Pvn make_pvn(const PvnSpec& spec, std::uint64_t seed) {
  Pvn p;
  p.mode = spec.mode;
  p.head = spec.head;
  p.policy_arch = spec.policy_arch;
  p.bins = spec.bins;
  p.regression_weights = spec.regression_weights;
  std::size_t input = 0;
  switch (spec.mode) {
    case InputMode::fingerprint:
      p.probes = init_probes(spec.num_probes, spec.policy_arch.input, derive_seed(seed, {1}), spec.probe_init);
      input = fingerprint_width(spec.policy_arch, spec.num_probes);
      break;
    case InputMode::flatten:
      input = spec.policy_arch.param_count();
      break;
    case InputMode::tabular:
      input = spec.tabular_width;
      break;
  }
  if (spec.head == PvnHead::categorical) {
    p.arch = MlpArch{input, spec.hidden, spec.bins.m, spec.activation, OutputHead::softmax, 1.0};
  } else {
    p.arch = MlpArch{input, spec.hidden, spec.regression_weights.size(), spec.activation, OutputHead::linear, 1.0};
  }
  p.arch.validate();
  p.params = glorot_init_params(p.arch, derive_seed(seed, {0}));
  p.validate();
  return p;
}

/// The PVN input row for policy vector `theta`, differentiable in both the
/// policy and the probes when they are graph leaves.
inline Var pvn_input(const Pvn& pvn, Var theta, std::optional<Var> probes) {
  const std::size_t n = theta.graph->value(theta).size();
  if (n != pvn.policy_width()) {
    throw ShapeError("policy vector has " + std::to_string(n) + " values, PVN expects " +
                     std::to_string(pvn.policy_width()));
  }
  if (pvn.mode == InputMode::fingerprint) {
    if (!probes) throw ShapeError("fingerprint PVN needs probes");
    return fingerprint(theta, pvn.policy_arch, *probes);
  }
  return reshape(theta, {1, n});
}

inline Tensor pvn_input(const Pvn& pvn, std::span<const double> theta) {
  if (theta.size() != pvn.policy_width()) {
    throw ShapeError("policy vector has " + std::to_string(theta.size()) + " values, PVN expects " +
                     std::to_string(pvn.policy_width()));
  }
  std::vector<double> t(theta.begin(), theta.end());
  if (pvn.mode == InputMode::fingerprint) {
    return fingerprint(MlpPolicy{pvn.policy_arch, std::move(t)}, *pvn.probes);
  }
  const std::size_t n = t.size();
  return Tensor({1, n}, std::move(t));
}

/// Network output for one policy: bin probabilities or regression values.
inline std::vector<double> predict_distribution(const Pvn& pvn, std::span<const double> theta) {
  return mlp_forward(Tensor::vector(pvn.params), pvn.arch, pvn_input(pvn, theta)).values();
}

/// Outputs for a batch of policies, one row each.
inline Tensor predict_batch(const Pvn& pvn, std::span<const std::vector<double>> thetas) {
  std::vector<Tensor> rows;
  rows.reserve(thetas.size());
  for (const auto& t : thetas) rows.push_back(pvn_input(pvn, t));
  return mlp_forward(Tensor::vector(pvn.params), pvn.arch, concat_rows(rows));
}

/// Midpoint estimate sum_i mass_i * (g_min + h/2 + i h).
inline double j_hat_from_mass(const BinSpec& bins, std::span<const double> mass) {
  if (mass.size() != bins.m) throw ShapeError("mass vector does not match bin count");
  double s = 0.0;
  for (std::size_t i = 0; i < bins.m; ++i) s += mass[i] * bins.midpoint(i);
  return s;
}

/// Weights that turn the network output into J_hat.
inline std::vector<double> j_hat_weights(const Pvn& pvn) {
  return pvn.head == PvnHead::categorical ? pvn.bins.midpoints() : pvn.regression_weights;
}

inline double j_hat(const Pvn& pvn, std::span<const double> theta) {
  const auto out = predict_distribution(pvn, theta);
  const auto w = j_hat_weights(pvn);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
  return s;
}

/// J_hat and dJ_hat/dtheta, with the network weights and probes held fixed.
inline std::pair<double, std::vector<double>> j_hat_and_grad(const Pvn& pvn, std::span<const double> theta) {
  Graph g;
  Var th = g.leaf(Tensor::vector(std::vector<double>(theta.begin(), theta.end())));
  std::optional<Var> probes;
  if (pvn.probes) probes = g.constant(pvn.probes->states);
  Var w = g.constant(Tensor::vector(pvn.params));
  Var out = mlp_forward(w, pvn.arch, pvn_input(pvn, th, probes));
  Var j = sum(mul(out, Tensor({1, pvn.arch.output}, j_hat_weights(pvn))));
  g.backward(j);
  return {g.value(j).item(), g.grad(th).values()};
}

/// KL(target || predicted) = sum_i t_i log(t_i / p_i), with 0 log 0 = 0.
inline double kl_loss(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw ShapeError("kl_loss: predicted and target differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] <= 0.0) continue;
    if (!(predicted[i] > 0.0)) throw NumericalError("kl_loss: zero predicted mass where the target has mass");
    s += target[i] * std::log(target[i] / predicted[i]);
  }
  return s;
}

/// Mean over rows of KL(target_row || predicted_row). `predicted` holds
/// probabilities (one distribution per row); they are floored at 1e-12 before
/// the log.
inline Var kl_loss(Var predicted, const Tensor& target) {
  Graph& g = *predicted.graph;
  const Tensor& pv = g.value(predicted);
  if (pv.size() != target.size()) throw ShapeError("kl_loss: predicted and target differ in size");
  Tensor neg_target = target;
  double entropy_term = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] > 0.0) entropy_term += target[i] * std::log(target[i]);
    neg_target[i] = -target[i];
  }
  const double rows = static_cast<double>(pv.rows());
  Var cross = sum(mul(log_floor(predicted, kProbabilityFloor), neg_target));
  Var total = add(cross, g.constant(Tensor::scalar(entropy_term)));
  return scale(total, 1.0 / rows);
}

/// Mean squared error over every entry.
inline Var mse_loss(Var predicted, const Tensor& target) {
  Graph& g = *predicted.graph;
  const double n = static_cast<double>(target.size());
  Var diff = sub(predicted, g.constant(reshape(target, g.value(predicted).shape())));
  return scale(sum(square(diff)), 1.0 / n);
}

/// One training pair: a policy vector and its target (bin masses or values).
struct TrainExample {
  std::vector<double> theta;
  std::vector<double> target;
};

/// Histogram targets recomputed from the raw returns with the given bins.
inline std::vector<TrainExample> histogram_examples(std::span<const PolicyRecord> records, const BinSpec& bins) {
  std::vector<TrainExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({flatten(r.policy), discretize(r.returns, bins).mass});
  return out;
}

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t steps = 3000;
  OptimizerConfig optimizer{OptimizerKind::adam, 0.003};
  bool train_probes = true;
  /// Test loss is evaluated every `eval_every` steps (and after the last step).
  std::size_t eval_every = 100;
};

struct TrainReport {
  /// Mean batch loss before each update (KL for categorical, MSE for regression).
  std::vector<double> train_loss;
  /// (step, full test-set loss) pairs; step s means "after s updates".
  std::vector<std::pair<std::size_t, double>> test_loss;
  double wall_seconds = 0.0;
};

/// Loss of `pvn` over a full set of examples, without building a graph.
inline double dataset_loss(const Pvn& pvn, std::span<const TrainExample> examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) {
    const auto out = predict_distribution(pvn, ex.theta);
    if (pvn.head == PvnHead::categorical) {
      std::vector<double> floored = out;
      for (double& v : floored) v = std::max(v, kProbabilityFloor);
      total += kl_loss(floored, ex.target);
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += (out[i] - ex.target[i]) * (out[i] - ex.target[i]);
      total += s / static_cast<double>(out.size());
    }
  }
  return total / static_cast<double>(examples.size());
}

/// Minimizes the expected loss over minibatches sampled with replacement.
/// The network weights and (when `train_probes`) the probing states take
/// separate optimizer steps on the same loss.
inline TrainReport train(Pvn& pvn, std::span<const TrainExample> train_set, std::span<const TrainExample> test_set,
                         const TrainConfig& config, std::uint64_t seed) {
  if (train_set.empty()) throw DataError("empty dataset");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  pvn.validate();
  for (const auto& ex : train_set)
    if (ex.target.size() != pvn.arch.output) throw ShapeError("training target width does not match PVN output");

  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  OptimizerState w_opt(config.optimizer, pvn.params.size());
  const bool update_probes = config.train_probes && pvn.probes.has_value();
  std::optional<OptimizerState> probe_opt;
  if (update_probes) probe_opt.emplace(config.optimizer, pvn.probes->states.size());

  TrainReport report;
  report.train_loss.reserve(config.steps);
  auto record_test = [&](std::size_t step) {
    if (!test_set.empty()) report.test_loss.emplace_back(step, dataset_loss(pvn, test_set));
  };
  record_test(0);

  const std::size_t out_width = pvn.arch.output;
  for (std::size_t step = 0; step < config.steps; ++step) {
    Graph g;
    Var w = g.leaf(Tensor::vector(pvn.params));
    std::optional<Var> probes;
    if (pvn.probes) probes = update_probes ? g.leaf(pvn.probes->states) : g.constant(pvn.probes->states);

    std::vector<Var> rows;
    rows.reserve(config.batch_size);
    std::vector<double> targets;
    targets.reserve(config.batch_size * out_width);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const TrainExample& ex = train_set[rng.below(train_set.size())];
      rows.push_back(pvn_input(pvn, g.constant(Tensor::vector(ex.theta)), probes));
      targets.insert(targets.end(), ex.target.begin(), ex.target.end());
    }
    Var out = mlp_forward(w, pvn.arch, concat_rows(rows));
    const Tensor target({config.batch_size, out_width}, std::move(targets));
    Var loss = pvn.head == PvnHead::categorical ? kl_loss(out, target) : mse_loss(out, target);
    const double loss_value = g.value(loss).item();
    if (!std::isfinite(loss_value)) throw NumericalError("training loss became non-finite at step " + std::to_string(step));
    report.train_loss.push_back(loss_value);

    g.backward(loss);
    w_opt.step(pvn.params, g.grad(w).data());
    if (update_probes) probe_opt->step(pvn.probes->states.data(), g.grad(*probes).data());

    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 != config.steps) record_test(step + 1);
  }
  if (config.steps > 0) record_test(config.steps);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Deterministic split into (train, test) with ceil(test_fraction * n) test
/// items chosen by a seeded shuffle; original order is kept within each part.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(std::span<const T> items, double test_fraction,
                                                           std::uint64_t seed) {
  const std::size_t n = items.size();
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < std::min(n_test, n); ++i) is_test[order[i]] = true;
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? out.second : out.first).push_back(items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints:
//   {"mode", "head", "arch", "policy_arch", "bins", "regression_weights",
//    "params", "probes": {"rows","cols","data"} | null, "training", "seed"}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"steps", c.steps},
          {"optimizer", to_string(c.optimizer.kind)},
          {"learning_rate", c.optimizer.learning_rate},
          {"train_probes", c.train_probes},
          {"eval_every", c.eval_every}};
}

inline nlohmann::json pvn_to_json(const Pvn& p, const TrainConfig& training, std::uint64_t seed) {
  nlohmann::json j;
  j["mode"] = to_string(p.mode);
  j["head"] = to_string(p.head);
  j["arch"] = arch_to_json(p.arch);
  j["policy_arch"] = arch_to_json(p.policy_arch);
  j["policy_temperature"] = p.policy_arch.temperature;
  j["bins"] = {{"m", p.bins.m}, {"g_min", p.bins.g_min}, {"g_max", p.bins.g_max}};
  j["regression_weights"] = p.regression_weights;
  j["params"] = p.params;
  if (p.probes) {
    j["probes"] = {{"rows", p.probes->count()}, {"cols", p.probes->width()}, {"data", p.probes->states.values()}};
  } else {
    j["probes"] = nullptr;
  }
  j["training"] = train_config_to_json(training);
  j["seed"] = seed;
  return j;
}

inline Pvn pvn_from_json(const nlohmann::json& j) {
  try {
    Pvn p;
    p.mode = parse_input_mode(j.at("mode").get<std::string>());
    p.head = parse_pvn_head(j.at("head").get<std::string>());
    p.arch = arch_from_json(j.at("arch"), 1.0);
    p.policy_arch = arch_from_json(j.at("policy_arch"), j.at("policy_temperature").get<double>());
    const auto& b = j.at("bins");
    p.bins = BinSpec{b.at("m").get<std::size_t>(), b.at("g_min").get<double>(), b.at("g_max").get<double>()};
    p.regression_weights = j.at("regression_weights").get<std::vector<double>>();
    p.params = j.at("params").get<std::vector<double>>();
    if (!j.at("probes").is_null()) {
      const auto& pr = j.at("probes");
      p.probes = ProbingStates{Tensor({pr.at("rows").get<std::size_t>(), pr.at("cols").get<std::size_t>()},
                                      pr.at("data").get<std::vector<double>>())};
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("inconsistent checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Pvn& p, const TrainConfig& training, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingInputError("cannot write " + path);
  os << pvn_to_json(p, training, seed).dump(1) << '\n';
}

inline Pvn load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("checkpoint not found: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  return pvn_from_json(j);
}

}  // namespace pvn

#endif  // PVN_PVN_HPP_
