// Policy networks, their flattened parameter view, and network fingerprints:
// the concatenated policy outputs on a set of learned probing states.

#ifndef PVN_POLICY_HPP_
#define PVN_POLICY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvn/autodiff.hpp"
#include "pvn/error.hpp"
#include "pvn/mlp.hpp"
#include "pvn/rng.hpp"
#include "pvn/tensor.hpp"

namespace pvn {

struct MlpPolicy {
  MlpArch arch;
  std::vector<double> params;

  static MlpPolicy glorot(const MlpArch& arch, std::uint64_t seed) {
    return MlpPolicy{arch, glorot_init_params(arch, seed)};
  }

  void validate() const {
    arch.validate();
    if (params.size() != arch.param_count()) {
      throw ShapeError("policy has " + std::to_string(params.size()) + " parameters, architecture needs " +
                       std::to_string(arch.param_count()));
    }
  }

  /// Action distribution (softmax head) or action vector (linear head) for one state.
  std::vector<double> act(std::span<const double> state) const {
    const Tensor out = mlp_forward(Tensor::vector(params), arch,
                                   Tensor::vector(std::vector<double>(state.begin(), state.end())));
    return out.values();
  }

  friend bool operator==(const MlpPolicy&, const MlpPolicy&) = default;
};

/// The policy architecture for a softmax policy over discrete actions.
inline MlpArch policy_arch(std::size_t state_dim, std::vector<std::size_t> hidden, std::size_t num_actions,
                           double temperature, Activation activation = Activation::relu) {
  MlpArch a{state_dim, std::move(hidden), num_actions, activation, OutputHead::softmax, temperature};
  a.validate();
  return a;
}

/// Parameters in the frozen layer-major order (see mlp.hpp).
inline std::vector<double> flatten(const MlpPolicy& policy) { return policy.params; }

inline MlpPolicy unflatten(const MlpArch& arch, std::vector<double> params) {
  MlpPolicy p{arch, std::move(params)};
  p.validate();
  return p;
}

/// n x k matrix of synthetic input states.
struct ProbingStates {
  Tensor states;

  std::size_t count() const noexcept { return states.rows(); }
  std::size_t width() const noexcept { return states.cols(); }
};

enum class ProbeInit { normal, uniform };

inline ProbeInit parse_probe_init(const std::string& s) {
  if (s == "normal") return ProbeInit::normal;
  if (s == "uniform") return ProbeInit::uniform;
  throw ConfigError("unknown probe initialization '" + s + "'");
}

inline std::string to_string(ProbeInit p) { return p == ProbeInit::normal ? "normal" : "uniform"; }

/// i.i.d. standard normal (or uniform in [-1, 1]) probing states.
inline ProbingStates init_probes(std::size_t n, std::size_t k, std::uint64_t seed,
                                 ProbeInit distribution = ProbeInit::normal) {
  if (n == 0 || k == 0) throw ShapeError("probing states need n >= 1 and k >= 1");
  Rng rng(seed);
  Tensor t = Tensor::zeros({n, k});
  for (double& v : t.data()) v = distribution == ProbeInit::normal ? rng.normal() : rng.uniform(-1.0, 1.0);
  return ProbingStates{std::move(t)};
}

/// Probing states copied from observed environment states, drawn without
/// replacement when enough are available.
inline ProbingStates probes_from_states(std::span<const std::vector<double>> observed, std::size_t n,
                                        std::uint64_t seed) {
  if (observed.empty() || n == 0) throw DataError("need observed states to build probes");
  const std::size_t k = observed.front().size();
  std::vector<std::size_t> order(observed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  Tensor t = Tensor::zeros({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = observed[order[i % order.size()]];
    if (s.size() != k) throw ShapeError("observed states have inconsistent widths");
    for (std::size_t j = 0; j < k; ++j) t.at(i, j) = s[j];
  }
  return ProbingStates{std::move(t)};
}

inline void check_probe_width(const MlpArch& arch, std::size_t width) {
  if (width != arch.input) {
    throw ShapeError("probe width " + std::to_string(width) + " does not match policy input width " +
                     std::to_string(arch.input));
  }
}

/// Policy outputs on every probe, concatenated in probe order into a
/// 1 x (n * outputs) row.
inline Tensor fingerprint(const MlpPolicy& policy, const ProbingStates& probes) {
  check_probe_width(policy.arch, probes.width());
  const Tensor out = mlp_forward(Tensor::vector(policy.params), policy.arch, probes.states);
  return reshape(out, {1, out.size()});
}

/// Differentiable fingerprint: `params` is the flat policy vector and `probes`
/// the n x k probe matrix; either may be a leaf.
inline Var fingerprint(Var params, const MlpArch& arch, Var probes) {
  const std::size_t rows = probes.graph->value(probes).rows();
  check_probe_width(arch, probes.graph->value(probes).cols());
  Var out = mlp_forward(params, arch, probes);
  return reshape(out, {1, rows * arch.output});
}

inline std::size_t fingerprint_width(const MlpArch& arch, std::size_t num_probes) {
  return arch.output * num_probes;
}

// JSON: {"arch": {...}, "temperature": T, "params": [...]}

inline nlohmann::json arch_to_json(const MlpArch& a) {
  return {{"input", a.input},
          {"hidden", a.hidden},
          {"output", a.output},
          {"activation", to_string(a.activation)},
          {"head", to_string(a.head)}};
}

inline MlpArch arch_from_json(const nlohmann::json& j, double temperature = 1.0) {
  MlpArch a;
  a.input = j.at("input").get<std::size_t>();
  a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  a.output = j.at("output").get<std::size_t>();
  a.activation = parse_activation(j.at("activation").get<std::string>());
  a.head = parse_output_head(j.value("head", std::string("softmax")));
  a.temperature = temperature;
  a.validate();
  return a;
}

inline nlohmann::json policy_to_json(const MlpPolicy& p) {
  return {{"arch", arch_to_json(p.arch)}, {"temperature", p.arch.temperature}, {"params", p.params}};
}

inline MlpPolicy policy_from_json(const nlohmann::json& j) {
  MlpPolicy p;
  p.arch = arch_from_json(j.at("arch"), j.at("temperature").get<double>());
  p.params = j.at("params").get<std::vector<double>>();
  p.validate();
  return p;
}

}  // namespace pvn

#endif  // PVN_POLICY_HPP_
