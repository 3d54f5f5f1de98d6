// Policy datasets: random policies paired with sampled Monte-Carlo returns,
// equal-width return histograms, and the training-set return cap.

#ifndef PVN_DATASET_HPP_
#define PVN_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvn/cartpole.hpp"
#include "pvn/error.hpp"
#include "pvn/parallel.hpp"
#include "pvn/policy.hpp"
#include "pvn/rng.hpp"
#include "pvn/tabular.hpp"

namespace pvn {

template <class Policy>
struct BasicRecord {
  Policy policy;
  std::vector<double> returns;
  double mean_return = 0.0;
};

using PolicyRecord = BasicRecord<MlpPolicy>;

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Equal-width bins over [g_min, g_max].
struct BinSpec {
  std::size_t m = 1;
  double g_min = 0.0;
  double g_max = 1.0;

  double width() const { return (g_max - g_min) / static_cast<double>(m); }
  double midpoint(std::size_t i) const { return g_min + width() / 2.0 + static_cast<double>(i) * width(); }

  std::vector<double> midpoints() const {
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = midpoint(i);
    return out;
  }

  /// Bin i covers [g_min + i h, g_min + (i+1) h); the last bin is closed
  /// above and values outside the range clamp to the edge bins.
  std::size_t bin_of(double g) const {
    if (!(g > g_min)) return 0;
    const auto i = static_cast<std::size_t>(std::floor((g - g_min) / width()));
    return std::min(i, m - 1);
  }

  void validate() const {
    if (m < 1) throw DataError("histogram needs at least one bin");
    if (!(g_max > g_min) || !std::isfinite(g_min) || !std::isfinite(g_max)) {
      throw DataError("histogram range needs g_max > g_min");
    }
  }

  friend bool operator==(const BinSpec&, const BinSpec&) = default;
};

struct ReturnHistogram {
  BinSpec bins;
  std::vector<double> mass;
};

inline ReturnHistogram discretize(std::span<const double> returns, const BinSpec& bins) {
  bins.validate();
  if (returns.empty()) throw DataError("cannot build a histogram from an empty return list");
  ReturnHistogram h{bins, std::vector<double>(bins.m, 0.0)};
  for (double g : returns) h.mass[bins.bin_of(g)] += 1.0;
  const double total = static_cast<double>(returns.size());
  for (double& v : h.mass) v /= total;
  return h;
}

inline ReturnHistogram discretize(std::span<const double> returns, std::size_t m, double g_min, double g_max) {
  return discretize(returns, BinSpec{m, g_min, g_max});
}

/// Smallest and largest return over every record.
template <class Policy>
std::pair<double, double> observed_range(std::span<const BasicRecord<Policy>> records) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : records)
    for (double g : r.returns) {
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
  if (!(hi >= lo)) throw DataError("empty dataset");
  return {lo, hi};
}

/// Episodic cart-pole with randomly initialized MLP policies.
struct CartPoleEnv {
  using Policy = MlpPolicy;

  MlpArch arch;
  std::size_t max_steps = kDefaultEpisodeCap;

  static constexpr const char* name() { return "cartpole"; }
  Policy init_policy(std::uint64_t seed) const { return MlpPolicy::glorot(arch, seed); }
  double rollout(const Policy& p, std::uint64_t seed) const {
    return cartpole_rollout(p, seed, max_steps).undiscounted_return;
  }
};

/// Tabular MDP with policies drawn uniformly from the probability simplex of
/// each state (uniform on [0,1] per state for two actions). Returns are discounted.
struct TabularEnv {
  using Policy = TabularPolicy;

  TabularMdp mdp;

  static constexpr const char* name() { return "tabular"; }
  Policy init_policy(std::uint64_t seed) const {
    Rng rng(seed);
    TabularPolicy pi{mdp.num_states, mdp.num_actions, std::vector<double>(mdp.num_states * mdp.num_actions)};
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      double total = 0.0;
      for (std::size_t a = 0; a < mdp.num_actions; ++a) {
        const double e = -std::log(1.0 - rng.uniform());
        pi.probs[s * mdp.num_actions + a] = e;
        total += e;
      }
      for (std::size_t a = 0; a < mdp.num_actions; ++a) pi.probs[s * mdp.num_actions + a] /= total;
    }
    return pi;
  }
  double rollout(const Policy& p, std::uint64_t seed) const { return tabular_rollout(mdp, p, seed); }
};

/// Seed of policy i and of rollout b of policy i, both pure functions of the
/// master seed.
inline std::uint64_t policy_seed(std::uint64_t master, std::size_t i) { return derive_seed(master, {0, i}); }
inline std::uint64_t rollout_seed(std::uint64_t master, std::size_t i, std::size_t b) {
  return derive_seed(master, {1, i, b});
}

/// Sampled returns of one policy; rollout b uses rollout_seed(master, index, b).
template <class Env>
std::vector<double> sample_returns(const Env& env, const typename Env::Policy& policy, std::uint64_t master,
                                   std::size_t index, std::size_t rollouts) {
  std::vector<double> out(rollouts);
  for (std::size_t b = 0; b < rollouts; ++b) out[b] = env.rollout(policy, rollout_seed(master, index, b));
  return out;
}

template <class Env>
std::vector<BasicRecord<typename Env::Policy>> collect(const Env& env, std::size_t num_policies,
                                                       std::size_t rollouts, std::uint64_t master_seed,
                                                       std::size_t jobs = 1) {
  if (num_policies == 0 || rollouts == 0) throw DataError("collect needs K >= 1 and B >= 1");
  std::vector<BasicRecord<typename Env::Policy>> out(num_policies);
  parallel_for(num_policies, jobs, [&](std::size_t i) {
    auto& rec = out[i];
    rec.policy = env.init_policy(policy_seed(master_seed, i));
    rec.returns = sample_returns(env, rec.policy, master_seed, i, rollouts);
    rec.mean_return = mean(rec.returns);
  });
  return out;
}

template <class Record>
struct FilterResult {
  std::vector<Record> train;
  std::vector<Record> discarded;
};

/// Keeps records whose mean return is at most `limit`; order is preserved in both parts.
template <class Record>
FilterResult<Record> filter_by_return(std::span<const Record> records, double limit) {
  FilterResult<Record> out;
  for (const auto& r : records) (r.mean_return <= limit ? out.train : out.discarded).push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// JSON-Lines persistence. Line 1 is the header, every following line one record:
//   {"env":..., "K":..., "B":..., "master_seed":..., "created":..., "max_steps":...}
//   {"policy": {"arch":..., "temperature":..., "params":[...]}, "returns":[...], "mean_return": ...}

struct DatasetHeader {
  std::string env = "cartpole";
  std::size_t num_policies = 0;
  std::size_t rollouts = 0;
  std::uint64_t master_seed = 0;
  std::string created;
  std::size_t max_steps = kDefaultEpisodeCap;
};

struct Dataset {
  DatasetHeader header;
  std::vector<PolicyRecord> records;
};

inline nlohmann::json record_to_json(const PolicyRecord& r) {
  return {{"policy", policy_to_json(r.policy)}, {"returns", r.returns}, {"mean_return", r.mean_return}};
}

inline PolicyRecord record_from_json(const nlohmann::json& j) {
  PolicyRecord r;
  r.policy = policy_from_json(j.at("policy"));
  r.returns = j.at("returns").get<std::vector<double>>();
  r.mean_return = j.at("mean_return").get<double>();
  if (r.returns.empty()) throw DataError("record without returns");
  if (std::abs(r.mean_return - mean(r.returns)) > 1e-9) throw DataError("mean_return disagrees with returns");
  return r;
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingInputError("cannot write " + path);
  const nlohmann::json header = {{"env", ds.header.env},
                                 {"K", ds.header.num_policies},
                                 {"B", ds.header.rollouts},
                                 {"master_seed", ds.header.master_seed},
                                 {"created", ds.header.created},
                                 {"max_steps", ds.header.max_steps}};
  os << header.dump() << '\n';
  for (const auto& r : ds.records) os << record_to_json(r).dump() << '\n';
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("dataset file not found: " + path);
  Dataset ds;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        ds.header.env = j.at("env").get<std::string>();
        ds.header.num_policies = j.at("K").get<std::size_t>();
        ds.header.rollouts = j.at("B").get<std::size_t>();
        ds.header.master_seed = j.at("master_seed").get<std::uint64_t>();
        ds.header.created = j.value("created", std::string());
        ds.header.max_steps = j.value("max_steps", kDefaultEpisodeCap);
        have_header = true;
      } else {
        ds.records.push_back(record_from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ShapeError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (ds.records.empty()) throw DataError("empty dataset: " + path);
  return ds;
}

}  // namespace pvn

#endif  // PVN_DATASET_HPP_
