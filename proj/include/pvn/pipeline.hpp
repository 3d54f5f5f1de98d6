// Experiment stages behind the `pvnlab` commands. Each stage is a pure
// function of (config, input files, seed) and writes its artifacts under
// config.out, including the effective configuration as `<stage>.config.txt`.
//
// Seed derivation from the master seed s:
//   polytope  samples derive(s,{10})  PVN init derive(s,{11})  batches derive(s,{12})
//   collect   master seed s itself
//   train     PVN init derive(s,{30})  batches derive(s,{31})  test split derive(s,{32})
//   ascend    restarts derive(s,{40})  final evaluation derive(s,{41})

#ifndef PVN_PIPELINE_HPP_
#define PVN_PIPELINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvn/ascent.hpp"
#include "pvn/cartpole.hpp"
#include "pvn/config.hpp"
#include "pvn/csv.hpp"
#include "pvn/dataset.hpp"
#include "pvn/error.hpp"
#include "pvn/policy.hpp"
#include "pvn/pvn.hpp"
#include "pvn/svg.hpp"
#include "pvn/tabular.hpp"

namespace pvn {

namespace pipeline_detail {

inline void prepare_out(const ExperimentConfig& cfg, const std::string& stage) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg.out + ": " + ec.message());
  std::ofstream os(cfg.out + "/" + stage + ".config.txt", std::ios::binary);
  os << emit_config(cfg);
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingInputError("cannot write " + path);
  os << j.dump(2) << '\n';
}

inline TrainConfig train_config(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.steps = cfg.train_steps;
  tc.optimizer = OptimizerConfig{cfg.pvn_optimizer, cfg.pvn_lr};
  tc.train_probes = cfg.train_probes;
  tc.eval_every = cfg.eval_every;
  return tc;
}

inline void write_train_report(const std::string& path, const TrainReport& report) {
  CsvWriter csv(path, {"step", "train_kl", "test_kl"});
  std::map<std::size_t, double> test(report.test_loss.begin(), report.test_loss.end());
  const std::size_t steps = report.train_loss.size();
  for (std::size_t s = 0; s <= steps; ++s) {
    const auto it = test.find(s);
    const bool has_train = s < steps;
    if (!has_train && it == test.end()) continue;
    csv.row({std::to_string(s), has_train ? fmt_num(report.train_loss[s]) : "",
             it != test.end() ? fmt_num(it->second) : ""});
  }
}

inline double tail_mean(const std::vector<double>& xs, std::size_t n) {
  if (xs.empty()) return 0.0;
  const std::size_t k = std::min(n, xs.size());
  double s = 0.0;
  for (std::size_t i = xs.size() - k; i < xs.size(); ++i) s += xs[i];
  return s / static_cast<double>(k);
}

inline void write_field(const std::string& path, const std::vector<FieldPoint>& field) {
  CsvWriter csv(path, {"p_a1_s1", "p_a1_s2", "grad_s1", "grad_s2"});
  for (const auto& p : field) csv.row({fmt_num(p.p1), fmt_num(p.p2), fmt_num(p.g1), fmt_num(p.g2)});
}

inline void write_tabular_trace(const std::string& path, const AscentTrace& trace) {
  CsvWriter csv(path, {"restart", "step", "j_hat", "g_mc", "p_a1_s1", "p_a1_s2"});
  for (const auto& s : trace.steps) {
    csv.row({std::to_string(trace.restart), std::to_string(s.step), fmt_num(s.j_hat), fmt_num(s.g_mc),
             fmt_num(s.theta.at(0)), fmt_num(s.theta.at(1))});
  }
}

inline double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// SOURCE_DATE_EPOCH when set (reproducible-builds convention), else empty.
inline std::string created_stamp() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  return epoch ? std::string(epoch) : std::string();
}

}  // namespace pipeline_detail

struct PolytopeSummary {
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::vector<double> test_mae;  // per state
  double mean_cosine = 0.0;
  std::vector<double> best_corner;
  std::vector<double> exact_end;
  std::vector<double> pvn_end;
  double exact_distance = 0.0;  // L-inf distance of exact_end from best_corner
  double pvn_distance = 0.0;
};

/// Value-polytope experiment: sample policies, fit a regression PVN on the
/// per-state values, compare gradient fields, and run both ascents.
inline PolytopeSummary run_polytope(const ExperimentConfig& cfg) {
  using namespace pipeline_detail;
  prepare_out(cfg, "polytope");
  if (cfg.pvn_mode != InputMode::tabular) throw ConfigError("polytope needs pvn_mode = tabular");
  TabularMdp mdp = polytope_mdp(cfg.d0);
  mdp.gamma = cfg.gamma;
  mdp.validate();

  const auto samples = sample_polytope_dataset(mdp, cfg.polytope_count, derive_seed(cfg.seed, {10}));
  std::vector<TrainExample> train_set, test_set;
  {
    CsvWriter csv(cfg.out + "/polytope.csv", {"p_a1_s1", "p_a1_s2", "v_s1", "v_s2", "j", "split"});
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const bool is_train = i < cfg.polytope_train;
      (is_train ? train_set : test_set).push_back({s.policy, s.values});
      csv.row({fmt_num(s.policy[0]), fmt_num(s.policy[1]), fmt_num(s.values[0]), fmt_num(s.values[1]), fmt_num(s.j),
               is_train ? "train" : "test"});
    }
  }

  PvnSpec spec;
  spec.mode = InputMode::tabular;
  spec.head = PvnHead::regression;
  spec.hidden = cfg.pvn_hidden;
  spec.activation = cfg.activation;
  spec.tabular_width = mdp.num_states;
  spec.regression_weights = mdp.d0;
  Pvn pvn = make_pvn(spec, derive_seed(cfg.seed, {11}));
  const TrainConfig tc = train_config(cfg);
  const TrainReport report = train(pvn, train_set, test_set, tc, derive_seed(cfg.seed, {12}));
  write_train_report(cfg.out + "/train_report.csv", report);
  save_checkpoint(cfg.out + "/checkpoint.json", pvn, tc, cfg.seed);

  PolytopeSummary summary;
  summary.train_loss = dataset_loss(pvn, train_set);
  summary.test_loss = dataset_loss(pvn, test_set);
  summary.test_mae.assign(mdp.num_states, 0.0);
  for (const auto& ex : test_set) {
    const auto pred = predict_distribution(pvn, ex.theta);
    for (std::size_t s = 0; s < mdp.num_states; ++s) summary.test_mae[s] += std::abs(pred[s] - ex.target[s]);
  }
  for (double& v : summary.test_mae) v /= static_cast<double>(test_set.size());

  const auto exact_field = exact_gradient_field(mdp, cfg.grid);
  const auto learned_field = pvn_gradient_field(pvn, cfg.grid);
  write_field(cfg.out + "/field_exact.csv", exact_field);
  write_field(cfg.out + "/field_pvn.csv", learned_field);
  summary.mean_cosine = mean_cosine_similarity(exact_field, learned_field);

  const AscentTrace exact_trace = ascend_exact(mdp, cfg.start_policy, cfg.ascent_steps, cfg.ascent_lr);
  AscentOptions options;
  options.steps = cfg.ascent_steps;
  options.optimizer = OptimizerConfig{cfg.ascent_optimizer, cfg.ascent_lr};
  options.patience = cfg.patience;
  const AscentTrace pvn_trace = ascend_tabular(pvn, mdp, cfg.start_policy, options);
  write_tabular_trace(cfg.out + "/trace_exact.csv", exact_trace);
  write_tabular_trace(cfg.out + "/trace_pvn.csv", pvn_trace);

  summary.best_corner = best_corner(mdp);
  summary.exact_end = exact_trace.steps.back().theta;
  summary.pvn_end = pvn_trace.steps.back().theta;
  summary.exact_distance = linf(summary.exact_end, summary.best_corner);
  summary.pvn_distance = linf(summary.pvn_end, summary.best_corner);

  write_json(cfg.out + "/summary.json",
             {{"train_loss", summary.train_loss},
              {"test_loss", summary.test_loss},
              {"test_mae", summary.test_mae},
              {"mean_cosine", summary.mean_cosine},
              {"best_corner", summary.best_corner},
              {"best_corner_j", exact_j(mdp, TabularPolicy::from_first_action(summary.best_corner))},
              {"exact_end", summary.exact_end},
              {"pvn_end", summary.pvn_end},
              {"exact_distance", summary.exact_distance},
              {"pvn_distance", summary.pvn_distance}});
  return summary;
}

/// Collects the cart-pole policy dataset.
inline Dataset run_collect(const ExperimentConfig& cfg) {
  using namespace pipeline_detail;
  prepare_out(cfg, "collect");
  const CartPoleEnv env{cfg.policy_architecture(), cfg.max_steps};
  Dataset ds;
  ds.header = DatasetHeader{"cartpole", cfg.num_policies, cfg.returns_per_policy, cfg.seed, created_stamp(),
                            cfg.max_steps};
  ds.records = collect(env, cfg.num_policies, cfg.returns_per_policy, cfg.seed, cfg.jobs);
  write_dataset(cfg.dataset_path(), ds);
  return ds;
}

struct TrainSummary {
  std::size_t kept = 0;
  std::size_t discarded = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  BinSpec bins;
  double final_train_kl = 0.0;
  double final_test_kl = 0.0;
};

/// Trains a categorical PVN on a collected dataset. Bins span the returns
/// observed in the whole dataset, measured before the return-limit filter.
inline TrainSummary run_train(const ExperimentConfig& cfg) {
  using namespace pipeline_detail;
  prepare_out(cfg, "train");
  if (cfg.pvn_mode == InputMode::tabular) throw ConfigError("train needs pvn_mode = fingerprint or flatten");
  const Dataset ds = read_dataset(cfg.dataset_path());
  const MlpArch arch = ds.records.front().policy.arch;
  for (const auto& r : ds.records)
    if (!(r.policy.arch == arch)) throw DataError("dataset mixes policy architectures");

  const auto [lo, hi] = observed_range<MlpPolicy>(ds.records);
  BinSpec bins{cfg.bins, lo, hi > lo ? hi : lo + 1.0};
  const auto filtered = filter_by_return<PolicyRecord>(ds.records, cfg.return_limit);
  if (filtered.train.empty()) throw DataError("empty dataset: no policy has mean return <= return_limit");

  const auto examples = histogram_examples(filtered.train, bins);
  auto [train_set, test_set] = split_train_test<TrainExample>(examples, cfg.test_fraction, derive_seed(cfg.seed, {32}));

  PvnSpec spec;
  spec.mode = cfg.pvn_mode;
  spec.head = PvnHead::categorical;
  spec.hidden = cfg.pvn_hidden;
  spec.activation = cfg.activation;
  spec.policy_arch = arch;
  spec.bins = bins;
  spec.num_probes = cfg.num_probes;
  spec.probe_init = cfg.probe_init;
  Pvn pvn = make_pvn(spec, derive_seed(cfg.seed, {30}));
  const TrainConfig tc = train_config(cfg);
  const TrainReport report = train(pvn, train_set, test_set, tc, derive_seed(cfg.seed, {31}));
  write_train_report(cfg.out + "/train_report.csv", report);
  save_checkpoint(cfg.checkpoint_path(), pvn, tc, cfg.seed);

  TrainSummary s;
  s.kept = filtered.train.size();
  s.discarded = filtered.discarded.size();
  s.train_count = train_set.size();
  s.test_count = test_set.size();
  s.bins = bins;
  s.final_train_kl = tail_mean(report.train_loss, 100);
  s.final_test_kl = report.test_loss.empty() ? 0.0 : report.test_loss.back().second;
  write_json(cfg.out + "/train_summary.json", {{"mode", to_string(cfg.pvn_mode)},
                                               {"kept", s.kept},
                                               {"discarded", s.discarded},
                                               {"train_count", s.train_count},
                                               {"test_count", s.test_count},
                                               {"bins", {{"m", bins.m}, {"g_min", bins.g_min}, {"g_max", bins.g_max}}},
                                               {"final_train_kl", s.final_train_kl},
                                               {"final_test_kl", s.final_test_kl}});
  return s;
}

struct AscendSummary {
  AscentResult result;
  /// Mean return of the selected policy over final_eval_rollouts fresh episodes.
  double best_eval_mean = 0.0;
};

/// Gradient ascent through a trained checkpoint on cart-pole.
inline AscendSummary run_ascend(const ExperimentConfig& cfg) {
  using namespace pipeline_detail;
  prepare_out(cfg, "ascend");
  const Pvn pvn = load_checkpoint(cfg.checkpoint_path());
  if (pvn.mode == InputMode::tabular) throw DataError("checkpoint is a tabular PVN; use the polytope command");
  const CartPoleEnv env{pvn.policy_arch, cfg.max_steps};
  AscentConfig ac;
  ac.restarts = cfg.ascent_restarts;
  ac.options.steps = cfg.ascent_steps;
  ac.options.optimizer = OptimizerConfig{cfg.ascent_optimizer, cfg.ascent_lr};
  ac.options.patience = cfg.patience;
  ac.eval_rollouts = cfg.eval_rollouts;
  ac.seed = derive_seed(cfg.seed, {40});
  ac.jobs = cfg.jobs;

  AscendSummary out;
  out.result = ascend(pvn, env, ac);
  if (out.result.best_theta.empty()) throw NumericalError("every ascent restart aborted");

  {
    CsvWriter csv(cfg.traces_path(), {"restart", "step", "j_hat", "g_mc"});
    for (const auto& tr : out.result.traces)
      for (const auto& s : tr.steps)
        csv.row({std::to_string(tr.restart), std::to_string(s.step), fmt_num(s.j_hat), fmt_num(s.g_mc)});
  }
  const MlpPolicy best{pvn.policy_arch, out.result.best_theta};
  {
    std::ofstream os(cfg.out + "/best_policy.json", std::ios::binary);
    os << policy_to_json(best).dump() << '\n';
  }
  out.best_eval_mean = cartpole_mean_return(best, derive_seed(cfg.seed, {41}), cfg.final_eval_rollouts, cfg.max_steps);

  nlohmann::json restarts = nlohmann::json::array();
  for (const auto& tr : out.result.traces) {
    nlohmann::json r = {{"restart", tr.restart}, {"aborted", tr.aborted}, {"diagnostic", tr.diagnostic}};
    if (!tr.steps.empty()) {
      r["best_step"] = tr.best().step;
      r["best_g_mc"] = tr.best().g_mc;
      r["final_j_hat"] = tr.steps.back().j_hat;
    }
    restarts.push_back(r);
  }
  write_json(cfg.out + "/ascent_summary.json", {{"mode", to_string(pvn.mode)},
                                                {"best_restart", out.result.best_restart},
                                                {"best_g_mc", out.result.best_g_mc},
                                                {"best_eval_rollouts", cfg.final_eval_rollouts},
                                                {"best_eval_mean", out.best_eval_mean},
                                                {"restarts", restarts}});
  return out;
}

/// Plot-ready aggregates: the kept/discarded histogram of policy mean returns
/// and the per-step ascent curves, plus an optional SVG rendering of both.
inline void run_report(const ExperimentConfig& cfg) {
  using namespace pipeline_detail;
  prepare_out(cfg, "report");
  const Dataset ds = read_dataset(cfg.dataset_path());
  std::vector<std::string> header;
  const auto rows = read_csv(cfg.traces_path(), &header);
  if (header != std::vector<std::string>{"restart", "step", "j_hat", "g_mc"}) {
    throw DataError("unexpected trace header in " + cfg.traces_path());
  }

  const double cap = static_cast<double>(ds.header.max_steps);
  const BinSpec hist_bins{cfg.bins, 0.0, cap};
  std::vector<double> kept(cfg.bins, 0.0), discarded(cfg.bins, 0.0);
  for (const auto& r : ds.records)
    (r.mean_return <= cfg.return_limit ? kept : discarded)[hist_bins.bin_of(r.mean_return)] += 1.0;
  {
    CsvWriter csv(cfg.out + "/histogram.csv", {"bin_lo", "bin_hi", "kept", "discarded"});
    for (std::size_t i = 0; i < cfg.bins; ++i) {
      const double lo = hist_bins.g_min + static_cast<double>(i) * hist_bins.width();
      csv.row({fmt_num(lo), fmt_num(lo + hist_bins.width()), fmt_num(kept[i]), fmt_num(discarded[i])});
    }
  }

  std::map<std::size_t, std::map<std::size_t, std::pair<double, double>>> by_restart;  // restart -> step -> (j, g)
  try {
    for (const auto& row : rows) {
      if (row.size() != 4) throw DataError("malformed trace row");
      by_restart[std::stoul(row[0])][std::stoul(row[1])] = {std::stod(row[2]), std::stod(row[3])};
    }
  } catch (const std::logic_error&) {
    throw DataError("malformed trace file " + cfg.traces_path());
  }
  std::map<std::size_t, std::vector<std::pair<double, double>>> by_step;
  for (const auto& [restart, steps] : by_restart)
    for (const auto& [step, v] : steps) by_step[step].push_back(v);
  std::vector<std::vector<double>> curves;
  for (const auto& [restart, steps] : by_restart) {
    std::vector<double> c;
    for (const auto& [step, v] : steps) c.push_back(v.second);
    curves.push_back(std::move(c));
  }
  std::vector<double> mean_curve;
  {
    CsvWriter csv(cfg.out + "/ascent_curves.csv", {"step", "mean_g_mc", "min_g_mc", "max_g_mc", "mean_j_hat"});
    for (const auto& [step, vs] : by_step) {
      double sj = 0.0, sg = 0.0, mn = vs.front().second, mx = mn;
      for (const auto& [j, g] : vs) {
        sj += j;
        sg += g;
        mn = std::min(mn, g);
        mx = std::max(mx, g);
      }
      const double n = static_cast<double>(vs.size());
      mean_curve.push_back(sg / n);
      csv.row({std::to_string(step), fmt_num(sg / n), fmt_num(mn), fmt_num(mx), fmt_num(sj / n)});
    }
  }
  if (cfg.svg) {
    std::ofstream os(cfg.out + "/report.svg", std::ios::binary);
    os << render_report_svg(hist_bins, kept, discarded, curves, mean_curve, cfg.return_limit, cap);
  }
}

}  // namespace pvn

#endif  // PVN_PIPELINE_HPP_
