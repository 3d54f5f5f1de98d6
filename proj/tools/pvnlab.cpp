#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pvn/config.hpp"
#include "pvn/error.hpp"
#include "pvn/pipeline.hpp"

namespace {

int run(const std::string& command, const pvn::ExperimentConfig& cfg) {
  if (command == "polytope") {
    const auto s = pvn::run_polytope(cfg);
    std::printf("test MAE (%.4f, %.4f)  field cosine %.4f\n", s.test_mae[0], s.test_mae[1], s.mean_cosine);
    std::printf("exact ascent ends at (%.3f, %.3f), PVN ascent at (%.3f, %.3f); best corner (%.0f, %.0f)\n",
                s.exact_end[0], s.exact_end[1], s.pvn_end[0], s.pvn_end[1], s.best_corner[0], s.best_corner[1]);
  } else if (command == "collect") {
    const auto ds = pvn::run_collect(cfg);
    std::printf("collected %zu policies x %zu rollouts -> %s\n", ds.records.size(), ds.header.rollouts,
                cfg.dataset_path().c_str());
  } else if (command == "train") {
    const auto s = pvn::run_train(cfg);
    std::printf("kept %zu, discarded %zu; train KL %.4f, test KL %.4f\n", s.kept, s.discarded, s.final_train_kl,
                s.final_test_kl);
  } else if (command == "ascend") {
    const auto s = pvn::run_ascend(cfg);
    std::printf("best restart %zu, best g_mc %.1f, %zu-episode mean return %.2f\n", s.result.best_restart,
                s.result.best_g_mc, cfg.final_eval_rollouts, s.best_eval_mean);
  } else {
    pvn::run_report(cfg);
    std::printf("report written to %s\n", cfg.out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy evaluation networks: data collection, training and zero-shot ascent"};
  std::string command;
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  std::vector<std::string> overrides;
  app.add_option("command", command, "polytope, collect, train, ascend or report")
      ->required()
      ->check(CLI::IsMember({"polytope", "collect", "train", "ascend", "report"}));
  app.add_option("--config", config_file, "flat key = value config file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out, "output directory");
  app.add_option("--jobs", jobs, "worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("overrides", overrides, "key=value overrides");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    std::vector<std::pair<std::string, std::string>> assignments;
    if (!config_file.empty()) assignments = pvn::parse_config_text(pvn::read_text_file(config_file));
    for (const auto& o : overrides) assignments.push_back(pvn::split_assignment(o));
    if (seed) assignments.emplace_back("seed", std::to_string(*seed));
    if (out) assignments.emplace_back("out", *out);
    if (jobs) assignments.emplace_back("jobs", std::to_string(*jobs));
    const auto cfg = pvn::build_config(assignments, command == "polytope" ? "polytope" : "cartpole-linear");
    return run(command, cfg);
  } catch (const pvn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const pvn::MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return 2;
  } catch (const pvn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const pvn::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  }
}
