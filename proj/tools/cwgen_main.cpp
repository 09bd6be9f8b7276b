#include <cstdint>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cwgen/config.hpp"
#include "cwgen/errors.hpp"
#include "cwgen/pipeline.hpp"
#include "cwgen/theory.hpp"

namespace {

using namespace cwgen;

struct StageArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> kinds;
  std::vector<std::string> variants;
};

void add_config_options(CLI::App* cmd, StageArgs& a, bool model_filters) {
  cmd->add_option("-c,--config", a.config_path, "run configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "override a config value, section.key=value (repeatable)");
  cmd->add_option("--seed", a.seeds, "restrict to these seeds (default: run.seeds)");
  if (model_filters) {
    cmd->add_option("--kind", a.kinds, "restrict to diff and/or flow");
    cmd->add_option("--variant", a.variants, "restrict to raw and/or cw");
  }
}

pipeline::Selection selection(const StageArgs& a) {
  pipeline::Selection s;
  s.seeds = a.seeds;
  for (const auto& k : a.kinds) s.kinds.push_back(generative::parse_kind(k));
  for (const auto& v : a.variants) s.variants.push_back(generative::parse_variant(v));
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditionally whitened diffusion and flow forecasters: data, JMCE, training, sampling, evaluation"};
  app.require_subcommand(1);

  StageArgs args;
  using StageFn = void (*)(const config::RunConfig&, const pipeline::Selection&, std::ostream&);
  struct StageCmd {
    const char* name;
    const char* help;
    StageFn fn;
    bool filters;
  };
  const StageCmd stages[] = {
      {"gen-data", "generate or load the series, split, normalize and write per-seed splits", pipeline::gen_data,
       false},
      {"train-jmce", "train the joint mean-covariance estimator for each seed", pipeline::train_jmce, false},
      {"train-gen", "train diffusion / flow models in raw and cw variants", pipeline::train_gen, true},
      {"sample", "draw eval.members samples for every test window", pipeline::sample, true},
      {"evaluate", "score samples against the test windows and export plot data", pipeline::evaluate, true},
  };
  std::vector<std::pair<CLI::App*, StageFn>> stage_cmds;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_config_options(cmd, args, s.filters);
    stage_cmds.emplace_back(cmd, s.fn);
  }
  auto* report_cmd = app.add_subcommand("report", "aggregate per-seed metrics into tables and win rates");
  report_cmd->add_option("-c,--config", args.config_path, "run configuration file")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--set", args.overrides, "override a config value, section.key=value (repeatable)");
  auto* run_cmd = app.add_subcommand("run", "all stages in order, then the report");
  run_cmd->add_option("-c,--config", args.config_path, "run configuration file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--set", args.overrides, "override a config value, section.key=value (repeatable)");

  auto* check_cmd = app.add_subcommand("check-config", "validate a config file and print the resolved values");
  check_cmd->add_option("-c,--config", args.config_path, "run configuration file")->required()->check(CLI::ExistingFile);
  check_cmd->add_option("--set", args.overrides, "override a config value, section.key=value (repeatable)");
  auto* ref_cmd = app.add_subcommand("config-reference", "print every config key with its default");

  std::size_t n = 1000, dim = 3;
  std::uint64_t seed = 7;
  std::vector<double> scales = theory::kDefaultErrorScales;
  auto* thm_cmd = app.add_subcommand("verify-theorem", "check the KL sufficient condition on random Gaussian instances");
  thm_cmd->add_option("--n", n, "number of instances (at least 1000)")->capture_default_str();
  thm_cmd->add_option("--dim", dim, "dimension")->capture_default_str();
  thm_cmd->add_option("--seed", seed, "random seed")->capture_default_str();
  thm_cmd->add_option("--scales", scales, "estimator error scales, cycled across instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ref_cmd->parsed()) {
      std::cout << config::reference_page();
      return 0;
    }
    if (thm_cmd->parsed()) {
      std::mt19937_64 rng(seed);
      const auto summary = theory::validate_theorem1(n, dim, rng, scales);
      std::cout << theory::format_summary(summary, seed);
      return summary.counterexamples == 0 ? 0 : 1;
    }
    const auto cfg = config::load(args.config_path, args.overrides);
    if (check_cmd->parsed()) {
      std::cout << config::canonical(cfg);
      return 0;
    }
    if (report_cmd->parsed()) {
      pipeline::report(cfg, std::cout);
      return 0;
    }
    if (run_cmd->parsed()) {
      pipeline::run_all(cfg, std::cerr);
      return 0;
    }
    for (const auto& [cmd, fn] : stage_cmds) {
      if (cmd->parsed()) fn(cfg, selection(args), std::cerr);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const PrerequisiteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
