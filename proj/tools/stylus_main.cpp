// stylus: composer-style classification over bootleg scores.
//
// usage: stylus <stage> --config <path> [--seed N] [--override key=value ...]

#include <CLI11.hpp>
#include <iostream>

#include "stylus/runconfig.hpp"

int main(int argc, char** argv) {
  CLI::App app{"composer-style classification over bootleg scores"};
  app.require_subcommand(1);

  struct StageArgs {
    std::string config;
    std::vector<std::string> overrides;
    int64_t seed = -1;
    bool seed_set = false;
  };

  std::vector<std::pair<std::string, std::shared_ptr<StageArgs>>> stages;
  for (const char* name : {"synth", "encode", "train-tokenizer", "pretrain", "lm-finetune",
                           "finetune", "evaluate", "predict", "embed"}) {
    auto args = std::make_shared<StageArgs>();
    CLI::App* sub = app.add_subcommand(name, "run the " + std::string(name) + " stage");
    sub->add_option("--config", args->config, "config file (key = value, [stage] sections)");
    sub->add_option("--seed", args->seed, "seed override (mandatory here or in the config)")
        ->each([args](const std::string&) { args->seed_set = true; });
    sub->add_option("--override", args->overrides, "key=value overrides, repeatable");
    stages.emplace_back(name, args);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [name, args] : stages) {
      if (!app.get_subcommand(name)->parsed()) continue;
      std::optional<uint64_t> seed;
      if (args->seed_set) {
        if (args->seed < 0) throw stylus::Error(stylus::Errc::config, "--seed must be >= 0");
        seed = static_cast<uint64_t>(args->seed);
      }
      stylus::RunConfig cfg = stylus::load_run_config(name, args->config, args->overrides, seed);
      return stylus::run_stage(cfg);
    }
    std::cerr << "stylus: no stage selected\n";
    return 2;
  } catch (const stylus::Error& e) {
    std::cerr << "stylus: error: " << e.what() << "\n";
    return e.code() == stylus::Errc::config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "stylus: error: " << e.what() << "\n";
    return 1;
  }
}
