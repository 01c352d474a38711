// glab: train a victim model, capture client gradients, attack them, evaluate.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "glab/errors.hpp"
#include "glab/experiment.hpp"
#include "glab/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"gradient inversion lab"};
  app.set_version_flag("--version", glab::kVersion);
  app.require_subcommand(1, 1);

  std::string config;
  std::vector<std::string> overrides;
  const char* stages[][2] = {
      {"train", "train the victim model (and the NCB) and write the weights"},
      {"capture", "write one client gradient capture per victim image"},
      {"attack", "reconstruct every capture with attack.strategy"},
      {"eval", "score reconstructions against the ground truth"},
      {"bench", "train, capture and attack with each of bench.strategies in one run"},
  };
  for (const auto& [name, help] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "key=value config file (defaults for missing keys)")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "override one key, key=value (repeatable)");
  }
  auto* keys = app.add_subcommand("keys", "list config keys with their defaults");

  CLI11_PARSE(app, argc, argv);

  try {
    if (keys->parsed()) {
      for (const auto& k : glab::config_keys()) std::printf("%-32s %-12s %s\n", k.key, k.default_value, k.help);
      return 0;
    }
    glab::Settings settings = config.empty() ? glab::Settings() : glab::Settings::load(config);
    for (const auto& o : overrides) settings.set(o);
    glab::run_stage(app.get_subcommands().front()->get_name(), settings);
  } catch (const glab::ConfigError& e) {
    std::cerr << "glab: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "glab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
