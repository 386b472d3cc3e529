// mage: command-line front end.
//
//   mage run    --config PATH [--out DIR]
//   mage verify --suite core --out DIR [--seed N]
//   mage study  --config PATH --levels N [--out DIR]
//   mage schema
//
// Exit codes: 0 all pass criteria hold, 1 numerical failure or a failed
// criterion, 2 bad usage or config.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mage/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for fourth-order Monge-Ampere type equations"};
  app.require_subcommand(1);

  std::string config, out, suite = "core";
  std::uint64_t seed = 7;
  int levels = 2;

  CLI::App* run = app.add_subcommand("run", "run the command named in a config file");
  run->add_option("--config", config, "experiment config (JSON)")->required();
  run->add_option("--out", out, "output directory (overrides 'output')");

  CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
  verify->add_option("--suite", suite, "suite name")->check(CLI::IsMember({"core"}));
  verify->add_option("--out", out, "output directory")->required();
  verify->add_option("--seed", seed, "seed for the random bump suite");

  CLI::App* study = app.add_subcommand("study", "convergence study over successive refinements");
  study->add_option("--config", config, "experiment config (JSON)")->required();
  study->add_option("--levels", levels, "number of grid levels")->check(CLI::PositiveNumber);
  study->add_option("--out", out, "output directory (overrides 'output')");

  app.add_subcommand("schema", "print the config JSON schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mage::kExitConfig;
  }

  if (*run) return mage::run(config, out);
  if (*verify) return mage::verify(suite, seed, out);
  if (*study) return mage::study(config, levels, out);
  std::cout << mage::config_schema().dump(2) << '\n';
  return mage::kExitPass;
}
