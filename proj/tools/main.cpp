#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rsdp/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"regime-switching diffusion experiments"};
  app.require_subcommand(1);

  rsdp::RunOptions opt;
  uint64_t seed_arg = 0;
  int workers_arg = 0;
  bool have_seed = false, have_workers = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "experiment config (JSON)")
        ->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", seed_arg, "base seed (overrides the config)")
        ->each([&](const std::string&) { have_seed = true; });
    sub->add_option("--workers", workers_arg, "worker threads (overrides the config)")
        ->each([&](const std::string&) { have_workers = true; });
    return sub;
  };

  CLI::App* c_check = add_common(app.add_subcommand("check", "verify model assumptions"));
  CLI::App* c_conv =
      add_common(app.add_subcommand("converge", "strong-error decay of the Euler scheme"));
  CLI::App* c_dom =
      add_common(app.add_subcommand("dominate", "dominating chains and spectral decay"));
  CLI::App* c_couple =
      add_common(app.add_subcommand("couple", "reflection coupling experiments"));
  CLI::App* c_inv =
      add_common(app.add_subcommand("invariant", "convergence to the invariant law"));
  CLI::App* c_sim = add_common(app.add_subcommand("simulate", "write one sample path"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : rsdp::kExitConfig;
  }

  if (have_seed) opt.seed = seed_arg;
  if (have_workers) opt.workers = workers_arg;

  if (c_check->parsed()) return rsdp::cmd_check(opt);
  if (c_conv->parsed()) return rsdp::cmd_converge(opt);
  if (c_dom->parsed()) return rsdp::cmd_dominate(opt);
  if (c_couple->parsed()) return rsdp::cmd_couple(opt);
  if (c_inv->parsed()) return rsdp::cmd_invariant(opt);
  if (c_sim->parsed()) return rsdp::cmd_simulate(opt);
  return rsdp::kExitConfig;
}
