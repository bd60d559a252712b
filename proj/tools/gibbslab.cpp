// gibbslab: command-line front end for the experiment commands.
//
// Exit status: 0 on success, 2 for invalid configs or arguments, 1 for
// runtime failures.

#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "gibbslab/cli.hpp"

namespace cli = gibbslab::cli;

int main(int argc, char** argv) {
  CLI::App app{"Continuum Gibbs point-process simulation and verification lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  for (const auto& name : cli::command_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "RNG seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--replicas", replicas, "independent replicas (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--threads", threads, "worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  cli::Overrides ov;
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--replicas")) ov.replicas = replicas;

  try {
    const auto config = gibbslab::load_config_file(config_path);
    const auto summary = cli::run_command(sub->get_name(), config, ov, out_dir, threads);
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const gibbslab::ConfigError& e) {
    std::cerr << "gibbslab: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gibbslab: runtime error: " << e.what() << "\n";
    return 1;
  }
}
