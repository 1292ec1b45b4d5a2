#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "uncplab/config.hpp"
#include "uncplab/runner.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

int execute(uncplab::Experiment experiment, const Options& opt) {
  uncplab::ExperimentConfig config;
  try {
    if (opt.config.empty()) {
      config = uncplab::parse_config_text("", "<defaults>", experiment);
    } else {
      config = uncplab::load_config(opt.config, experiment);
    }
  } catch (const uncplab::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  }
  if (opt.seed) config.seed = *opt.seed;
  const std::filesystem::path out = opt.out.empty() ? config.output_dir : opt.out;

  const uncplab::RunOutcome outcome = uncplab::run(config, out, std::clog, opt.verbose);
  for (const auto& c : outcome.checks)
    if (opt.verbose || !c.pass) std::cerr << (c.pass ? "ok     " : "FAILED ") << c.name << " (" << c.value << ")\n";
  if (outcome.status == 2) std::cerr << "invalid config: " << outcome.message << '\n';
  if (outcome.status == 1) std::cerr << outcome.message << '\n';
  std::cout << uncplab::to_string(config.experiment) << ": " << (outcome.status == 0 ? "pass" : "fail")
            << " (config_hash=" << config.hash() << ", summary " << (out / "summary.json").string() << ")\n";
  return outcome.status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-principle experiment runner"};
  app.require_subcommand(1);
  Options opt;
  const std::pair<const char*, const char*> commands[] = {
      {"project", "spectral projector and Poisson semigroup algebra"},
      {"observe", "observability constant sweep and exponential law fit"},
      {"carleman", "Carleman weight constants and inequality check"},
      {"interp", "interpolation certificates"},
      {"pipeline", "end-to-end spectral inequality pipeline"},
      {"thickness", "thickness certificate of an observation set"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "artifact directory (overrides [output] dir)");
    sub->add_option("--seed", opt.seed, "seed override");
    sub->add_flag("--verbose", opt.verbose, "log progress and every check");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return execute(*uncplab::experiment_from_string(name), opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
