// Command-line front end for the OVAE adequacy workflow.
//
//   ovae <command> --config run.toml [--out DIR] [--seed N] [--threads N] [--force]
//
// Exit codes: 0 ok, 2 configuration error, 3 missing or inconsistent upstream
// artifact, 4 numeric failure.

#include <CLI11.hpp>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "ovae/ovae.hpp"

namespace {

int exit_code(ovae::ErrorKind kind) {
  switch (kind) {
    case ovae::ErrorKind::Config:
    case ovae::ErrorKind::Domain:
      return 2;
    case ovae::ErrorKind::Artifact:
    case ovae::ErrorKind::Io:
      return 3;
    case ovae::ErrorKind::Numeric:
    case ovae::ErrorKind::Dimension:
      return 4;
  }
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orientation VAE workflow for resource adequacy assessment"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool force = false;

  using Command = std::function<void(const ovae::pipeline::Context&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"synth", "generate the synthetic demand dataset and split it", ovae::pipeline::cmd_synth},
      {"ingest", "load an external demand CSV and split it", ovae::pipeline::cmd_ingest},
      {"label", "compute feature labels for the configured labeled fraction", ovae::pipeline::cmd_label},
      {"train", "train the OVAE and write the model bundle", ovae::pipeline::cmd_train},
      {"fit-is", "run the pilot and fit the latent IS density by EM", ovae::pipeline::cmd_fit_is},
      {"assess", "estimate LOLE/EENS by data MC, OVAE and OVAE+IS", ovae::pipeline::cmd_assess},
      {"stat-tests", "KS, energy and autoencoder tests on generated states", ovae::pipeline::cmd_stat_tests},
      {"report", "assemble the adequacy table and histograms", ovae::pipeline::cmd_report},
      {"run", "all stages in sequence", ovae::pipeline::run_all},
  };
  std::map<CLI::App*, Command> dispatch;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "run configuration (TOML)")->required();
    sub->add_option("--out", out_dir, "artifact directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
    sub->add_flag("--force", force, "accept artifacts produced under a different config hash");
    dispatch[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    ovae::config::RunConfig cfg = ovae::config::load(config_path);
    if (seed) cfg.apply_seed(*seed);
    if (threads) cfg.threads = *threads;
    const ovae::pipeline::Context ctx(std::move(cfg), out_dir, force);
    for (const auto& [sub, fn] : dispatch)
      if (sub->parsed()) {
        fn(ctx);
        std::cout << sub->get_name() << ": ok (config_hash=" << ctx.hash << ", out=" << out_dir << ")\n";
      }
    return 0;
  } catch (const ovae::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
