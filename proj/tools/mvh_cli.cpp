#include "mvh/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Hamiltonian McKean-Vlasov checks"};
  app.require_subcommand(1);
  app.fallthrough();
  mvh::cli::RunOptions opt;
  std::string config;
  app.add_option("--out", opt.output_dir, "output directory (overrides checks.output_dir)");
  app.add_flag("--plot-data", opt.plot_data, "write x/y series CSVs for every study");
  app.add_option("--threads", opt.threads, "worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
  for (const auto& s : mvh::cli::subcommands()) {
    auto* sc = app.add_subcommand(s);
    sc->add_option("config", config, "JSON run configuration")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : mvh::cli::kUsage;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  mvh::cli::Outcome out;
  try {
    return mvh::cli::run_file(sub, config, opt, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mvh::cli::kUsage;
  }
}
