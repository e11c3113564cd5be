#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "tdattr/config.hpp"
#include "tdattr/io.hpp"
#include "tdattr/runner.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool quiet = false;
};

int run(const std::string& command, const Options& opt, const CLI::App& app) {
  using namespace tdattr;
  RunConfig cfg = opt.config.empty() ? RunConfig{} : load_config(opt.config);
  if (app.count("--seed")) cfg.seed = opt.seed;
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  {
    std::ofstream echo_file(dir / "config.echo.json");
    if (!echo_file) throw InvalidInput("cannot write " + (dir / "config.echo.json").string());
    echo_file << echo(cfg).dump(2) << "\n";
  }
  const auto reports = run_command(command, cfg, dir, [&](const ExperimentReport& r) {
    emit_report(r, dir);
    if (!opt.quiet)
      std::printf("%-22s %-12s %8.1fs  %s\n", r.id.c_str(), verdict_name(r.verdict).c_str(), r.runtime_seconds,
                  r.reason.c_str());
    std::fflush(stdout);
  });
  return exit_code(reports);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-dependent global attractors of a damped wave equation with vanishing inertia"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", opt.out, "output directory (overrides output_dir)");
  app.add_option("--seed", opt.seed, "seed (overrides the config)");
  app.add_flag("--quiet", opt.quiet, "suppress per-report lines");
  const char* help[] = {"sample trajectories and write ensembles",
                        "pullback curve toward an attractor approximation",
                        "attractor approximations, pullback decay and boundedness",
                        "invariance of the attractor approximations",
                        "decay of U0 and bounds on U1 for both splittings",
                        "energy law residuals",
                        "absorbing radius and entry times",
                        "Gronwall domination",
                        "continuous dependence exponent",
                        "every verification experiment"};
  std::string chosen;
  for (std::size_t i = 0; i < tdattr::subcommands().size(); ++i) {
    const auto& name = tdattr::subcommands()[i];
    app.add_subcommand(name, help[i])->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return run(chosen, opt, app);
  } catch (const tdattr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const tdattr::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const tdattr::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
