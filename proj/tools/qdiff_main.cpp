// qdiff: tight-binding quantum diffusion in Markov-fluctuating periodic
// potentials.  Subcommands: assumptions, simulate, exact, diffusion, verify.
// Exit codes: 0 success, 1 assumption failure, 2 numerical-tolerance failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "qdiff/harness.hpp"

namespace fs = std::filesystem;
using namespace qdiff;

namespace {

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantum diffusion in a Markov-fluctuating periodic potential"};
  app.require_subcommand(1);

  std::string config_file;
  std::string out_dir = "out";
  std::uint64_t seed_override = 0;
  bool has_seed = false;
  bool cross_check = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& s) {
          seed_override = s;
          has_seed = true;
        },
        "override the config seed");
  };

  CLI::App* cmd_assumptions =
      app.add_subcommand("assumptions", "check the model assumptions");
  CLI::App* cmd_simulate =
      app.add_subcommand("simulate", "Monte Carlo ensemble density");
  CLI::App* cmd_exact =
      app.add_subcommand("exact", "exact fibered mean density");
  CLI::App* cmd_diffusion =
      app.add_subcommand("diffusion", "diffusion matrix profile D(p)");
  CLI::App* cmd_verify =
      app.add_subcommand("verify", "scaling-limit verification");
  for (CLI::App* c :
       {cmd_assumptions, cmd_simulate, cmd_exact, cmd_diffusion, cmd_verify})
    add_common(c);
  cmd_simulate->add_flag("--cross-check", cross_check,
                         "compare against the exact fibered values");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = ExperimentConfig::from_json_file(config_file);
    if (has_seed) cfg.seed = seed_override;
    const fs::path out(out_dir);
    const std::string command = join_args(argc, argv);
    std::cout << std::setprecision(12);

    if (app.got_subcommand(cmd_assumptions)) {
      AssumptionReport rep = run_assumptions(cfg, &std::cout);
      write_manifest(out / "manifest.json", cfg, command);
      return rep.pass ? 0 : 1;
    }

    if (app.got_subcommand(cmd_simulate)) {
      SimulateResult res = run_simulate(cfg, cross_check, &std::cout);
      write_density_csv(out / "density.csv", res.density);
      write_fourier_csv(out / "fourier.csv", res.cross, cross_check);
      write_manifest(out / "manifest.json", cfg, command);
      if (cross_check && res.max_z > 5.0) {
        std::cerr << "cross-check failed: max z-score " << res.max_z << "\n";
        return 2;
      }
      return 0;
    }

    if (app.got_subcommand(cmd_exact)) {
      AssumptionReport rep = run_assumptions(cfg, nullptr);
      if (!rep.pass) {
        for (const auto& v : rep.violations)
          std::cerr << "violation: " << v << "\n";
        return 1;
      }
      BuiltSystem sys = build_system(cfg);
      FiberSystem fibers = sys.fibers(cfg.hopping);
      fs::create_directories(out);
      std::ofstream csv(out / "exact.csv");
      csv << std::setprecision(17) << "k,t,re,im\n";
      for (const auto& k : cfg.k_values) {
        cplx f =
            exact_fourier_density(k, cfg.time, cfg.initial, cfg.p_grid, fibers);
        for (std::size_t i = 0; i < k.size(); ++i) csv << (i ? " " : "") << k[i];
        csv << "," << cfg.time << "," << f.real() << "," << f.imag() << "\n";
        std::cout << "k = (";
        for (std::size_t i = 0; i < k.size(); ++i)
          std::cout << (i ? ", " : "") << k[i];
        std::cout << ")  F = " << f << "\n";
      }
      write_manifest(out / "manifest.json", cfg, command);
      return 0;
    }

    if (app.got_subcommand(cmd_diffusion)) {
      DiffusionResult res = run_diffusion(cfg, &std::cout);
      write_profile_csv(out / "diffusion.csv", res.profile);
      write_manifest(out / "manifest.json", cfg, command);
      return 0;
    }

    if (app.got_subcommand(cmd_verify)) {
      ScalingReport rep = run_verify_scaling(cfg, &std::cout);
      write_scaling_csv(out / "scaling.csv", rep);
      write_taylor_csv(out / "taylor.csv", rep);
      write_manifest(out / "manifest.json", cfg, command);
      return 0;
    }
  } catch (const AssumptionFailure& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const ToleranceFailure& e) {
    std::cerr << "tolerance failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
