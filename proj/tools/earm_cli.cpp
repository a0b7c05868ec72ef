// Experiment driver for the equilibrated flux recovery library:
//   earm run    solve / recover / estimate over refinement levels
//   earm verify run the invariant suite on fixed fixture meshes

#include "earm/runner.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

/// Flat key=value config file ('#' comments); returns the parsed pairs.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open config file " + path);
  std::map<std::string, std::string> values;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!key.empty()) values[key] = value;
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equilibrated flux recovery experiments"};

  earm::RunConfig config;
  std::string method = "cg", recovery = "cg-orth", mode = "uniform";
  std::string config_path;

  CLI::App* run_cmd = app.add_subcommand("run", "solve, recover, estimate, adapt");
  run_cmd->add_option("--config", config_path,
                      "flat key=value file; command-line flags win");
  run_cmd->add_option("--problem", config.problem, "smooth|patch|checkerboard|mixed")
      ->capture_default_str();
  run_cmd->add_option("--jump", config.jump, "checkerboard coefficient kappa")
      ->capture_default_str();
  run_cmd->add_option("--method", method, "cg|nc|dg")->capture_default_str();
  run_cmd->add_option("--order", config.order, "polynomial order k")->capture_default_str();
  run_cmd->add_option("--recovery", recovery, "dg|nc-facet|nc-rt0|nc-fs2|cg-orth|cg-pou")
      ->capture_default_str();
  run_cmd->add_option("--rt-index", config.rt_index, "RT index s (-1: recovery default)")
      ->capture_default_str();
  run_cmd->add_option("--gamma", config.gamma, "DG penalty (<=0: 10(k+1)^2)")
      ->capture_default_str();
  run_cmd->add_option("--delta", config.delta, "DG symmetry parameter (-1|0|1)")
      ->capture_default_str();
  run_cmd->add_option("--mode", mode, "uniform|adaptive")->capture_default_str();
  run_cmd->add_option("--theta", config.theta, "Doerfler marking fraction")
      ->capture_default_str();
  run_cmd->add_option("--levels", config.levels, "number of refinement levels")
      ->capture_default_str();
  run_cmd->add_option("--out", config.out_dir, "output directory for CSV + mesh snapshots");
  run_cmd->add_option("--seed", config.seed, "seed for property sweeps")
      ->capture_default_str();

  double verify_jump = 1e4;
  bool flip = false;
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the invariant suite");
  verify_cmd->add_option("--jump", verify_jump, "checkerboard kappa for the suite")
      ->capture_default_str();
  verify_cmd
      ->add_flag("--inject-sign-flip", flip,
                 "test hook: corrupt one facet sign and expect failures")
      ->group("");  // hidden

  app.require_subcommand(1);
  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify_cmd) return earm::verify(verify_jump, flip, std::cout) == 0 ? 0 : 1;

    if (!config_path.empty()) {
      auto file = read_config(config_path);
      auto take = [&](const char* flag, const std::string& key, auto& slot) {
        auto it = file.find(key);
        if (it == file.end()) return;
        if (run_cmd->count(flag) > 0) return;  // command line wins
        std::istringstream(it->second) >> slot;
      };
      take("--problem", "problem", config.problem);
      take("--jump", "jump", config.jump);
      take("--method", "method", method);
      take("--order", "order", config.order);
      take("--recovery", "recovery", recovery);
      take("--rt-index", "rt-index", config.rt_index);
      take("--gamma", "gamma", config.gamma);
      take("--delta", "delta", config.delta);
      take("--mode", "mode", mode);
      take("--theta", "theta", config.theta);
      take("--levels", "levels", config.levels);
      take("--out", "out", config.out_dir);
      take("--seed", "seed", config.seed);
    }

    auto parse_method = [](const std::string& name) {
      if (name == "cg") return earm::Method::CG;
      if (name == "nc") return earm::Method::NC;
      if (name == "dg") return earm::Method::DG;
      throw std::invalid_argument("unknown method '" + name + "' (expected cg|nc|dg)");
    };
    config.method = parse_method(method);
    config.recovery = earm::recovery_from_name(recovery);
    if (mode == "adaptive")
      config.adaptive = true;
    else if (mode != "uniform")
      throw std::invalid_argument("unknown mode '" + mode + "' (expected uniform|adaptive)");

    auto reports = earm::run(config);
    earm::write_csv(std::cout, reports);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
