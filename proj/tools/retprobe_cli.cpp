#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "retprobe/mc_oracle.hpp"
#include "retprobe/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAllFailed = 3;

retprobe::scenario::Scenario load(const std::string& scenario_path,
                                  const std::string& preset_name) {
  using retprobe::scenario::ScenarioError;
  const bool has_file = !scenario_path.empty();
  const bool has_preset = !preset_name.empty();
  if (has_file == has_preset)
    throw ScenarioError("exactly one of --scenario or --preset is required");
  if (has_file) return retprobe::scenario::load_scenario(scenario_path);
  return retprobe::scenario::preset(preset_name);
}

int write_output(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return kExitOk;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write to " << path << "\n";
    return kExitConfig;
  }
  out << text;
  return kExitOk;
}

int cmd_run(const retprobe::scenario::Scenario& sc, const std::string& out_path,
            const std::string& format, int jobs) {
  const retprobe::scenario::RunResult res = retprobe::scenario::run(sc, jobs);
  const std::string fmt = format.empty() ? sc.out_format : format;
  const std::string text = fmt == "json" ? retprobe::scenario::to_json_text(res)
                                         : retprobe::scenario::to_csv(res);
  const std::string path = out_path.empty() ? sc.out_path : out_path;
  const int rc = write_output(text, path);
  if (rc != kExitOk) return rc;
  if (res.ok_count == 0) {
    std::cerr << "error: every sweep point failed\n";
    return kExitAllFailed;
  }
  return kExitOk;
}

int cmd_validate(const retprobe::scenario::Scenario& sc) {
  std::cout << "ok: " << sc.name << "\n";
  std::cout << "states:";
  for (retprobe::scenario::LightKind k : sc.states)
    std::cout << ' ' << retprobe::scenario::kind_name(k);
  std::cout << "\nsweep: " << sc.sweep_parameter << " in [" << sc.sweep_start << ", "
            << sc.sweep_stop << "] x " << sc.sweep_points << "\n";
  return kExitOk;
}

int cmd_list_presets() {
  for (const std::string& name : retprobe::scenario::preset_names()) {
    const retprobe::scenario::Scenario sc = retprobe::scenario::preset(name);
    std::cout << name << ": " << sc.description << "\n";
  }
  return kExitOk;
}

int cmd_oracle(const retprobe::scenario::Scenario& sc, std::uint64_t seed,
               std::int64_t samples) {
  using namespace retprobe;
  const std::vector<double> values = scenario::sweep_values(sc);
  const double mid = values[values.size() / 2];
  std::cout << "oracle checks for " << sc.name << " at " << sc.sweep_parameter << " = " << mid
            << " (" << samples << " samples)\n";
  bool all_ok = true;
  for (scenario::LightKind kind : sc.states) {
    const scenario::ResolvedPoint rp = scenario::resolve_point(sc, kind, mid);
    const retina::MixedDistribution law =
        retina::network_output(rp.spec, rp.photons, sc.fisher.grid);
    const mc::SampleBatch batch = mc::sample_network(rp.spec, rp.photons, samples, seed);
    const double tv = mc::tv_distance(batch, law);

    const double p = law.atom_mass;
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-300) /
                                static_cast<double>(batch.count));
    const double atom_sigma = (batch.zero_fraction() - p) / se;

    // A faithful sampler cannot beat the multinomial noise floor, so the
    // hard 0.01 budget only binds once the floor drops below it.
    const double tv_limit = std::max(0.01, 2.0 * mc::tv_noise_floor(law, samples));
    const bool tv_ok = tv < tv_limit;
    const bool atom_ok = std::abs(atom_sigma) < 4.0;
    all_ok = all_ok && tv_ok && atom_ok;
    std::cout << scenario::kind_name(kind) << ": tv=" << tv << " (limit " << tv_limit
              << (tv_ok ? ", ok)" : ", FAIL)") << " atom_z=" << atom_sigma
              << (atom_ok ? " (ok)" : " (FAIL)");

    if (rp.spec.weights.size() == 1) {
      const metrology::ScalarFisher grid_fi = metrology::fisher_scalar(rp.spec, rp.photons, sc.fisher);
      const double delta = 0.02 * rp.spec.weights[0];
      const mc::McFisher mc_fi =
          mc::mc_fisher(rp.spec, rp.photons, -1, delta, samples, seed + 1);
      const double tol = std::max(0.05 * grid_fi.value, 3.0 * mc_fi.std_error);
      const bool fisher_ok = std::abs(mc_fi.value - grid_fi.value) <= tol;
      all_ok = all_ok && fisher_ok;
      std::cout << " fisher_grid=" << grid_fi.value << " fisher_mc=" << mc_fi.value
                << "+-" << mc_fi.std_error << (fisher_ok ? " (ok)" : " (FAIL)");
    }
    std::cout << "\n";
  }
  if (!all_ok) {
    std::cerr << "error: oracle checks failed\n";
    return kExitAllFailed;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-statistics retina-network estimation sweeps"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string preset_name;
  std::string out_path;
  std::string format;
  std::uint64_t seed = 20240817ULL;
  std::int64_t samples = 1000000;
  int jobs = 1;

  auto add_source = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "path to a scenario JSON file");
    cmd->add_option("--preset", preset_name, "name of a built-in preset");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "evaluate a sweep and emit the result table");
  add_source(run_cmd);
  run_cmd->add_option("--out", out_path, "output path (default: scenario output.path or stdout)");
  run_cmd->add_option("--format", format, "csv or json (overrides scenario output.format)")
      ->check(CLI::IsMember({"csv", "json", ""}));
  run_cmd->add_option("--seed", seed, "seed for MC diagnostics");
  run_cmd->add_option("--jobs", jobs, "worker threads for sweep points")
      ->check(CLI::PositiveNumber);

  CLI::App* val_cmd = app.add_subcommand("validate", "check a scenario without running it");
  add_source(val_cmd);

  app.add_subcommand("list-presets", "list built-in presets");

  CLI::App* oracle_cmd =
      app.add_subcommand("oracle", "Monte-Carlo cross-checks of the grid engine");
  add_source(oracle_cmd);
  oracle_cmd->add_option("--seed", seed, "sampler seed");
  oracle_cmd->add_option("--samples", samples, "replicates per check")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand("list-presets")) return cmd_list_presets();
    const retprobe::scenario::Scenario sc = load(scenario_path, preset_name);
    if (app.got_subcommand("validate")) return cmd_validate(sc);
    if (app.got_subcommand("oracle")) return cmd_oracle(sc, seed, samples);
    return cmd_run(sc, out_path, format, jobs);
  } catch (const retprobe::scenario::ScenarioError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
