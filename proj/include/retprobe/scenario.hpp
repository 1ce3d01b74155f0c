#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "retprobe/metrology.hpp"
#include "retprobe/photon_stats.hpp"
#include "retprobe/retina_net.hpp"

namespace retprobe::scenario {

// Configuration problems (bad file, unknown field, inconsistent shapes).
// The message carries the offending field path.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LightKind { Fock, Coherent, Thermal };
const char* kind_name(LightKind kind);

// Weight entry: either an absolute value or a ratio against the swept w1.
struct WeightRule {
  bool is_ratio = false;
  double value = 1.0;
};

struct Scenario {
  std::string name;
  std::string description;

  std::vector<LightKind> states;  // resolved from light.kind ("all" expands)
  double mean_photons = 1.0;

  bool has_loss = false;
  double loss_u = 0.5;
  photon::LossMode loss_mode = photon::LossMode::Exact;

  int rod_count = 1;
  retina::RodParams rod{};  // shared by all rods

  std::vector<WeightRule> weights;  // per rod, or per bipolar group
  double threshold = 0.1;
  bool has_bipolar = false;
  retina::BipolarLayer bipolar{};
  bool correlated_absorption = false;

  std::string sweep_parameter = "weights.w1";  // weights.w1, rods.eta,
                                               // light.mean_photons, loss.u
  // Default weight sweep covers [0.1, 1]: below w ~ 0.08 the ganglion
  // threshold clips nearly all mass and heavy-tailed light can invert the
  // usual state ranking, a regime outside the comparisons the presets model.
  double sweep_start = 0.1;
  double sweep_stop = 1.0;
  int sweep_points = 40;

  metrology::FisherOptions fisher{};
  double confidence = 0.99;
  metrology::VolumeConvention convention = metrology::VolumeConvention::KScaled;
  double eps_trunc = photon::kDefaultTrunc;

  std::string out_format = "csv";  // csv or json
  std::string out_path;            // empty -> stdout
};

// Parse and fully validate a scenario JSON file. Unknown fields, shape
// mismatches, or multiple swept parameters are rejected with field paths.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario_text(const std::string& text, const std::string& origin);

std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
Scenario preset(const std::string& name);

// Network and photon law for one sweep point of one light state.
struct ResolvedPoint {
  retina::NetworkSpec spec;
  photon::PhotonDistribution photons;
};
ResolvedPoint resolve_point(const Scenario& sc, LightKind kind, double sweep_value);

std::vector<double> sweep_values(const Scenario& sc);

struct RunRow {
  std::string state;
  double sweep_value = 0.0;
  metrology::PointResult result;
};

struct RunResult {
  std::string name;
  std::string resolved_json;  // compact echo of every resolved parameter
  std::vector<RunRow> rows;
  int ok_count = 0;
};

// Evaluates every state x sweep point. Rows are ordered by state (fock,
// coherent, thermal) then ascending sweep value regardless of jobs.
RunResult run(const Scenario& sc, int jobs = 1);

std::string to_csv(const RunResult& result);
std::string to_json_text(const RunResult& result);

}  // namespace retprobe::scenario
