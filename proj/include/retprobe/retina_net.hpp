#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "retprobe/numerics.hpp"
#include "retprobe/photon_stats.hpp"

namespace retprobe::retina {

/// Rod cell noise model: photocurrent for k isomerizations is Gaussian with
/// mean k*amp_mean and variance sigma_dark^2 + k*sigma_amp^2.
struct RodParams {
  double sigma_dark = 0.15;  // pA, dark-noise SD
  double sigma_amp = 0.5;    // pA, per-isomerization amplitude SD
  double amp_mean = 0.7;     // pA, mean single-isomerization amplitude
  double eta = 0.4;          // photodetection efficiency
};

/// Probability vector over isomerization count k >= 0.
struct CountDistribution {
  std::vector<double> probs;

  double total_mass() const;
  double mean() const;
  int max_count() const { return static_cast<int>(probs.size()) - 1; }
};

/// A point mass at zero plus a density sampled on a uniform lattice
/// x_i = (start_index + i) * step. The atom is never folded into the grid;
/// rod photocurrent laws have atom_mass = 0, rectifier outputs generally
/// do not. A clipped rectifier output keeps a node at x = 0 carrying the
/// one-sided density limit so trapezoid integrals see the full support.
struct MixedDistribution {
  double atom_mass = 0.0;
  std::int64_t start_index = 0;
  double step = 0.0;
  std::vector<double> density;

  double grid_start() const { return static_cast<double>(start_index) * step; }
  double point(std::size_t i) const {
    return (static_cast<double>(start_index) + static_cast<double>(i)) * step;
  }
  double density_mass() const;          // trapezoid over the grid
  double total_mass() const { return atom_mass + density_mass(); }
  double mean() const;                  // the atom sits at zero
  double density_at(double x) const;    // linear interpolation, 0 off-grid
};

/// Optional intermediate layer: rods are partitioned into groups, each group
/// feeding one rectifier unit through its own input weights.
struct BipolarLayer {
  std::vector<std::vector<int>> groups;         // rod indices per unit
  std::vector<std::vector<double>> rod_weights; // parallel to groups
  double threshold = 0.0;
};

/// Two- or three-layer feedforward model. For the two-layer case `weights`
/// has one entry per rod; with a bipolar layer it has one entry per group
/// (the ganglion input weights, the estimation targets).
struct NetworkSpec {
  std::vector<RodParams> rods;
  std::vector<double> weights;
  double ganglion_threshold = 0.1;  // pA
  std::optional<BipolarLayer> bipolar;
  bool correlated_absorption = false;
};

/// Grid construction policy for the automatic lattice. Densities are stored
/// only where they exceed kDensityTrim; the mass given up by trimming and
/// by the count-tail cut stays far below kMassTolerance and shows up in the
/// mass-defect diagnostics rather than being hidden by renormalization.
struct GridPolicy {
  double step = 0.002;       // pA
  double sigma_span = 8.0;   // half-width per mixture component, in SDs
  double count_trim = 1e-10; // dropped count tail mass bound
};

/// Grid nodes with density below this are trimmed from the ends of a law.
inline constexpr double kDensityTrim = 1e-14;

/// P(k | n photons): binomial with success probability eta.
CountDistribution isomerization_given_n(int n, double eta);

/// Isomerization law for a photon distribution (binomial mixed over p_n).
CountDistribution isomerization_dist(const photon::PhotonDistribution& photons, double eta);

/// Isomerization law when photon depletion by the other cells is accounted
/// for: the returned law is the marginal for the last of num_cells cells,
/// with cells drawing sequentially from the shared photon pool.
CountDistribution isomerization_dist_correlated(const photon::PhotonDistribution& photons,
                                                double eta, int num_cells);

/// Gaussian-mixture photocurrent density on the given grid. The grid start
/// must lie on the step lattice and must cover all but eps_norm of the mass.
MixedDistribution photocurrent_density(const CountDistribution& counts, const RodParams& rod,
                                       const numerics::GridSpec& grid);

/// Full single-rod chain: isomerization then photocurrent.
MixedDistribution rod_output(const photon::PhotonDistribution& photons, const RodParams& rod,
                             const numerics::GridSpec& grid);

/// Lattice grid covering every mixture component of the weighted rod law to
/// +-sigma_span SDs (never less than the unweighted default span).
numerics::GridSpec auto_grid(const CountDistribution& counts, const RodParams& rod,
                             double weight, const GridPolicy& policy = {});

/// Law of sum_i w_i X_i for independent mixed inputs. Atoms are combined
/// symbolically; densities are scaled by change of variables and convolved
/// on the common lattice. Weights must be >= 0; a zero weight collapses its
/// input to a point mass at zero.
MixedDistribution weighted_sum(const std::vector<std::pair<MixedDistribution, double>>& inputs);

/// Law of max(0, X - threshold) up to the rectifier convention: mass at or
/// below the threshold collapses into the atom at zero. An input with an
/// atom requires threshold >= 0 (otherwise the atom would map to a point
/// mass off zero, which this representation cannot hold).
MixedDistribution relu_output(const MixedDistribution& input, double threshold);

/// Ganglion output law for the full network.
MixedDistribution network_output(const NetworkSpec& spec,
                                 const photon::PhotonDistribution& photons,
                                 const GridPolicy& policy = {});

inline constexpr double kMassTolerance = 1e-6;  // eps_norm

}  // namespace retprobe::retina
