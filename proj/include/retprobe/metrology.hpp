#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retprobe/photon_stats.hpp"
#include "retprobe/retina_net.hpp"

namespace retprobe::metrology {

// Whether the point mass at zero output enters the information integral.
// Full is the expectation over the complete mixed law; DensityOnly drops
// the atom term for comparison against density-only readings.
enum class FisherDomain { Full, DensityOnly };

// KScaled puts the confidence constant K^n into the reported volume
// (axes K*sqrt(lambda_i)); PaperEq16 reports the K-free value. Orderings
// across light states are identical under both, since K is state-blind.
enum class VolumeConvention { KScaled, PaperEq16 };

struct FisherOptions {
  double delta_rel = 1e-3;      // per-weight step: delta_i = delta_rel * w_i
  double density_floor = 1e-12; // score undefined where density <= floor
  FisherDomain domain = FisherDomain::Full;
  retina::GridPolicy grid{};
  bool check_plateau = true;    // also evaluate at delta/2 and compare
  double plateau_rel = 5e-3;    // max relative drift allowed when halving delta
  double cond_limit = 1e10;     // crlb() refuses beyond this condition number
};

// Finite-difference score of the output law with respect to one weight.
// density_score[j] pairs with base.density[j]; valid[j] == 0 marks nodes
// where any of the three laws falls below the density floor (far tails,
// excluded from information integrals).
struct ScoreProfile {
  double atom_score = 0.0;
  bool atom_valid = false;
  retina::MixedDistribution base;
  std::vector<double> density_score;
  std::vector<unsigned char> valid;
  double mass_defect = 0.0;  // worst |total mass - input mass| seen
};

struct FisherMatrix {
  int dim = 0;
  std::vector<double> entries;  // row-major dim x dim, symmetrized
  bool plateau_ok = true;
  double mass_defect = 0.0;

  double at(int i, int j) const { return entries[static_cast<std::size_t>(i * dim + j)]; }
};

struct ScalarFisher {
  double value = 0.0;
  bool plateau_ok = true;
  double mass_defect = 0.0;
};

struct CrlbResult {
  int dim = 0;
  std::vector<double> matrix;  // inverse Fisher, row-major
  double condition = 1.0;
};

struct EllipsoidReport {
  std::vector<double> crlb;         // row-major input covariance
  std::vector<double> eigenvalues;  // descending, all > 0
  double k = 0.0;                   // sqrt of chi-square quantile, dim dof
  double volume = 0.0;
  double confidence_level = 0.0;
};

ScoreProfile score_profile(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons, int weight_index,
                           double delta, const FisherOptions& opt = {});

// Information for the single effective weight of an equal-weights network:
// every weight is perturbed jointly, so the score is the sum of per-weight
// scores and the value matches 1^T * fisher_matrix * 1.
ScalarFisher fisher_scalar(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons,
                           const FisherOptions& opt = {});

FisherMatrix fisher_matrix(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons,
                           const FisherOptions& opt = {});

// Inverse Fisher. Throws std::domain_error when the matrix is not positive
// definite or its condition number exceeds cond_limit; the message carries
// the condition number.
CrlbResult crlb(const FisherMatrix& fisher, double cond_limit = 1e10);

EllipsoidReport ellipsoid(const std::vector<double>& crlb_matrix, int dim,
                          double confidence_level,
                          VolumeConvention convention = VolumeConvention::KScaled);

// Volume of the n-ball of radius 1, pi^{n/2} / Gamma(n/2 + 1).
double unit_ball_volume(int dim);

// One sweep point: CRLB when a single weight is free, ellipsoid volume
// otherwise. Numerical failures land in status instead of throwing so a
// sweep can continue past bad points.
struct PointResult {
  double value = 0.0;
  std::string metric_kind;  // "crlb" or "volume"
  double fisher_cond = 1.0;
  double mass_defect = 0.0;
  bool plateau_ok = true;
  std::string status = "ok";  // anything else is a failure reason
};

PointResult evaluate_point(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons,
                           const FisherOptions& opt, double confidence_level,
                           VolumeConvention convention = VolumeConvention::KScaled);

// Sweep a family of weight vectors against one photon distribution.
struct SweepRequest {
  retina::NetworkSpec base;
  std::vector<double> sweep_values;
  std::vector<std::vector<double>> weight_sets;  // parallel to sweep_values
  FisherOptions options{};
  double confidence_level = 0.99;
  VolumeConvention convention = VolumeConvention::KScaled;
};

struct SweepRow {
  double sweep_value = 0.0;
  PointResult result;
};

std::vector<SweepRow> volume_sweep(const SweepRequest& request,
                                   const photon::PhotonDistribution& photons);

}  // namespace retprobe::metrology
