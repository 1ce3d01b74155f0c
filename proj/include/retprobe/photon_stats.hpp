#pragma once

#include <span>
#include <vector>

namespace retprobe::photon {

inline constexpr double kDefaultTrunc = 1e-12;

enum class StateKind { Fock, Coherent, Thermal, Transformed };

/// Truncated photon-number distribution. Entries are never renormalized
/// after truncation; the removed tail is tracked in tail_mass_bound so
/// downstream mass checks can account for it.
struct PhotonDistribution {
  std::vector<double> probs;  // probs[n] = P(N = n)
  double mean_photons = 0.0;  // nominal mean of the constructed state
  StateKind kind = StateKind::Fock;
  double tail_mass_bound = 0.0;

  double total_mass() const;
  double mean() const;  // sum n * probs[n]
  int max_photons() const { return static_cast<int>(probs.size()) - 1; }
};

/// Definite photon number n.
PhotonDistribution fock(int n);

/// Poissonian statistics with the given mean, truncated at tail mass
/// below eps_trunc.
PhotonDistribution coherent(double mean, double eps_trunc = kDefaultTrunc);

/// Bose-Einstein (geometric) statistics with the given mean.
PhotonDistribution thermal(double mean, double eps_trunc = kDefaultTrunc);

/// Beam-splitter transmission u with vacuum on the idle port.
struct LossChannel {
  double u = 1.0;
};

enum class LossMode {
  Exact,         // binomial thinning of the number distribution
  PaperPoisson,  // Fock input mapped to Poisson(u*n); others as Exact
};

/// Photon statistics at the transmitted port. Exact mode applies binomial
/// thinning; PaperPoisson replaces the Fock-input output with a Poisson
/// law of the same mean (the two differ: thinning a definite number state
/// gives a binomial law).
PhotonDistribution apply_loss(const PhotonDistribution& dist, LossChannel channel,
                              LossMode mode = LossMode::Exact,
                              double eps_trunc = kDefaultTrunc);

/// Binomial thinning of an arbitrary nonnegative-count pmf: each unit
/// survives independently with probability `survival`. Preserves total mass.
std::vector<double> binomial_thin(std::span<const double> probs, double survival);

/// Poisson pmf vector with tail mass below eps_trunc.
std::vector<double> poisson_pmf(double mean, double eps_trunc);

}  // namespace retprobe::photon
