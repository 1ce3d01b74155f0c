#include "retprobe/photon_stats.hpp"

#include <cmath>
#include <stdexcept>

namespace retprobe::photon {

double PhotonDistribution::total_mass() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

double PhotonDistribution::mean() const {
  double s = 0.0;
  for (std::size_t n = 0; n < probs.size(); ++n) s += static_cast<double>(n) * probs[n];
  return s;
}

PhotonDistribution fock(int n) {
  if (n < 0) throw std::invalid_argument("fock: negative photon number");
  PhotonDistribution d;
  d.probs.assign(static_cast<std::size_t>(n) + 1, 0.0);
  d.probs.back() = 1.0;
  d.mean_photons = static_cast<double>(n);
  d.kind = StateKind::Fock;
  d.tail_mass_bound = 0.0;
  return d;
}

std::vector<double> poisson_pmf(double mean, double eps_trunc) {
  if (mean < 0.0) throw std::invalid_argument("poisson_pmf: negative mean");
  if (!(eps_trunc > 0.0 && eps_trunc < 1.0))
    throw std::invalid_argument("poisson_pmf: eps_trunc outside (0,1)");
  std::vector<double> probs;
  double p = std::exp(-mean);
  double cum = p;
  probs.push_back(p);
  // p_{n+1} = p_n * mean / (n+1); stop once the retained mass reaches 1-eps.
  for (int n = 0; cum < 1.0 - eps_trunc; ++n) {
    p *= mean / static_cast<double>(n + 1);
    cum += p;
    probs.push_back(p);
    if (n > 400000) throw std::runtime_error("poisson_pmf: truncation did not converge");
  }
  return probs;
}

PhotonDistribution coherent(double mean, double eps_trunc) {
  PhotonDistribution d;
  d.probs = poisson_pmf(mean, eps_trunc);
  d.mean_photons = mean;
  d.kind = StateKind::Coherent;
  d.tail_mass_bound = std::max(0.0, 1.0 - d.total_mass());
  return d;
}

PhotonDistribution thermal(double mean, double eps_trunc) {
  if (mean < 0.0) throw std::invalid_argument("thermal: negative mean");
  if (!(eps_trunc > 0.0 && eps_trunc < 1.0))
    throw std::invalid_argument("thermal: eps_trunc outside (0,1)");
  PhotonDistribution d;
  d.kind = StateKind::Thermal;
  d.mean_photons = mean;
  double p = 1.0 / (1.0 + mean);
  const double ratio = mean / (1.0 + mean);
  double cum = p;
  d.probs.push_back(p);
  while (cum < 1.0 - eps_trunc) {
    p *= ratio;
    cum += p;
    d.probs.push_back(p);
    if (d.probs.size() > 400000) throw std::runtime_error("thermal: truncation did not converge");
  }
  d.tail_mass_bound = std::max(0.0, 1.0 - d.total_mass());
  return d;
}

std::vector<double> binomial_thin(std::span<const double> probs, double survival) {
  if (!(survival >= 0.0 && survival <= 1.0))
    throw std::invalid_argument("binomial_thin: survival outside [0,1]");
  if (probs.empty()) return {};
  if (survival == 1.0) return {probs.begin(), probs.end()};

  std::vector<double> out(probs.size(), 0.0);
  if (survival == 0.0) {
    double total = 0.0;
    for (double p : probs) total += p;
    out.assign(1, total);
    return out;
  }

  const double log_u = std::log(survival);
  const double log_v = std::log1p(-survival);
  for (std::size_t n = 0; n < probs.size(); ++n) {
    const double pn = probs[n];
    if (pn == 0.0) continue;
    // Binomial(n, u) row via the ratio recurrence, started at m = 0.
    double w = std::exp(static_cast<double>(n) * log_v);  // (1-u)^n
    if (w == 0.0) {
      // Deep underflow start; rebuild each term in log space instead.
      for (std::size_t m = 0; m <= n; ++m) {
        const double lw = std::lgamma(static_cast<double>(n) + 1.0) -
                          std::lgamma(static_cast<double>(m) + 1.0) -
                          std::lgamma(static_cast<double>(n - m) + 1.0) +
                          static_cast<double>(m) * log_u +
                          static_cast<double>(n - m) * log_v;
        out[m] += pn * std::exp(lw);
      }
      continue;
    }
    const double r = survival / (1.0 - survival);
    for (std::size_t m = 0; m <= n; ++m) {
      out[m] += pn * w;
      if (m < n)
        w *= r * static_cast<double>(n - m) / static_cast<double>(m + 1);
    }
  }

  // Trim trailing negligible entries, keeping the trimmed mass implicit in
  // the (unchanged) total.
  while (out.size() > 1 && out.back() == 0.0) out.pop_back();
  return out;
}

PhotonDistribution apply_loss(const PhotonDistribution& dist, LossChannel channel,
                              LossMode mode, double eps_trunc) {
  if (!(channel.u >= 0.0 && channel.u <= 1.0))
    throw std::invalid_argument("apply_loss: transmission outside [0,1]");

  PhotonDistribution out;
  out.kind = StateKind::Transformed;
  out.mean_photons = channel.u * dist.mean_photons;

  if (mode == LossMode::PaperPoisson && dist.kind == StateKind::Fock) {
    const int n = dist.max_photons();
    out.probs = poisson_pmf(channel.u * static_cast<double>(n), eps_trunc);
    out.tail_mass_bound = std::max(0.0, 1.0 - out.total_mass());
    return out;
  }

  out.probs = binomial_thin(dist.probs, channel.u);
  out.tail_mass_bound = dist.tail_mass_bound;
  return out;
}

}  // namespace retprobe::photon
