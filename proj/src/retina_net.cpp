#include "retprobe/retina_net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "retprobe/kernels/kernels.hpp"

namespace retprobe::retina {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310005024;
constexpr double kLatticeTol = 1e-9;

void trim_density(MixedDistribution& m);

std::int64_t floor_index(double x, double h) {
  return static_cast<std::int64_t>(std::floor(x / h + kLatticeTol));
}

std::int64_t ceil_index(double x, double h) {
  return static_cast<std::int64_t>(std::ceil(x / h - kLatticeTol));
}

double interp(const std::vector<double>& f, double pos) {
  // pos in index units; zero outside [0, size-1]
  if (pos < 0.0 || f.empty()) return 0.0;
  const double last = static_cast<double>(f.size() - 1);
  if (pos > last) return 0.0;
  const std::size_t i = static_cast<std::size_t>(pos);
  if (i >= f.size() - 1) return f.back();
  const double frac = pos - static_cast<double>(i);
  return f[i] + frac * (f[i + 1] - f[i]);
}

MixedDistribution atom_only(double mass, double step) {
  MixedDistribution m;
  m.atom_mass = mass;
  m.step = step;
  m.start_index = 0;
  return m;
}

// Law of w * X for finite w > 0 by change of variables on the lattice.
MixedDistribution scale_mixed(const MixedDistribution& m, double w) {
  if (m.density.empty()) return atom_only(m.atom_mass, m.step);
  MixedDistribution out;
  out.atom_mass = m.atom_mass;
  out.step = m.step;

  const double s = static_cast<double>(m.start_index);
  const double e = s + static_cast<double>(m.density.size() - 1);
  const std::int64_t lo = static_cast<std::int64_t>(std::ceil(s * w - kLatticeTol));
  const std::int64_t hi = static_cast<std::int64_t>(std::floor(e * w + kLatticeTol));
  if (hi - lo + 1 < 2)
    throw std::runtime_error("scale_mixed: scaled support falls below grid resolution");

  out.start_index = lo;
  out.density.resize(static_cast<std::size_t>(hi - lo + 1));
  const double inv_w = 1.0 / w;
  for (std::int64_t j = lo; j <= hi; ++j) {
    const double pos = static_cast<double>(j) * inv_w - s;
    out.density[static_cast<std::size_t>(j - lo)] = interp(m.density, pos) * inv_w;
  }
  trim_density(out);
  return out;
}

// Law of X + Y for independent mixed inputs on the same lattice.
MixedDistribution convolve_mixed(const MixedDistribution& a, const MixedDistribution& b) {
  if (a.step > 0.0 && b.step > 0.0 && std::abs(a.step - b.step) > kLatticeTol * a.step)
    throw std::invalid_argument("convolve_mixed: step mismatch");
  const double h = a.step > 0.0 ? a.step : b.step;

  const bool da = a.density.size() >= 2;
  const bool db = b.density.size() >= 2;

  MixedDistribution out;
  out.step = h;
  out.atom_mass = a.atom_mass * b.atom_mass;

  if (!da && !db) return out;
  if (!da) {
    out.start_index = b.start_index;
    out.density = b.density;
    for (double& v : out.density) v *= a.atom_mass;
    out.atom_mass = a.atom_mass * b.atom_mass;
    return out;
  }
  if (!db) {
    out.start_index = a.start_index;
    out.density = a.density;
    for (double& v : out.density) v *= b.atom_mass;
    return out;
  }

  const std::int64_t na = static_cast<std::int64_t>(a.density.size());
  const std::int64_t nb = static_cast<std::int64_t>(b.density.size());
  const std::int64_t conv_lo = a.start_index + b.start_index;
  const std::int64_t conv_hi = conv_lo + na + nb - 2;

  std::int64_t lo = conv_lo;
  std::int64_t hi = conv_hi;
  if (a.atom_mass > 0.0) {
    lo = std::min(lo, b.start_index);
    hi = std::max(hi, b.start_index + nb - 1);
  }
  if (b.atom_mass > 0.0) {
    lo = std::min(lo, a.start_index);
    hi = std::max(hi, a.start_index + na - 1);
  }

  out.start_index = lo;
  out.density.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);

  std::vector<double> conv(static_cast<std::size_t>(na + nb - 1));
  kernels::active().convolve(conv.data(), a.density.data(), a.density.size(),
                             b.density.data(), b.density.size(), h);
  // Each conv[k] is a trapezoid sum over the overlap window, and summing those
  // against the output trapezoid weights loses exactly
  // h^2/4 (a_first - a_last)(b_first - b_last) of the product mass: the onset
  // mass of the two corner cells, which a zero corner node cannot represent.
  // Carrying that mass on the corner nodes (scaled by the trapezoid weight of
  // their embedded position) keeps convolution mass-exact up to
  // h^2/4 (a_first b_last + a_last b_first), negligible for trimmed edges.
  {
    const double wf = (conv_lo == lo) ? 0.5 : 1.0;
    const double wl = (conv_hi == hi) ? 0.5 : 1.0;
    conv.front() = 0.25 * h * a.density.front() * b.density.front() / wf;
    conv.back() = 0.25 * h * a.density.back() * b.density.back() / wl;
  }
  for (std::int64_t k = 0; k < na + nb - 1; ++k)
    out.density[static_cast<std::size_t>(conv_lo - lo + k)] += conv[static_cast<std::size_t>(k)];

  if (a.atom_mass > 0.0)
    for (std::int64_t k = 0; k < nb; ++k)
      out.density[static_cast<std::size_t>(b.start_index - lo + k)] +=
          a.atom_mass * b.density[static_cast<std::size_t>(k)];
  if (b.atom_mass > 0.0)
    for (std::int64_t k = 0; k < na; ++k)
      out.density[static_cast<std::size_t>(a.start_index - lo + k)] +=
          b.atom_mass * a.density[static_cast<std::size_t>(k)];
  trim_density(out);
  return out;
}

// Largest k kept when dropping a count tail of total mass < trim.
int trimmed_count_size(const CountDistribution& counts, double trim) {
  int last = static_cast<int>(counts.probs.size()) - 1;
  double tail = 0.0;
  while (last > 0) {
    tail += counts.probs[static_cast<std::size_t>(last)];
    if (tail >= trim) break;
    --last;
  }
  return last + 1;
}

// Drops leading/trailing nodes below kDensityTrim; the removed mass is
// bounded by kDensityTrim times the removed span.
void trim_density(MixedDistribution& m) {
  if (m.density.size() < 2) return;
  std::size_t lo = 0;
  std::size_t hi = m.density.size() - 1;
  while (lo < hi && m.density[lo] <= kDensityTrim) ++lo;
  while (hi > lo && m.density[hi] <= kDensityTrim) --hi;
  if (lo == 0 && hi == m.density.size() - 1) return;
  if (hi - lo + 1 < 2) {
    m.density.clear();
    return;
  }
  std::vector<double> kept(m.density.begin() + static_cast<std::ptrdiff_t>(lo),
                           m.density.begin() + static_cast<std::ptrdiff_t>(hi + 1));
  m.density = std::move(kept);
  m.start_index += static_cast<std::int64_t>(lo);
}

// Weighted rod law built directly as a Gaussian mixture: w * A has
// components N(w*k*amp_mean, w^2 * (sigma_D^2 + k*sigma_A^2)).
MixedDistribution weighted_rod_law(const CountDistribution& counts, const RodParams& rod,
                                   double w, const GridPolicy& policy) {
  if (w == 0.0) return atom_only(counts.total_mass(), policy.step);

  const int kmax = trimmed_count_size(counts, policy.count_trim) - 1;
  double lo = 0.0, hi = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    const double mu = w * static_cast<double>(k) * rod.amp_mean;
    const double sd = w * std::sqrt(rod.sigma_dark * rod.sigma_dark +
                                    static_cast<double>(k) * rod.sigma_amp * rod.sigma_amp);
    lo = std::min(lo, mu - policy.sigma_span * sd);
    hi = std::max(hi, mu + policy.sigma_span * sd);
  }

  MixedDistribution out;
  out.step = policy.step;
  out.start_index = floor_index(lo, policy.step);
  const std::int64_t end_index = ceil_index(hi, policy.step);
  out.density.assign(static_cast<std::size_t>(end_index - out.start_index + 1), 0.0);

  const double x0 = out.grid_start();
  for (int k = 0; k <= kmax; ++k) {
    const double pk = counts.probs[static_cast<std::size_t>(k)];
    if (pk <= 0.0) continue;
    const double mu = w * static_cast<double>(k) * rod.amp_mean;
    const double sd = w * std::sqrt(rod.sigma_dark * rod.sigma_dark +
                                    static_cast<double>(k) * rod.sigma_amp * rod.sigma_amp);
    kernels::active().gauss_accum(out.density.data(), out.density.size(), x0, policy.step,
                                  mu, 1.0 / sd, pk / (sd * kSqrt2Pi));
  }
  trim_density(out);
  return out;
}

}  // namespace

double CountDistribution::total_mass() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

double CountDistribution::mean() const {
  double s = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) s += static_cast<double>(k) * probs[k];
  return s;
}

double MixedDistribution::density_mass() const {
  return numerics::trapezoid(density, step);
}

double MixedDistribution::mean() const {
  return numerics::trapezoid_first_moment(density, grid_start(), step);
}

double MixedDistribution::density_at(double x) const {
  if (density.empty() || step <= 0.0) return 0.0;
  return interp(density, x / step - static_cast<double>(start_index));
}

CountDistribution isomerization_given_n(int n, double eta) {
  if (n < 0) throw std::invalid_argument("isomerization_given_n: negative n");
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("isomerization_given_n: eta outside [0,1]");
  std::vector<double> delta(static_cast<std::size_t>(n) + 1, 0.0);
  delta.back() = 1.0;
  CountDistribution out;
  out.probs = photon::binomial_thin(delta, eta);
  return out;
}

CountDistribution isomerization_dist(const photon::PhotonDistribution& photons, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("isomerization_dist: eta outside [0,1]");
  CountDistribution out;
  out.probs = photon::binomial_thin(photons.probs, eta);
  return out;
}

CountDistribution isomerization_dist_correlated(const photon::PhotonDistribution& photons,
                                                double eta, int num_cells) {
  if (num_cells < 2)
    throw std::invalid_argument("isomerization_dist_correlated: num_cells < 2");
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("isomerization_dist_correlated: eta outside [0,1]");

  CountDistribution out;
  if (eta == 0.0 || eta == 1.0) {
    // eta = 0: nothing detected; eta = 1: the first cell exhausts the pool
    // and the marginal for the last cell is again a point mass at zero.
    out.probs.assign(1, photons.total_mass());
    return out;
  }

  if (num_cells == 2) {
    // Two-cell marginal written out directly: the companion cell takes q of
    // the n photons, leaving n - q available.
    const int nmax = photons.max_photons();
    out.probs.assign(static_cast<std::size_t>(nmax) + 1, 0.0);
    const double log_eta = std::log(eta);
    const double log_ceta = std::log1p(-eta);
    for (int n = 0; n <= nmax; ++n) {
      const double pn = photons.probs[static_cast<std::size_t>(n)];
      if (pn == 0.0) continue;
      for (int q = 0; q <= n; ++q) {
        for (int k = 0; k <= n - q; ++k) {
          const double lt = numerics::log_binomial(n, q) + numerics::log_binomial(n - q, k) +
                            static_cast<double>(k + q) * log_eta +
                            static_cast<double>(2 * (n - q) - k) * log_ceta;
          out.probs[static_cast<std::size_t>(k)] += pn * std::exp(lt);
        }
      }
    }
    while (out.probs.size() > 1 && out.probs.back() == 0.0) out.probs.pop_back();
    return out;
  }

  // Sequential depletion: each preceding cell thins the pool by eta, the
  // final cell isomerizes from what is left.
  std::vector<double> remaining(photons.probs.begin(), photons.probs.end());
  for (int j = 0; j < num_cells - 1; ++j)
    remaining = photon::binomial_thin(remaining, 1.0 - eta);
  out.probs = photon::binomial_thin(remaining, eta);
  return out;
}

MixedDistribution photocurrent_density(const CountDistribution& counts, const RodParams& rod,
                                       const numerics::GridSpec& grid) {
  if (!grid.valid()) throw std::invalid_argument("photocurrent_density: invalid grid");
  const double idx = grid.start / grid.step;
  if (std::abs(idx - std::round(idx)) > kLatticeTol)
    throw std::invalid_argument("photocurrent_density: grid start must lie on the step lattice");

  // Reject grids that clip more than eps_norm of the mixture mass.
  double truncated = 0.0;
  for (std::size_t k = 0; k < counts.probs.size(); ++k) {
    const double mu = static_cast<double>(k) * rod.amp_mean;
    const double sd = std::sqrt(rod.sigma_dark * rod.sigma_dark +
                                static_cast<double>(k) * rod.sigma_amp * rod.sigma_amp);
    truncated += counts.probs[k] * (numerics::normal_cdf((grid.start - mu) / sd) +
                                    numerics::normal_cdf((mu - grid.end()) / sd));
  }
  if (truncated > kMassTolerance)
    throw std::invalid_argument("photocurrent_density: grid truncates too much mass");

  MixedDistribution out;
  out.step = grid.step;
  out.start_index = static_cast<std::int64_t>(std::llround(idx));
  out.density.assign(static_cast<std::size_t>(grid.count), 0.0);
  for (std::size_t k = 0; k < counts.probs.size(); ++k) {
    const double pk = counts.probs[k];
    if (pk <= 0.0) continue;
    const double mu = static_cast<double>(k) * rod.amp_mean;
    const double sd = std::sqrt(rod.sigma_dark * rod.sigma_dark +
                                static_cast<double>(k) * rod.sigma_amp * rod.sigma_amp);
    kernels::active().gauss_accum(out.density.data(), out.density.size(), grid.start, grid.step,
                                  mu, 1.0 / sd, pk / (sd * kSqrt2Pi));
  }
  return out;
}

MixedDistribution rod_output(const photon::PhotonDistribution& photons, const RodParams& rod,
                             const numerics::GridSpec& grid) {
  return photocurrent_density(isomerization_dist(photons, rod.eta), rod, grid);
}

numerics::GridSpec auto_grid(const CountDistribution& counts, const RodParams& rod,
                             double weight, const GridPolicy& policy) {
  const int kmax = trimmed_count_size(counts, policy.count_trim) - 1;
  // Default span scaled by the weight, extended to cover every component.
  double lo = weight * -2.0;
  double hi = weight * (static_cast<double>(kmax) * rod.amp_mean + 4.0);
  for (int k = 0; k <= kmax; ++k) {
    const double mu = weight * static_cast<double>(k) * rod.amp_mean;
    const double sd = weight * std::sqrt(rod.sigma_dark * rod.sigma_dark +
                                         static_cast<double>(k) * rod.sigma_amp * rod.sigma_amp);
    lo = std::min(lo, mu - policy.sigma_span * sd);
    hi = std::max(hi, mu + policy.sigma_span * sd);
  }
  numerics::GridSpec g;
  g.step = policy.step;
  const std::int64_t si = floor_index(lo, policy.step);
  g.start = static_cast<double>(si) * policy.step;
  g.count = static_cast<int>(ceil_index(hi, policy.step) - si + 1);
  return g;
}

MixedDistribution weighted_sum(const std::vector<std::pair<MixedDistribution, double>>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("weighted_sum: no inputs");
  MixedDistribution acc;
  bool first = true;
  for (const auto& [dist, w] : inputs) {
    if (w < 0.0) throw std::invalid_argument("weighted_sum: negative weight");
    MixedDistribution scaled =
        (w == 0.0) ? atom_only(dist.total_mass(), dist.step) : scale_mixed(dist, w);
    if (first) {
      acc = std::move(scaled);
      first = false;
    } else {
      acc = convolve_mixed(acc, scaled);
    }
  }
  return acc;
}

MixedDistribution relu_output(const MixedDistribution& input, double threshold) {
  if (input.atom_mass > 0.0 && threshold < 0.0)
    throw std::invalid_argument(
        "relu_output: negative threshold with an input atom is not representable");

  MixedDistribution out;
  out.step = input.step;
  out.start_index = 0;
  out.atom_mass = input.atom_mass;
  if (input.density.size() < 2) return out;

  const double h = input.step;
  const double s = static_cast<double>(input.start_index);
  const double n = static_cast<double>(input.density.size());
  const double t = threshold / h;  // cut position in index units
  const bool on_lattice = std::abs(t - std::round(t)) < kLatticeTol;
  const double x_min_idx = s;
  const double x_max_idx = s + n - 1.0;

  if (t >= x_max_idx - kLatticeTol) {  // fully clipped
    out.atom_mass = input.atom_mass + input.density_mass();
    return out;
  }

  if (t <= x_min_idx + kLatticeTol) {  // pure shift, nothing clipped
    if (on_lattice) {
      out.start_index = input.start_index - static_cast<std::int64_t>(std::llround(t));
      out.density = input.density;
    } else {
      const std::int64_t j_lo = std::max<std::int64_t>(
          0, static_cast<std::int64_t>(std::ceil(s - t - kLatticeTol)));
      const std::int64_t j_hi = static_cast<std::int64_t>(std::floor(x_max_idx - t + kLatticeTol));
      out.start_index = j_lo;
      out.density.resize(static_cast<std::size_t>(j_hi - j_lo + 1));
      for (std::int64_t j = j_lo; j <= j_hi; ++j)
        out.density[static_cast<std::size_t>(j - j_lo)] =
            interp(input.density, static_cast<double>(j) + t - s);
    }
    trim_density(out);
    return out;
  }

  // The cut lands inside the support: mass at or below T joins the atom,
  // the rest shifts left by T. The output keeps a node at F = 0 carrying
  // the one-sided limit f(T) so grid integrals cover the full support.
  double clip_mass = 0.0;
  if (on_lattice) {
    const std::int64_t b = static_cast<std::int64_t>(std::llround(t)) - input.start_index;
    clip_mass = numerics::trapezoid(
        std::span<const double>(input.density.data(), static_cast<std::size_t>(b + 1)), h);
    const std::size_t n_out = input.density.size() - static_cast<std::size_t>(b);
    out.density.resize(n_out);
    std::copy(input.density.begin() + b, input.density.end(), out.density.begin());
  } else {
    // Off-lattice cut: the tail is resampled by linear interpolation, so the
    // node values stay exact for the interpolant but its trapezoid mass
    // differs from the clipped input by about frac*(1-frac)/2 * h^2 * f'(T)
    // (the interpolant's kinks fall inside the resampled cells). The defect
    // is reported by the mass diagnostics instead of being smeared back
    // onto the nodes.
    const double cut_pos = t - s;  // in input index units, in (0, n-1)
    const std::int64_t b = static_cast<std::int64_t>(std::floor(cut_pos));
    clip_mass = numerics::trapezoid(
        std::span<const double>(input.density.data(), static_cast<std::size_t>(b + 1)), h);
    const double f_cut = interp(input.density, cut_pos);
    const double frac = cut_pos - static_cast<double>(b);
    clip_mass += 0.5 * (input.density[static_cast<std::size_t>(b)] + f_cut) * frac * h;

    const std::int64_t j_hi = static_cast<std::int64_t>(std::floor(x_max_idx - t));
    out.density.resize(static_cast<std::size_t>(j_hi + 1));
    for (std::int64_t j = 0; j <= j_hi; ++j)
      out.density[static_cast<std::size_t>(j)] =
          interp(input.density, static_cast<double>(j) + cut_pos);
  }
  out.atom_mass = input.atom_mass + clip_mass;
  trim_density(out);
  return out;
}

MixedDistribution network_output(const NetworkSpec& spec,
                                 const photon::PhotonDistribution& photons,
                                 const GridPolicy& policy) {
  if (spec.rods.empty()) throw std::invalid_argument("network_output: no rods");
  const int n_rods = static_cast<int>(spec.rods.size());
  for (double w : spec.weights)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("network_output: weights must be finite and >= 0");

  // Per-rod isomerization laws; rods sharing an efficiency share the law.
  std::vector<CountDistribution> counts(spec.rods.size());
  for (int i = 0; i < n_rods; ++i) {
    bool reused = false;
    for (int j = 0; j < i; ++j) {
      if (spec.rods[j].eta == spec.rods[i].eta) {
        counts[i] = counts[j];
        reused = true;
        break;
      }
    }
    if (reused) continue;
    counts[i] = (spec.correlated_absorption && n_rods >= 2)
                    ? isomerization_dist_correlated(photons, spec.rods[i].eta, n_rods)
                    : isomerization_dist(photons, spec.rods[i].eta);
  }

  if (!spec.bipolar.has_value()) {
    if (spec.weights.size() != spec.rods.size())
      throw std::invalid_argument("network_output: one weight per rod required");
    MixedDistribution acc;
    bool first = true;
    for (int i = 0; i < n_rods; ++i) {
      MixedDistribution law = weighted_rod_law(counts[i], spec.rods[i], spec.weights[i], policy);
      if (first) {
        acc = std::move(law);
        first = false;
      } else {
        acc = convolve_mixed(acc, law);
      }
    }
    return relu_output(acc, spec.ganglion_threshold);
  }

  const BipolarLayer& bip = *spec.bipolar;
  if (spec.weights.size() != bip.groups.size())
    throw std::invalid_argument("network_output: one ganglion weight per bipolar group required");
  if (!bip.rod_weights.empty() && bip.rod_weights.size() != bip.groups.size())
    throw std::invalid_argument("network_output: rod_weights shape mismatch");
  {
    std::vector<int> seen(spec.rods.size(), 0);
    for (const auto& g : bip.groups)
      for (int r : g) {
        if (r < 0 || r >= n_rods) throw std::invalid_argument("network_output: rod index range");
        ++seen[static_cast<std::size_t>(r)];
      }
    for (int c : seen)
      if (c != 1) throw std::invalid_argument("network_output: groups must partition the rods");
  }

  // The ganglion weight commutes with the bipolar rectifier:
  // w * max(0, X - T_b) = max(0, w*X - w*T_b), and w*X scales each rod term
  // analytically inside weighted_rod_law. Building each group law pre-scaled
  // keeps every stage on the common grid without any interpolating resample.
  MixedDistribution summed;
  bool any = false;
  for (std::size_t g = 0; g < bip.groups.size(); ++g) {
    const double gw = spec.weights[g];
    MixedDistribution scaled_group;
    if (gw == 0.0) {
      scaled_group = atom_only(1.0, policy.step);
    } else {
      MixedDistribution acc;
      bool first = true;
      for (std::size_t m = 0; m < bip.groups[g].size(); ++m) {
        const int r = bip.groups[g][m];
        const double rw = bip.rod_weights.empty() ? 1.0 : bip.rod_weights[g][m];
        if (!(rw >= 0.0)) throw std::invalid_argument("network_output: negative rod weight");
        MixedDistribution law =
            weighted_rod_law(counts[static_cast<std::size_t>(r)],
                             spec.rods[static_cast<std::size_t>(r)], gw * rw, policy);
        if (first) {
          acc = std::move(law);
          first = false;
        } else {
          acc = convolve_mixed(acc, law);
        }
      }
      scaled_group = relu_output(acc, gw * bip.threshold);
    }
    if (!any) {
      summed = std::move(scaled_group);
      any = true;
    } else {
      summed = convolve_mixed(summed, scaled_group);
    }
  }
  return relu_output(summed, spec.ganglion_threshold);
}

}  // namespace retprobe::retina
