#include "retprobe/mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "retprobe/numerics.hpp"

namespace retprobe::mc {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

// splitmix64 stream keyed by (seed, replicate index); replicate streams are
// decorrelated by hashing the key, so partitioning a batch cannot change
// any draw.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t replicate)
      : state_(mix64(seed ^ mix64(replicate * kGamma + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next() {
    state_ += kGamma;
    return mix64(state_);
  }

  double uniform() {  // (0, 1]
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * numerics::kPi * u2);
  }

  int binomial(int n, double p) {
    int k = 0;
    for (int i = 0; i < n; ++i)
      if (uniform() <= p) ++k;
    return k;
  }

 private:
  std::uint64_t state_;
};

// Per-replicate generative pipeline. The "inputs" are the quantities the
// free weights multiply: rod currents for a 2-layer network, rectified
// bipolar sums for a 3-layer one. Weights enter only after the draws, so
// the same noise can be pushed through perturbed weights.
class Generative {
 public:
  Generative(const retina::NetworkSpec& spec, const photon::PhotonDistribution& photons)
      : spec_(spec) {
    if (spec.rods.empty()) throw std::invalid_argument("sample_network: no rods");
    const std::size_t want =
        spec.bipolar.has_value() ? spec.bipolar->groups.size() : spec.rods.size();
    if (spec.weights.size() != want)
      throw std::invalid_argument("sample_network: weight count mismatch");
    cum_.reserve(photons.probs.size());
    double c = 0.0;
    for (double p : photons.probs) {
      c += p;
      cum_.push_back(c);
    }
    if (cum_.empty() || !(c > 0.0))
      throw std::invalid_argument("sample_network: empty photon distribution");
    total_ = c;
  }

  std::size_t input_dim() const { return spec_.weights.size(); }

  void draw_inputs(Rng& rng, std::vector<double>& inputs) const {
    const std::size_t n_rods = spec_.rods.size();
    double currents[64];
    if (n_rods > 64) throw std::invalid_argument("sample_network: too many rods");

    if (spec_.correlated_absorption && n_rods >= 2) {
      int remaining = draw_photons(rng);
      for (std::size_t i = 0; i < n_rods; ++i) {
        const int k = rng.binomial(remaining, spec_.rods[i].eta);
        remaining -= k;
        currents[i] = current(rng, spec_.rods[i], k);
      }
    } else {
      for (std::size_t i = 0; i < n_rods; ++i) {
        const int n = draw_photons(rng);
        const int k = rng.binomial(n, spec_.rods[i].eta);
        currents[i] = current(rng, spec_.rods[i], k);
      }
    }

    if (!spec_.bipolar.has_value()) {
      inputs.assign(currents, currents + n_rods);
      return;
    }
    const retina::BipolarLayer& bip = *spec_.bipolar;
    inputs.assign(bip.groups.size(), 0.0);
    for (std::size_t g = 0; g < bip.groups.size(); ++g) {
      double s = 0.0;
      for (std::size_t m = 0; m < bip.groups[g].size(); ++m) {
        const double rw = bip.rod_weights.empty() ? 1.0 : bip.rod_weights[g][m];
        s += rw * currents[static_cast<std::size_t>(bip.groups[g][m])];
      }
      inputs[g] = std::max(0.0, s - bip.threshold);
    }
  }

  double output(const std::vector<double>& inputs, const std::vector<double>& weights) const {
    double s = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) s += weights[i] * inputs[i];
    return std::max(0.0, s - spec_.ganglion_threshold);
  }

  // Conservative upper bound on any rectified output, for histogram sizing.
  double output_bound(const std::vector<double>& weights) const {
    const int nmax = static_cast<int>(cum_.size()) - 1;
    double bound = 0.0;
    const double wmax = *std::max_element(weights.begin(), weights.end());
    for (const retina::RodParams& rod : spec_.rods) {
      const double sd = std::sqrt(rod.sigma_dark * rod.sigma_dark +
                                  static_cast<double>(nmax) * rod.sigma_amp * rod.sigma_amp);
      bound += wmax * (static_cast<double>(nmax) * rod.amp_mean + 10.0 * sd);
    }
    return bound + std::abs(spec_.ganglion_threshold) + 1.0;
  }

 private:
  int draw_photons(Rng& rng) const {
    const double u = rng.uniform() * total_;
    const auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
    if (it == cum_.end()) return static_cast<int>(cum_.size()) - 1;
    return static_cast<int>(it - cum_.begin());
  }

  double current(Rng& rng, const retina::RodParams& rod, int k) const {
    const double sd = std::sqrt(rod.sigma_dark * rod.sigma_dark +
                                static_cast<double>(k) * rod.sigma_amp * rod.sigma_amp);
    return static_cast<double>(k) * rod.amp_mean + sd * rng.normal();
  }

  const retina::NetworkSpec& spec_;
  std::vector<double> cum_;
  double total_ = 0.0;
};

}  // namespace

SampleBatch sample_network(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons, std::int64_t count,
                           std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_network: count < 1");
  const Generative gen(spec, photons);

  SampleBatch batch;
  batch.seed = seed;
  batch.count = count;
  batch.values.resize(static_cast<std::size_t>(count));
  std::vector<double> inputs;
  for (std::int64_t r = 0; r < count; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    gen.draw_inputs(rng, inputs);
    const double f = gen.output(inputs, spec.weights);
    batch.values[static_cast<std::size_t>(r)] = f;
    if (f == 0.0) ++batch.zero_count;
  }
  return batch;
}

McFisher mc_fisher(const retina::NetworkSpec& spec, const photon::PhotonDistribution& photons,
                   int weight_index, double delta, std::int64_t count, std::uint64_t seed,
                   double bin_width) {
  if (count < 1000) throw std::invalid_argument("mc_fisher: count too small");
  if (!(delta > 0.0)) throw std::invalid_argument("mc_fisher: delta <= 0");
  if (!(bin_width > 0.0)) throw std::invalid_argument("mc_fisher: bin_width <= 0");
  if (weight_index >= static_cast<int>(spec.weights.size()))
    throw std::invalid_argument("mc_fisher: weight index out of range");

  const Generative gen(spec, photons);
  std::vector<double> w_plus = spec.weights;
  std::vector<double> w_minus = spec.weights;
  if (weight_index < 0) {
    for (double& w : w_plus) w += delta;
    for (double& w : w_minus) w -= delta;
  } else {
    w_plus[static_cast<std::size_t>(weight_index)] += delta;
    w_minus[static_cast<std::size_t>(weight_index)] -= delta;
  }
  for (double w : w_minus)
    if (w < 0.0) throw std::invalid_argument("mc_fisher: delta pushes a weight negative");

  const double bound = gen.output_bound(w_plus);
  const std::size_t nbins = static_cast<std::size_t>(std::ceil(bound / bin_width)) + 1;
  constexpr int kBlocks = 10;

  struct Hist {
    std::vector<std::int64_t> h0, hp, hm;
    std::int64_t z0 = 0, zp = 0, zm = 0;
    std::int64_t n = 0;
  };
  std::vector<Hist> blocks(kBlocks);
  for (Hist& b : blocks) {
    b.h0.assign(nbins, 0);
    b.hp.assign(nbins, 0);
    b.hm.assign(nbins, 0);
  }

  std::vector<double> inputs;
  for (std::int64_t r = 0; r < count; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    gen.draw_inputs(rng, inputs);
    const double f0 = gen.output(inputs, spec.weights);
    const double fp = gen.output(inputs, w_plus);
    const double fm = gen.output(inputs, w_minus);
    Hist& b = blocks[static_cast<std::size_t>((r * kBlocks) / count)];
    ++b.n;
    auto drop = [&](std::vector<std::int64_t>& h, std::int64_t& z, double f) {
      if (f == 0.0) {
        ++z;
      } else {
        const std::size_t idx =
            std::min(nbins - 1, static_cast<std::size_t>(f / bin_width));
        ++h[idx];
      }
    };
    drop(b.h0, b.z0, f0);
    drop(b.hp, b.zp, fp);
    drop(b.hm, b.zm, fm);
  }

  const double inv2d = 1.0 / (2.0 * delta);
  std::int64_t skipped = 0;

  auto merged = [&](int lo, int hi) {  // blocks [lo, hi)
    Hist m;
    m.h0.assign(nbins, 0);
    m.hp.assign(nbins, 0);
    m.hm.assign(nbins, 0);
    for (int j = lo; j < hi; ++j) {
      const Hist& b = blocks[static_cast<std::size_t>(j)];
      for (std::size_t i = 0; i < nbins; ++i) {
        m.h0[i] += b.h0[i];
        m.hp[i] += b.hp[i];
        m.hm[i] += b.hm[i];
      }
      m.z0 += b.z0;
      m.zp += b.zp;
      m.zm += b.zm;
      m.n += b.n;
    }
    return m;
  };

  // Cross estimate: the per-bin score is measured twice, once from each of
  // two disjoint replicate ranges (a, b), and the products are averaged
  // under `base`'s centered histogram. A single-range plug-in square would
  // add the score's own sampling variance (~bins / (2 delta^2 n)) on top
  // of the true value; the cross product of independent estimates has no
  // such term.
  auto cross = [&](const Hist& a, const Hist& b, const Hist& base, bool track_skips) {
    double info = 0.0;
    const double n = static_cast<double>(base.n);
    if (base.z0 > 0 && a.zp > 0 && a.zm > 0 && b.zp > 0 && b.zm > 0) {
      const double sa = (std::log(static_cast<double>(a.zp)) -
                         std::log(static_cast<double>(a.zm))) * inv2d;
      const double sb = (std::log(static_cast<double>(b.zp)) -
                         std::log(static_cast<double>(b.zm))) * inv2d;
      info += static_cast<double>(base.z0) / n * sa * sb;
    }
    for (std::size_t i = 0; i < nbins; ++i) {
      if (base.h0[i] == 0) continue;
      if (a.hp[i] == 0 || a.hm[i] == 0 || b.hp[i] == 0 || b.hm[i] == 0) {
        if (track_skips) ++skipped;
        continue;
      }
      const double sa = (std::log(static_cast<double>(a.hp[i])) -
                         std::log(static_cast<double>(a.hm[i]))) * inv2d;
      const double sb = (std::log(static_cast<double>(b.hp[i])) -
                         std::log(static_cast<double>(b.hm[i]))) * inv2d;
      info += static_cast<double>(base.h0[i]) / n * sa * sb;
    }
    return info;
  };

  constexpr int kPairs = kBlocks / 2;
  const Hist half_a = merged(0, kPairs);          // replicates [0, count/2)
  const Hist half_b = merged(kPairs, kBlocks);    // replicates [count/2, count)
  const Hist all = merged(0, kBlocks);

  McFisher out;
  out.count = count;
  out.value = cross(half_a, half_b, all, true);
  out.skipped_bins = skipped;

  // Spread of five paired-block cross estimates. Each pair joins one block
  // from each half and weighs by its own centered histogram, so the pairs
  // are independent; the score-noise variance scales like 1/samples on
  // both the pairs and the pooled estimate, making the pair-mean error a
  // faithful (mildly conservative) standard error for `value`.
  double pair_vals[kPairs];
  double mean = 0.0;
  for (int j = 0; j < kPairs; ++j) {
    const Hist& a = blocks[static_cast<std::size_t>(j)];
    const Hist& b = blocks[static_cast<std::size_t>(j + kPairs)];
    Hist base = a;
    for (std::size_t i = 0; i < nbins; ++i) base.h0[i] += b.h0[i];
    base.z0 += b.z0;
    base.n += b.n;
    pair_vals[j] = cross(a, b, base, false);
    mean += pair_vals[j];
  }
  mean /= kPairs;
  double var = 0.0;
  for (double v : pair_vals) var += (v - mean) * (v - mean);
  out.std_error = std::sqrt(var / (kPairs * (kPairs - 1.0)));
  return out;
}

double tv_noise_floor(const retina::MixedDistribution& law, std::int64_t count) {
  if (count < 1) throw std::invalid_argument("tv_noise_floor: count < 1");
  if (law.step <= 0.0) throw std::invalid_argument("tv_noise_floor: law has no grid");
  const double scale = 2.0 / (numerics::kPi * static_cast<double>(count));
  auto cell = [&](double p) {
    const double clamped = std::min(std::max(p, 0.0), 1.0);
    return std::sqrt(scale * clamped * (1.0 - clamped));
  };
  double floor_sum = cell(law.atom_mass);
  const std::size_t nbins = law.density.empty() ? 0 : law.density.size() - 1;
  for (std::size_t j = 0; j < nbins; ++j)
    floor_sum += cell(0.5 * (law.density[j] + law.density[j + 1]) * law.step);
  return 0.5 * floor_sum;
}

double tv_distance(const SampleBatch& batch, const retina::MixedDistribution& law) {
  if (batch.count < 1) throw std::invalid_argument("tv_distance: empty batch");
  if (law.step <= 0.0) throw std::invalid_argument("tv_distance: law has no grid");
  const double inv_n = 1.0 / static_cast<double>(batch.count);
  const double x0 = law.grid_start();
  const std::size_t nbins = law.density.empty() ? 0 : law.density.size() - 1;

  std::vector<std::int64_t> counts(nbins, 0);
  std::int64_t outside = 0;
  for (double v : batch.values) {
    if (v == 0.0) continue;  // tallied as zero_count
    const double pos = (v - x0) / law.step;
    if (pos < 0.0 || pos >= static_cast<double>(nbins)) {
      ++outside;
      continue;
    }
    ++counts[static_cast<std::size_t>(pos)];
  }

  double tv = std::abs(static_cast<double>(batch.zero_count) * inv_n - law.atom_mass);
  for (std::size_t j = 0; j < nbins; ++j) {
    const double model = 0.5 * (law.density[j] + law.density[j + 1]) * law.step;
    tv += std::abs(static_cast<double>(counts[j]) * inv_n - model);
  }
  tv += static_cast<double>(outside) * inv_n;
  return 0.5 * tv;
}

}  // namespace retprobe::mc
