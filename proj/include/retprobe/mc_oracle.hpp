#pragma once

#include <cstdint>
#include <vector>

#include "retprobe/photon_stats.hpp"
#include "retprobe/retina_net.hpp"

namespace retprobe::mc {

// One batch of sampled ganglion outputs. zero_count tallies the exact
// zeros produced by the rectifier (the empirical atom).
struct SampleBatch {
  std::uint64_t seed = 0;
  std::int64_t count = 0;
  std::vector<double> values;
  std::int64_t zero_count = 0;

  double zero_fraction() const {
    return count > 0 ? static_cast<double>(zero_count) / static_cast<double>(count) : 0.0;
  }
};

// Samples the full generative pipeline: photon number, per-rod
// isomerization count (independent draws, or sequential depletion when
// correlated_absorption is set), Gaussian photocurrents, weighted sums
// and rectifiers. Replicates use per-index counter streams, so a batch
// is reproducible for a fixed seed regardless of how it is partitioned.
SampleBatch sample_network(const retina::NetworkSpec& spec,
                           const photon::PhotonDistribution& photons, std::int64_t count,
                           std::uint64_t seed);

struct McFisher {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t count = 0;
  std::int64_t skipped_bins = 0;  // bins left out for empty +/- histograms
};

// Likelihood-ratio Fisher estimate: the same replicate noise is pushed
// through weights w-delta, w, w+delta (common random numbers) and the two
// shifted batches are histogrammed. Each bin's score (central difference
// of the log histogram) is estimated twice from independent sample
// halves, and the product of the two estimates is averaged under the
// centered histogram: the cross product has expectation score^2 without
// the squared sampling noise that biases a single-sample plug-in
// estimate upward by ~bins/(2 delta^2 count).
// weight_index < 0 perturbs all weights jointly. Standard error from the
// spread of five paired-block estimates.
McFisher mc_fisher(const retina::NetworkSpec& spec, const photon::PhotonDistribution& photons,
                   int weight_index, double delta, std::int64_t count, std::uint64_t seed,
                   double bin_width = 0.02);

// Total variation distance between the empirical law of a batch and a
// grid-engine mixed law, using one bin per grid step plus the atom.
double tv_distance(const SampleBatch& batch, const retina::MixedDistribution& law);

// Expected total-variation distance between a law and the empirical law
// of `count` faithful samples of it — the sampling noise floor of
// tv_distance. Each cell contributes the half-normal mean
// sqrt(2 p (1-p) / (pi count)); a measured distance within a small
// multiple of this floor is indistinguishable from exact agreement.
double tv_noise_floor(const retina::MixedDistribution& law, std::int64_t count);

}  // namespace retprobe::mc
