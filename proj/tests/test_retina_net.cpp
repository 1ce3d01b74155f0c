#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "retprobe/numerics.hpp"
#include "retprobe/photon_stats.hpp"
#include "retprobe/retina_net.hpp"

using namespace retprobe;
using retina::CountDistribution;
using retina::GridPolicy;
using retina::MixedDistribution;
using retina::NetworkSpec;
using retina::RodParams;

namespace {

constexpr double kGaussPeak015 = 2.6596152026762179;  // 1/(0.15 sqrt(2 pi))

NetworkSpec one_rod(double w, double threshold) {
  NetworkSpec spec;
  spec.rods.assign(1, RodParams{});
  spec.weights = {w};
  spec.ganglion_threshold = threshold;
  return spec;
}

}  // namespace

TEST_CASE("isomerization law for a definite photon number is binomial") {
  CountDistribution d = retina::isomerization_given_n(5, 0.4);
  REQUIRE(d.probs.size() == 6);
  CHECK(d.probs[2] == doctest::Approx(0.3456).epsilon(1e-13));
  CHECK(d.probs[0] == doctest::Approx(std::pow(0.6, 5)).epsilon(1e-13));
  CHECK(d.probs[5] == doctest::Approx(std::pow(0.4, 5)).epsilon(1e-13));
  CHECK(d.total_mass() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(d.mean() == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("isomerization law mixes over the photon distribution") {
  const auto ph = photon::coherent(5.0);
  CountDistribution d = retina::isomerization_dist(ph, 0.4);
  // Thinned Poisson stays Poisson with mean 2.
  std::vector<double> direct = photon::poisson_pmf(2.0, 1e-15);
  for (std::size_t k = 0; k < std::min(d.probs.size(), direct.size()); ++k)
    CHECK(d.probs[k] == doctest::Approx(direct[k]).epsilon(1e-8));
  CHECK(d.mean() == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(d.total_mass() == doctest::Approx(ph.total_mass()).epsilon(1e-14));
}

TEST_CASE("shared-pool isomerization marginals") {
  SUBCASE("two cells, one photon") {
    CountDistribution d = retina::isomerization_dist_correlated(photon::fock(1), 0.4, 2);
    REQUIRE(d.probs.size() == 2);
    CHECK(d.probs[0] == doctest::Approx(0.76).epsilon(1e-14));
    CHECK(d.probs[1] == doctest::Approx(0.24).epsilon(1e-14));
  }
  SUBCASE("two cells, five photons, frozen ladder") {
    CountDistribution d = retina::isomerization_dist_correlated(photon::fock(5), 0.4, 2);
    CHECK(d.probs[0] == doctest::Approx(0.2535525376).epsilon(1e-12));
    CHECK(d.probs[1] == doctest::Approx(0.400346112).epsilon(1e-12));
    CHECK(d.probs[2] == doctest::Approx(0.252850176).epsilon(1e-12));
    CHECK(d.probs[3] == doctest::Approx(0.079847424).epsilon(1e-12));
  }
  SUBCASE("normalization holds to 1e-12 for photon numbers up to 20") {
    for (int n = 0; n <= 20; ++n) {
      CountDistribution d = retina::isomerization_dist_correlated(photon::fock(n), 0.4, 2);
      CHECK(std::abs(d.total_mass() - 1.0) < 1e-12);
    }
  }
  SUBCASE("more cells reduce to a thinned binomial") {
    // After two companions deplete the pool, the last of three cells sees
    // Binom(n, eta (1-eta)^2); for n=5, eta=0.4 the success rate is 0.144.
    CountDistribution d = retina::isomerization_dist_correlated(photon::fock(5), 0.4, 3);
    CHECK(d.probs[2] == doctest::Approx(0.13006075723776).epsilon(1e-12));
    CHECK(d.total_mass() == doctest::Approx(1.0).epsilon(1e-13));
  }
  SUBCASE("depletion lowers the mean against independent absorption") {
    const auto ph = photon::thermal(5.0);
    const double independent = retina::isomerization_dist(ph, 0.4).mean();
    const double shared2 = retina::isomerization_dist_correlated(ph, 0.4, 2).mean();
    const double shared3 = retina::isomerization_dist_correlated(ph, 0.4, 3).mean();
    CHECK(shared2 < independent);
    CHECK(shared3 < shared2);
    CHECK(shared2 == doctest::Approx(0.6 * independent).epsilon(1e-10));
  }
  SUBCASE("degenerate efficiencies collapse to a point mass") {
    CHECK(retina::isomerization_dist_correlated(photon::fock(5), 0.0, 2).probs.size() == 1);
    CHECK(retina::isomerization_dist_correlated(photon::fock(5), 1.0, 2).probs.size() == 1);
  }
  CHECK_THROWS_AS(retina::isomerization_dist_correlated(photon::fock(1), 0.4, 1),
                  std::invalid_argument);
}

TEST_CASE("photocurrent density is the expected Gaussian mixture") {
  RodParams rod;
  SUBCASE("zero isomerizations give the dark-noise Gaussian") {
    CountDistribution counts = retina::isomerization_given_n(0, 0.4);
    const auto grid = retina::auto_grid(counts, rod, 1.0);
    MixedDistribution law = retina::photocurrent_density(counts, rod, grid);
    CHECK(law.atom_mass == 0.0);
    CHECK(law.density_at(0.0) == doctest::Approx(kGaussPeak015).epsilon(1e-9));
    CHECK(law.total_mass() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(law.mean() == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("mixture mean follows the isomerization mean") {
    CountDistribution counts = retina::isomerization_dist(photon::coherent(5.0), 0.4);
    const auto grid = retina::auto_grid(counts, rod, 1.0);
    MixedDistribution law = retina::photocurrent_density(counts, rod, grid);
    CHECK(law.mean() == doctest::Approx(1.4).epsilon(1e-8));
    CHECK(law.total_mass() == doctest::Approx(counts.total_mass()).epsilon(1e-9));
  }
  SUBCASE("grids off the step lattice are rejected") {
    CountDistribution counts = retina::isomerization_given_n(0, 0.4);
    numerics::GridSpec grid{-1.001, 0.002, 2000};  // start not a step multiple
    CHECK_THROWS_AS(retina::photocurrent_density(counts, rod, grid), std::invalid_argument);
  }
  SUBCASE("grids that truncate visible mass are rejected") {
    CountDistribution counts = retina::isomerization_given_n(0, 0.4);
    numerics::GridSpec grid{0.0, 0.002, 100};  // covers [0, 0.2] only
    CHECK_THROWS_AS(retina::photocurrent_density(counts, rod, grid), std::invalid_argument);
  }
}

TEST_CASE("automatic grid covers the weighted span on the lattice") {
  RodParams rod;
  CountDistribution counts = retina::isomerization_given_n(5, 0.4);
  for (double w : {1.0, 0.3}) {
    const auto grid = retina::auto_grid(counts, rod, w);
    CHECK(grid.valid());
    const double ratio = grid.start / grid.step;
    CHECK(std::abs(ratio - std::round(ratio)) < 1e-9);
    CHECK(grid.start <= w * -2.0 + 1e-12);
    CHECK(grid.end() >= w * (5.0 * rod.amp_mean + 4.0) - 1e-12);
  }
}

TEST_CASE("rod output chains isomerization and photocurrent") {
  RodParams rod;
  const auto ph = photon::thermal(5.0);
  CountDistribution counts = retina::isomerization_dist(ph, rod.eta);
  const auto grid = retina::auto_grid(counts, rod, 1.0);
  MixedDistribution law = retina::rod_output(ph, rod, grid);
  CHECK(law.mean() == doctest::Approx(1.4).epsilon(1e-6));
  CHECK(law.total_mass() == doctest::Approx(ph.total_mass()).epsilon(1e-7));
}

TEST_CASE("weighted sums of mixed laws") {
  RodParams rod;
  const auto ph = photon::fock(0);
  CountDistribution counts = retina::isomerization_dist(ph, rod.eta);
  const auto grid = retina::auto_grid(counts, rod, 1.0);
  MixedDistribution law = retina::rod_output(ph, rod, grid);

  SUBCASE("scaling is a change of variables") {
    MixedDistribution half = retina::weighted_sum({{law, 0.5}});
    // f_{0.5 X}(x) = 2 f_X(2x)
    for (double x : {0.0, 0.05, -0.1, 0.12}) {
      CHECK(half.density_at(x) ==
            doctest::Approx(2.0 * law.density_at(2.0 * x)).epsilon(5e-4));
    }
    CHECK(half.total_mass() == doctest::Approx(law.total_mass()).epsilon(1e-6));
  }
  SUBCASE("zero weight collapses to the atom") {
    MixedDistribution z = retina::weighted_sum({{law, 0.0}});
    CHECK(z.atom_mass == doctest::Approx(law.total_mass()).epsilon(1e-9));
    CHECK(z.density_mass() == 0.0);
  }
  SUBCASE("sum of two dark-noise rods is the widened Gaussian") {
    MixedDistribution sum = retina::weighted_sum({{law, 1.0}, {law, 1.0}});
    // N(0, sigma^2) + N(0, sigma^2) = N(0, 2 sigma^2)
    CHECK(sum.density_at(0.0) ==
          doctest::Approx(kGaussPeak015 / std::sqrt(2.0)).epsilon(1e-6));
    CHECK(sum.total_mass() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(sum.mean() == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("negative weights are rejected") {
    CHECK_THROWS_AS(retina::weighted_sum({{law, -0.5}}), std::invalid_argument);
  }
}

TEST_CASE("convolution preserves the product of masses for rectified inputs") {
  // Rectified laws open with an O(1) density jump at zero; the corner cells
  // of the convolution carry real onset mass that the quadrature must keep.
  NetworkSpec two = one_rod(1.0, 0.0);
  two.rods.assign(2, RodParams{});
  two.weights = {1.0, 1.0};
  MixedDistribution rect = retina::network_output(two, photon::thermal(5.0));
  REQUIRE(rect.atom_mass > 0.01);
  REQUIRE(rect.density.front() > 0.1);  // the jump is actually present

  const double m = rect.total_mass();
  MixedDistribution sum = retina::weighted_sum({{rect, 1.0}, {rect, 1.0}});
  CHECK(sum.total_mass() == doctest::Approx(m * m).epsilon(1e-9));
}

TEST_CASE("rectifier output law") {
  RodParams rod;
  const auto ph = photon::fock(0);
  CountDistribution counts = retina::isomerization_dist(ph, rod.eta);
  const auto grid = retina::auto_grid(counts, rod, 1.0);
  MixedDistribution law = retina::rod_output(ph, rod, grid);

  SUBCASE("clip probability for pure dark noise") {
    MixedDistribution out = retina::relu_output(law, 0.1);
    // P(N(0, 0.15^2) <= 0.1) = Phi(2/3); the engine's atom is the trapezoid
    // clip mass, which matches the analytic value at quadrature order h^2.
    CHECK(out.atom_mass == doctest::Approx(0.74750746245307709).epsilon(1e-5));
    CHECK(out.total_mass() == doctest::Approx(law.total_mass()).epsilon(1e-9));
    CHECK(out.start_index == 0);
    // The boundary node carries the one-sided density limit f(T).
    const double f_cut = kGaussPeak015 * std::exp(-0.5 * (2.0 / 3.0) * (2.0 / 3.0));
    CHECK(out.density.front() == doctest::Approx(f_cut).epsilon(1e-9));
  }
  SUBCASE("a threshold below the support is a pure shift") {
    MixedDistribution out = retina::relu_output(law, -3.0);
    CHECK(out.atom_mass == 0.0);
    CHECK(out.total_mass() == doctest::Approx(law.total_mass()).epsilon(1e-9));
    CHECK(out.mean() == doctest::Approx(law.mean() + 3.0).epsilon(1e-7));
  }
  SUBCASE("an off-lattice threshold conserves mass at resample order") {
    // The tail resample carries a quadrature defect bounded by
    // h^2/8 * |f'(T)| (about 5e-6 here); on-lattice cuts are exact.
    MixedDistribution out = retina::relu_output(law, 0.1003);
    CHECK(std::abs(out.total_mass() - law.total_mass()) < 1e-5);
    CHECK(out.atom_mass > 0.747);
  }
  SUBCASE("a threshold above the support clips everything") {
    MixedDistribution out = retina::relu_output(law, 100.0);
    CHECK(out.atom_mass == doctest::Approx(law.total_mass()).epsilon(1e-12));
    CHECK(out.density_mass() == 0.0);
  }
  SUBCASE("monotone in the threshold") {
    double prev = -1.0;
    for (double t : {0.0, 0.05, 0.1, 0.3, 1.0}) {
      MixedDistribution out = retina::relu_output(law, t);
      CHECK(out.atom_mass >= prev);
      prev = out.atom_mass;
    }
  }
  SUBCASE("negative threshold with an input atom is rejected") {
    MixedDistribution rectified = retina::relu_output(law, 0.1);
    CHECK_THROWS_AS(retina::relu_output(rectified, -0.5), std::invalid_argument);
    // but a nonnegative threshold is fine and keeps the atom
    MixedDistribution again = retina::relu_output(rectified, 0.0);
    CHECK(again.atom_mass == doctest::Approx(rectified.atom_mass).epsilon(1e-12));
  }
}

TEST_CASE("network output, two-layer") {
  SUBCASE("single rod equals the manual chain") {
    NetworkSpec spec = one_rod(1.0, 0.1);
    const auto ph = photon::coherent(1.0);
    MixedDistribution net = retina::network_output(spec, ph);

    RodParams rod;
    CountDistribution counts = retina::isomerization_dist(ph, rod.eta);
    const auto grid = retina::auto_grid(counts, rod, 1.0);
    MixedDistribution manual = retina::relu_output(retina::rod_output(ph, rod, grid), 0.1);
    CHECK(net.atom_mass == doctest::Approx(manual.atom_mass).epsilon(1e-10));
    CHECK(net.total_mass() == doctest::Approx(manual.total_mass()).epsilon(1e-10));
    CHECK(net.mean() == doctest::Approx(manual.mean()).epsilon(1e-8));
  }
  SUBCASE("two rods equal the generic weighted-sum route") {
    NetworkSpec spec = one_rod(0.5, 0.1);
    spec.rods.assign(2, RodParams{});
    spec.weights = {0.5, 0.25};
    const auto ph = photon::fock(1);
    MixedDistribution net = retina::network_output(spec, ph);

    RodParams rod;
    CountDistribution counts = retina::isomerization_dist(ph, rod.eta);
    const auto grid = retina::auto_grid(counts, rod, 1.0);
    MixedDistribution r = retina::rod_output(ph, rod, grid);
    MixedDistribution manual =
        retina::relu_output(retina::weighted_sum({{r, 0.5}, {r, 0.25}}), 0.1);
    // The network scales inside the Gaussian construction while the generic
    // route rescales by interpolation, so agreement is O(h^2), not exact.
    CHECK(net.atom_mass == doctest::Approx(manual.atom_mass).epsilon(1e-5));
    CHECK(net.mean() == doctest::Approx(manual.mean()).epsilon(1e-4));
    CHECK(net.total_mass() == doctest::Approx(manual.total_mass()).epsilon(1e-5));
  }
  SUBCASE("mass conservation across states and weights") {
    for (const auto& ph :
         {photon::fock(5), photon::coherent(5.0), photon::thermal(5.0)}) {
      for (double w : {0.15, 0.6, 1.0}) {
        NetworkSpec spec = one_rod(w, 0.1);
        spec.rods.assign(2, RodParams{});
        spec.weights = {w, 0.6 * w};
        MixedDistribution out = retina::network_output(spec, ph);
        CHECK(std::abs(out.total_mass() - ph.total_mass()) < retina::kMassTolerance);
      }
    }
  }
  SUBCASE("shape validation") {
    NetworkSpec spec = one_rod(1.0, 0.1);
    spec.weights = {1.0, 0.5};  // two weights, one rod
    CHECK_THROWS_AS(retina::network_output(spec, photon::fock(1)), std::invalid_argument);
    spec.weights = {-1.0};
    CHECK_THROWS_AS(retina::network_output(spec, photon::fock(1)), std::invalid_argument);
    spec.weights.clear();
    spec.rods.clear();
    CHECK_THROWS_AS(retina::network_output(spec, photon::fock(1)), std::invalid_argument);
  }
}

TEST_CASE("network output, three-layer") {
  SUBCASE("unclipped intermediate layer reduces to the two-layer model") {
    // With per-group thresholds T_b = -L below every group's support, each
    // group output is its summed current shifted by L, so the whole network
    // equals the two-layer one with the ganglion threshold raised by
    // L * sum(w). The mixture support reaches w*(0.7k - 8*sd(k)) ~ -5.78w
    // at k = 8, so L must exceed 5.78; L and the shifted thresholds sit on
    // the 0.002 lattice so the shifts are exact index arithmetic.
    const auto ph = photon::coherent(1.0);
    const double L = 6.144;

    NetworkSpec flat = one_rod(0.5, 0.1);
    flat.rods.assign(2, RodParams{});
    flat.weights = {0.5, 0.25};
    MixedDistribution expect = retina::network_output(flat, ph);

    NetworkSpec deep = flat;
    deep.bipolar = retina::BipolarLayer{{{0}, {1}}, {{1.0}, {1.0}}, -L};
    deep.ganglion_threshold = 0.1 + L * (0.5 + 0.25);
    MixedDistribution got = retina::network_output(deep, ph);

    CHECK(got.atom_mass == doctest::Approx(expect.atom_mass).epsilon(1e-12));
    REQUIRE(got.density.size() == expect.density.size());
    CHECK(got.start_index == expect.start_index);
    for (std::size_t i = 0; i < got.density.size(); i += 7)
      CHECK(got.density[i] == doctest::Approx(expect.density[i]).epsilon(1e-12));
  }
  SUBCASE("mass conservation for the rectified intermediate layer") {
    NetworkSpec spec = one_rod(0.5, 0.1);
    spec.rods.assign(4, RodParams{});
    spec.weights = {0.5, 0.7};
    spec.bipolar = retina::BipolarLayer{{{0, 1}, {2, 3}}, {{1.0, 1.0}, {1.0, 1.0}}, 0.0};
    for (const auto& ph :
         {photon::fock(5), photon::coherent(5.0), photon::thermal(5.0)}) {
      MixedDistribution out = retina::network_output(spec, ph);
      CHECK(std::abs(out.total_mass() - ph.total_mass()) < retina::kMassTolerance);
    }
  }
  SUBCASE("groups must partition the rods") {
    NetworkSpec spec = one_rod(0.5, 0.1);
    spec.rods.assign(2, RodParams{});
    spec.weights = {0.5};
    spec.bipolar = retina::BipolarLayer{{{0, 0}}, {{1.0, 1.0}}, 0.0};
    CHECK_THROWS_AS(retina::network_output(spec, photon::fock(1)), std::invalid_argument);
  }
}

TEST_CASE("shared-pool absorption changes the network law") {
  NetworkSpec spec = one_rod(1.0, 0.1);
  spec.rods.assign(2, RodParams{});
  spec.weights = {1.0, 0.6};
  const auto ph = photon::fock(1);
  MixedDistribution independent = retina::network_output(spec, ph);
  spec.correlated_absorption = true;
  MixedDistribution shared = retina::network_output(spec, ph);
  // Depletion leaves less signal, so more mass ends below the threshold.
  CHECK(shared.atom_mass > independent.atom_mass);
  CHECK(shared.total_mass() == doctest::Approx(ph.total_mass()).epsilon(1e-7));
  CHECK(shared.mean() < independent.mean());
}
