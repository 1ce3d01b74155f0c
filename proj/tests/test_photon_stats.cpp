#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "retprobe/photon_stats.hpp"

using namespace retprobe::photon;

namespace {

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double x = i < a.size() ? a[i] : 0.0;
    const double y = i < b.size() ? b[i] : 0.0;
    worst = std::max(worst, std::abs(x - y));
  }
  return worst;
}

}  // namespace

TEST_CASE("fock state is a delta") {
  PhotonDistribution d = fock(3);
  REQUIRE(d.probs.size() == 4);
  CHECK(d.probs[3] == 1.0);
  CHECK(d.total_mass() == 1.0);
  CHECK(d.mean() == doctest::Approx(3.0));
  CHECK(d.tail_mass_bound == 0.0);
  CHECK(fock(0).probs.size() == 1);
}

TEST_CASE("coherent state has Poisson statistics") {
  PhotonDistribution d = coherent(5.0);
  CHECK(d.probs[0] == doctest::Approx(std::exp(-5.0)).epsilon(1e-14));
  CHECK(d.probs[3] == doctest::Approx(0.14037389581428056).epsilon(1e-13));
  CHECK(d.mean() == doctest::Approx(5.0).epsilon(1e-10));
  CHECK(d.total_mass() == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(d.total_mass() <= 1.0);  // truncated, never renormalized
  CHECK(1.0 - d.total_mass() <= d.tail_mass_bound + 1e-15);
  CHECK(coherent(0.3).probs[0] == doctest::Approx(0.74081822068171787).epsilon(1e-14));
}

TEST_CASE("thermal state has geometric statistics") {
  PhotonDistribution d = thermal(5.0);
  // p(n) = nbar^n / (1+nbar)^(n+1)
  CHECK(d.probs[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(d.probs[3] == doctest::Approx(0.096450617283950617).epsilon(1e-13));
  CHECK(d.mean() == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(d.total_mass() <= 1.0);
  PhotonDistribution one = thermal(1.0);
  CHECK(one.probs[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(one.probs[4] == doctest::Approx(0.03125).epsilon(1e-14));
}

TEST_CASE("truncation respects the tail bound") {
  for (double eps : {1e-6, 1e-9, 1e-12}) {
    PhotonDistribution d = thermal(5.0, eps);
    CHECK(1.0 - d.total_mass() < eps);
    CHECK(1.0 - d.total_mass() <= d.tail_mass_bound + 1e-18);
    // The last kept entry is above the per-entry scale of the bound, so the
    // truncation is not overly eager.
    CHECK(d.probs.back() > 0.0);
  }
  // Tighter eps keeps more entries.
  CHECK(thermal(5.0, 1e-12).probs.size() > thermal(5.0, 1e-6).probs.size());
}

TEST_CASE("binomial thinning basics") {
  SUBCASE("single photon splits between survival and loss") {
    std::vector<double> thinned = binomial_thin(fock(1).probs, 0.5);
    REQUIRE(thinned.size() == 2);
    CHECK(thinned[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(thinned[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("fock(3) thins to a binomial law") {
    std::vector<double> t = binomial_thin(fock(3).probs, 0.4);
    CHECK(t[1] == doctest::Approx(0.432).epsilon(1e-14));
    CHECK(t[3] == doctest::Approx(0.064).epsilon(1e-14));
  }
  SUBCASE("u = 1 is the identity, u = 0 is vacuum") {
    const PhotonDistribution d = thermal(2.0);
    CHECK(linf(binomial_thin(d.probs, 1.0), d.probs) < 1e-15);
    std::vector<double> z = binomial_thin(d.probs, 0.0);
    CHECK(z[0] == doctest::Approx(d.total_mass()).epsilon(1e-14));
  }
  SUBCASE("mass is preserved exactly") {
    const PhotonDistribution d = coherent(4.0);
    std::vector<double> t = binomial_thin(d.probs, 0.37);
    const double before = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
    const double after = std::accumulate(t.begin(), t.end(), 0.0);
    CHECK(after == doctest::Approx(before).epsilon(1e-14));
  }
}

TEST_CASE("thinning closure properties") {
  SUBCASE("thinned Poisson stays Poisson") {
    PhotonDistribution d = coherent(5.0, 1e-14);
    std::vector<double> t = binomial_thin(d.probs, 0.5);
    std::vector<double> direct = poisson_pmf(2.5, 1e-14);
    CHECK(linf(t, direct) < 1e-10);
  }
  SUBCASE("thinned geometric stays geometric") {
    PhotonDistribution d = thermal(5.0, 1e-14);
    std::vector<double> t = binomial_thin(d.probs, 0.5);
    PhotonDistribution direct = thermal(2.5, 1e-14);
    CHECK(linf(t, direct.probs) < 1e-10);
  }
  SUBCASE("two thinnings compose multiplicatively") {
    PhotonDistribution d = thermal(4.0, 1e-13);
    std::vector<double> once = binomial_thin(d.probs, 0.3 * 0.7);
    std::vector<double> twice = binomial_thin(binomial_thin(d.probs, 0.7), 0.3);
    CHECK(linf(once, twice) < 1e-13);
  }
}

TEST_CASE("loss channel") {
  SUBCASE("exact mode thins the number distribution") {
    PhotonDistribution out = apply_loss(fock(1), {0.5});
    CHECK(out.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out.probs[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out.kind == StateKind::Transformed);
    CHECK(out.mean() == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("u = 1 passes the law through unchanged") {
    PhotonDistribution d = thermal(5.0);
    PhotonDistribution out = apply_loss(d, {1.0});
    CHECK(linf(out.probs, d.probs) < 1e-15);
  }
  SUBCASE("paper-poisson mode replaces fock output with a Poisson law") {
    PhotonDistribution out = apply_loss(fock(10), {0.5}, LossMode::PaperPoisson);
    std::vector<double> pois = poisson_pmf(5.0, kDefaultTrunc);
    CHECK(linf(out.probs, pois) < 1e-14);
    CHECK(out.mean() == doctest::Approx(5.0).epsilon(1e-9));
    // The two modes genuinely differ for definite photon number:
    PhotonDistribution exact = apply_loss(fock(10), {0.5}, LossMode::Exact);
    CHECK(exact.probs.size() == 11);         // binomial support is bounded
    CHECK(out.probs.size() > exact.probs.size());  // Poisson support tails on
    CHECK(std::abs(out.probs[5] - exact.probs[5]) > 0.01);
  }
  SUBCASE("paper-poisson mode thins non-fock states") {
    PhotonDistribution t = apply_loss(thermal(5.0), {0.5}, LossMode::PaperPoisson);
    PhotonDistribution direct = thermal(2.5, 1e-12);
    CHECK(linf(t.probs, direct.probs) < 1e-10);
  }
  SUBCASE("mean scales by the transmission in both modes") {
    for (auto mode : {LossMode::Exact, LossMode::PaperPoisson}) {
      PhotonDistribution out = apply_loss(coherent(6.0), {0.35}, mode);
      CHECK(out.mean() == doctest::Approx(0.35 * 6.0).epsilon(1e-8));
    }
  }
}
