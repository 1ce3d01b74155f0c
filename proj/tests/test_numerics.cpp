#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "retprobe/numerics.hpp"

using namespace retprobe::numerics;

TEST_CASE("log_binomial matches exact coefficients") {
  CHECK(std::exp(log_binomial(5, 2)) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(std::exp(log_binomial(10, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::exp(log_binomial(10, 10)) == doctest::Approx(1.0).epsilon(1e-12));
  // C(50, 25) = 126410606437752, large enough to exercise the log route.
  CHECK(std::exp(log_binomial(50, 25)) ==
        doctest::Approx(126410606437752.0).epsilon(1e-11));
  CHECK_THROWS_AS(log_binomial(3, 4), std::invalid_argument);
  CHECK_THROWS_AS(log_binomial(-1, 0), std::invalid_argument);
}

TEST_CASE("regularized incomplete gamma") {
  CHECK(gamma_p(2.5, 0.0) == doctest::Approx(0.0));
  CHECK(gamma_p(2.5, 1.3) == doctest::Approx(0.23863473215498604).epsilon(1e-12));
  CHECK(gamma_p(1.0, 1.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  CHECK(gamma_p(3.0, 200.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("chi-square cdf reference values") {
  // dof=1 at x=1 is the one-sigma two-sided normal probability.
  CHECK(chi2_cdf(1.0, 1) == doctest::Approx(0.6826894921370859).epsilon(1e-12));
  // dof=2 has the closed form 1 - exp(-x/2).
  CHECK(chi2_cdf(3.0, 2) == doctest::Approx(1.0 - std::exp(-1.5)).epsilon(1e-12));
  CHECK(chi2_cdf(0.0, 4) == doctest::Approx(0.0));
}

TEST_CASE("chi-square quantiles at the confidence levels in use") {
  // dof=2: quantile(p) = -2 ln(1-p) exactly.
  CHECK(chi2_quantile(2, 0.99) == doctest::Approx(9.2103403719761827).epsilon(1e-10));
  CHECK(chi2_quantile(1, 0.99) == doctest::Approx(6.6348966010212145).epsilon(1e-10));
  CHECK(chi2_quantile(3, 0.99) == doctest::Approx(11.344866730144373).epsilon(1e-10));
  SUBCASE("round trip cdf(quantile(p)) = p") {
    for (int dof : {1, 2, 3, 4}) {
      for (double p : {0.5, 0.9, 0.99, 0.999}) {
        CHECK(chi2_cdf(chi2_quantile(dof, p), dof) == doctest::Approx(p).epsilon(1e-10));
      }
    }
  }
  CHECK_THROWS_AS(chi2_quantile(2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(chi2_quantile(0, 0.5), std::invalid_argument);
}

TEST_CASE("normal cdf") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(2.0 / 3.0) == doctest::Approx(0.74750746245307709).epsilon(1e-12));
  CHECK(normal_cdf(-8.0) == doctest::Approx(6.2209605742717844e-16).epsilon(1e-9));
  CHECK(normal_cdf(3.0) + normal_cdf(-3.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("symmetric eigendecomposition") {
  SUBCASE("diagonal input") {
    const std::vector<double> m = {4.0, 0.0, 0.0, 1.0};
    EigenResult r = sym_eigen(m, 2);
    REQUIRE(r.values.size() == 2);
    CHECK(r.values[0] == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(r.values[1] == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("2x2 with known spectrum") {
    // [[2,1],[1,2]] has eigenvalues 3 and 1.
    const std::vector<double> m = {2.0, 1.0, 1.0, 2.0};
    EigenResult r = sym_eigen(m, 2);
    CHECK(r.values[0] == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(r.values[1] == doctest::Approx(1.0).epsilon(1e-13));
    // Eigenvector for lambda=3 is (1,1)/sqrt(2) up to sign.
    const double v0 = r.vectors[0], v1 = r.vectors[2];
    CHECK(std::abs(v0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(v0 * v1 > 0.0);
  }
  SUBCASE("3x3 trace and determinant are preserved") {
    const std::vector<double> m = {2.0, 0.5, 0.1, 0.5, 1.5, 0.3, 0.1, 0.3, 1.0};
    EigenResult r = sym_eigen(m, 3);
    const double trace = r.values[0] + r.values[1] + r.values[2];
    const double det = r.values[0] * r.values[1] * r.values[2];
    CHECK(trace == doctest::Approx(4.5).epsilon(1e-12));
    // det = 2*(1.5 - 0.09) - 0.5*(0.5 - 0.03) + 0.1*0 = 2.585
    CHECK(det == doctest::Approx(2.585).epsilon(1e-12));
    // Residual ||M v - lambda v|| for each pair.
    for (int j = 0; j < 3; ++j) {
      for (int i = 0; i < 3; ++i) {
        double mv = 0.0;
        for (int k = 0; k < 3; ++k) mv += m[static_cast<std::size_t>(3 * i + k)] *
                                           r.vectors[static_cast<std::size_t>(3 * k + j)];
        CHECK(mv == doctest::Approx(r.values[static_cast<std::size_t>(j)] *
                                    r.vectors[static_cast<std::size_t>(3 * i + j)])
                        .epsilon(1e-10));
      }
    }
  }
  SUBCASE("asymmetric input is rejected") {
    const std::vector<double> m = {1.0, 0.5, 0.4, 1.0};
    CHECK_THROWS_AS(sym_eigen(m, 2), std::invalid_argument);
  }
}

TEST_CASE("trapezoid rule") {
  SUBCASE("linear functions are integrated exactly") {
    std::vector<double> v;
    const double h = 0.1;
    for (int i = 0; i <= 50; ++i) v.push_back(2.0 * (static_cast<double>(i) * h) + 1.0);
    // integral of 2x+1 over [0,5] = 30
    CHECK(trapezoid(v, h) == doctest::Approx(30.0).epsilon(1e-13));
  }
  SUBCASE("second-order convergence on a Gaussian bump") {
    auto integrate = [](double h) {
      std::vector<double> v;
      // Narrow span on purpose so the end truncation is visible and the
      // remaining error is dominated by the quadrature order.
      for (double x = -1.0; x <= 1.0 + 1e-12; x += h)
        v.push_back(std::exp(-0.5 * x * x * 16.0));
      return trapezoid(v, h);
    };
    const double exact = std::sqrt(2.0 * kPi) / 4.0 *
                         (2.0 * normal_cdf(4.0) - 1.0);  // sigma = 1/4 over [-1,1]
    const double e1 = std::abs(integrate(0.05) - exact);
    const double e2 = std::abs(integrate(0.025) - exact);
    CHECK(e2 < e1);  // refinement helps
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));  // order 2
  }
  SUBCASE("first moment") {
    // f = 1 on [1, 2]: integral of x over [1,2] = 1.5
    std::vector<double> v(101, 1.0);
    CHECK(trapezoid_first_moment(v, 1.0, 0.01) == doctest::Approx(1.5).epsilon(1e-12));
  }
}
