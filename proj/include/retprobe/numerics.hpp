#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace retprobe::numerics {

inline constexpr double kPi = 3.14159265358979323846;

/// Uniform grid: points x_i = start + i*step, i in [0, count).
struct GridSpec {
  double start = 0.0;
  double step = 0.0;
  int count = 0;

  double point(int i) const { return start + static_cast<double>(i) * step; }
  double end() const { return point(count - 1); }
  bool valid() const { return step > 0.0 && count >= 2; }
};

/// log C(n, k) via log-gamma. Throws std::invalid_argument on k > n or
/// negative arguments.
double log_binomial(std::int64_t n, std::int64_t k);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// Chi-square CDF with dof degrees of freedom.
double chi2_cdf(double x, int dof);

/// Chi-square quantile (inverse CDF); p in (0,1), dof >= 1.
double chi2_quantile(int dof, double p);

/// Standard normal CDF.
double normal_cdf(double z);

struct EigenResult {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // column j (row-major n x n) pairs values[j]
};

/// Symmetric eigendecomposition for small matrices (n <= 4), cyclic Jacobi.
/// `m` is row-major n x n; asymmetry beyond 1e-9 * max|m| is rejected.
EigenResult sym_eigen(std::span<const double> m, int n);

/// Composite trapezoid integral of uniformly gridded samples.
double trapezoid(std::span<const double> values, double step);

/// Trapezoid integral of x * f(x) over the grid starting at x0.
double trapezoid_first_moment(std::span<const double> values, double x0, double step);

}  // namespace retprobe::numerics
