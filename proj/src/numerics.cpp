#include "retprobe/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "retprobe/kernels/kernels.hpp"

namespace retprobe::numerics {

double log_binomial(std::int64_t n, std::int64_t k) {
  if (n < 0 || k < 0) throw std::invalid_argument("log_binomial: negative argument");
  if (k > n) throw std::invalid_argument("log_binomial: k > n");
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

namespace {

// Series expansion of P(a,x), effective for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x) = 1 - P(a,x), effective for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double hval = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    hval *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return hval * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_p: domain");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(double x, int dof) {
  if (dof < 1) throw std::invalid_argument("chi2_cdf: dof < 1");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(int dof, double p) {
  if (dof < 1) throw std::invalid_argument("chi2_quantile: dof < 1");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p outside (0,1)");

  // Wilson-Hilferty start, then Newton with bisection safeguard. A crude
  // normal-quantile start is enough; Newton converges quadratically.
  const double d = static_cast<double>(dof);
  double z = -std::log(4.0 * p * (1.0 - p));
  z = (p < 0.5 ? -1.0 : 1.0) * std::sqrt(z);
  const double wh = 1.0 - 2.0 / (9.0 * d) + z * std::sqrt(2.0 / (9.0 * d));
  double x = d * wh * wh * wh;
  if (!(x > 0.0)) x = d * p;  // fall back to something positive

  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 100; ++it) {
    const double f = chi2_cdf(x, dof) - p;
    if (f > 0.0)
      hi = std::min(hi, x);
    else
      lo = std::max(lo, x);
    // chi2 pdf at x
    const double a = 0.5 * d;
    const double logpdf = (a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a);
    const double pdf = std::exp(logpdf);
    double next = x - f / pdf;
    if (!(next > lo && (next < hi))) next = std::isinf(hi) ? 2.0 * x : 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-14 * std::max(1.0, x)) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

EigenResult sym_eigen(std::span<const double> m, int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("sym_eigen: n must be in [1,4]");
  if (static_cast<int>(m.size()) != n * n) throw std::invalid_argument("sym_eigen: size mismatch");

  double max_abs = 0.0;
  for (double v : m) max_abs = std::max(max_abs, std::abs(v));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(m[i * n + j] - m[j * n + i]) > 1e-9 * std::max(1.0, max_abs))
        throw std::invalid_argument("sym_eigen: matrix not symmetric");

  std::vector<double> a(m.begin(), m.end());
  // Symmetrize exactly so Jacobi sees a clean input.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double s = 0.5 * (a[i * n + j] + a[j * n + i]);
      a[i * n + j] = s;
      a[j * n + i] = s;
    }

  std::vector<double> v(n * n, 0.0);
  for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;

  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off <= 1e-30 * std::max(1.0, max_abs * max_abs)) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return a[i * n + i] > a[j * n + j]; });

  EigenResult result;
  result.values.resize(n);
  result.vectors.assign(n * n, 0.0);
  for (int j = 0; j < n; ++j) {
    result.values[j] = a[order[j] * n + order[j]];
    for (int i = 0; i < n; ++i) result.vectors[i * n + j] = v[i * n + order[j]];
  }
  return result;
}

double trapezoid(std::span<const double> values, double step) {
  if (values.empty()) return 0.0;
  if (values.size() == 1) return 0.0;
  const double s = kernels::active().sum(values.data(), values.size());
  return step * (s - 0.5 * (values.front() + values.back()));
}

double trapezoid_first_moment(std::span<const double> values, double x0, double step) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    s += w * (x0 + static_cast<double>(i) * step) * values[i];
  }
  return step * s;
}

}  // namespace retprobe::numerics
