#include "retprobe/kernels/kernels.hpp"

#include <cmath>

// Scalar reference kernels. These are the ground truth the SIMD variants are
// tested against, so they stay as plain as possible: straight loops over
// libm. Do not "optimize" them.

namespace retprobe::kernels {
namespace {

void vexp_scalar(double* out, const double* in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
}

void vlog_scalar(double* out, const double* in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(in[i]);
}

double sum_scalar(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gauss_accum_scalar(double* out, std::size_t n, double x0, double h,
                        double mean, double inv_sigma, double amp) {
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (x0 + static_cast<double>(i) * h - mean) * inv_sigma;
    out[i] += amp * std::exp(-0.5 * t * t);
  }
}

void convolve_scalar(double* out, const double* a, std::size_t na,
                     const double* b, std::size_t nb, double h) {
  const std::size_t nout = na + nb - 1;
  for (std::size_t k = 0; k < nout; ++k) {
    const std::size_t i0 = (k >= nb - 1) ? k - (nb - 1) : 0;
    const std::size_t i1 = (k < na - 1) ? k : na - 1;
    if (i0 >= i1) {
      out[k] = 0.0;  // zero-width overlap
      continue;
    }
    double s = 0.0;
    for (std::size_t i = i0; i <= i1; ++i) s += a[i] * b[k - i];
    s -= 0.5 * (a[i0] * b[k - i0] + a[i1] * b[k - i1]);
    out[k] = h * s;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {
      vexp_scalar, vlog_scalar,        sum_scalar,
      dot_scalar,  gauss_accum_scalar, convolve_scalar,
  };
  return table;
}

}  // namespace retprobe::kernels
