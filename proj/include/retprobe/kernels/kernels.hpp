#pragma once

#include <cstddef>
#include <string_view>

namespace retprobe::kernels {

// Array kernels behind the grid engine. Every entry has a scalar reference
// implementation and (on x86-64) an AVX2/FMA variant; the active table is
// picked at runtime from cpuid. Backends agree to tight tolerances, not
// bitwise: the vector exp/log use their own polynomial evaluations and all
// reductions reassociate. tests/test_kernels.cpp pins the tolerances.
struct KernelTable {
  // out[i] = exp(in[i]); in[i] <= -746 underflows to 0.
  void (*vexp)(double* out, const double* in, std::size_t n);

  // out[i] = log(in[i]); caller guarantees in[i] > 0.
  void (*vlog)(double* out, const double* in, std::size_t n);

  // Sum of a[0..n).
  double (*sum)(const double* a, std::size_t n);

  // Dot product of a and b.
  double (*dot)(const double* a, const double* b, std::size_t n);

  // out[i] += amp * exp(-0.5 * ((x0 + i*h - mean) * inv_sigma)^2)
  // One Gaussian mixture component accumulated over a uniform grid.
  void (*gauss_accum)(double* out, std::size_t n, double x0, double h,
                      double mean, double inv_sigma, double amp);

  // Trapezoid-rule linear convolution of two grid functions sharing step h:
  //   out[k] = h * (sum_{i} a[i]*b[k-i] - half-weights at the overlap ends),
  // k in [0, na+nb-2]. A single-point overlap integrates to zero.
  void (*convolve)(double* out, const double* a, std::size_t na,
                   const double* b, std::size_t nb, double h);
};

enum class Backend { Auto, Scalar, Avx2 };

// Active table. Defaults to the best backend the CPU supports.
const KernelTable& active();

// Force a backend (throws std::runtime_error if unavailable on this CPU).
void select(Backend b);

std::string_view active_name();
bool avx2_available();

// Direct access for equivalence tests.
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not built or not supported

}  // namespace retprobe::kernels
