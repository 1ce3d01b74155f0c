#include "retprobe/kernels/kernels.hpp"

#ifdef RETPROBE_BUILD_AVX2

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <vector>

// AVX2/FMA kernel variants. exp and log are Cody-Waite range reduction plus
// a Horner polynomial; worst-case error is a few ulp on the ranges the grid
// engine produces (exp arguments in [-746, 0], log arguments >= 1e-300).
// exp underflows gradually through the subnormal range like scalar exp.

namespace retprobe::kernels {
namespace {

constexpr double kLog2E = 1.4426950408889634074;
constexpr double kLn2Hi = 6.93147180369123816490e-01;  // top bits of ln 2
constexpr double kLn2Lo = 1.90821492927058770002e-10;  // remainder

// exp via exp(x) = 2^n * P(r), r = x - n*ln2 in [-ln2/2, ln2/2],
// P = truncated Taylor series, degree 13.
inline __m256d exp256(__m256d x) {
  // Any x below -1000 underflows to zero even through gradual underflow
  // (the smallest subnormal is 2^-1074, about exp(-745.2)), so clamping
  // there is exact.
  const __m256d underflow = _mm256_set1_pd(-1000.0);
  const __m256d overflow = _mm256_set1_pd(709.4);
  const __m256d inf = _mm256_set1_pd(HUGE_VAL);

  const __m256d hi_mask = _mm256_cmp_pd(x, overflow, _CMP_GT_OQ);
  __m256d xc = _mm256_min_pd(_mm256_max_pd(x, underflow), overflow);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(kLog2E)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(kLn2Hi), xc);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(kLn2Lo), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);  // 1/13!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // 2^n split into two power-of-two factors. A single exponent-field
  // construction cannot go below 2^-1022, which would flush the subnormal
  // result range to zero; two factors keep each one normal (n is in
  // [-1443, 1024] after the clamp) and the last multiply rounds into the
  // subnormal range exactly like scalar exp. The first multiply is an exact
  // power-of-two scaling, so no extra rounding is introduced.
  const __m128i n32 = _mm256_cvtpd_epi32(n);
  const __m128i n1 = _mm_srai_epi32(n32, 1);
  const __m128i n2 = _mm_sub_epi32(n32, n1);
  const __m256i bias = _mm256_set1_epi64x(1023);
  const __m256d pow1 = _mm256_castsi256_pd(
      _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n1), bias), 52));
  const __m256d pow2 = _mm256_castsi256_pd(
      _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n2), bias), 52));
  __m256d result = _mm256_mul_pd(_mm256_mul_pd(p, pow1), pow2);

  result = _mm256_blendv_pd(result, inf, hi_mask);
  return result;
}

// log via m*2^e decomposition, atanh series in s = (m-1)/(m+1).
inline __m256d log256(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i exp_raw =
      _mm256_srli_epi64(_mm256_and_si256(bits, _mm256_set1_epi64x(0x7FF0000000000000LL)), 52);
  // Pack the four 64-bit exponents into 32-bit lanes for int->double.
  const __m256i pack_idx = _mm256_setr_epi32(0, 2, 4, 6, 0, 0, 0, 0);
  const __m128i exp32 =
      _mm256_castsi256_si128(_mm256_permutevar8x32_epi32(exp_raw, pack_idx));
  __m256d e = _mm256_cvtepi32_pd(_mm_sub_epi32(exp32, _mm_set1_epi32(1023)));

  const __m256i mant_bits = _mm256_or_si256(
      _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
      _mm256_set1_epi64x(0x3FF0000000000000LL));
  __m256d m = _mm256_castsi256_pd(mant_bits);  // [1, 2)

  const __m256d sqrt2 = _mm256_set1_pd(1.4142135623730951);
  const __m256d big = _mm256_cmp_pd(m, sqrt2, _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  e = _mm256_blendv_pd(e, _mm256_add_pd(e, _mm256_set1_pd(1.0)), big);

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d s = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  const __m256d z = _mm256_mul_pd(s, s);

  __m256d q = _mm256_set1_pd(2.0 / 19.0);
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 17.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 15.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 13.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 11.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 9.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 7.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 5.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0 / 3.0));
  q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.0));

  const __m256d log_m = _mm256_mul_pd(s, q);
  return _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Hi),
                         _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Lo), log_m));
}

void vexp_avx2(double* out, const double* in, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, exp256(_mm256_loadu_pd(in + i)));
  for (; i < n; ++i) out[i] = std::exp(in[i]);
}

void vlog_avx2(double* out, const double* in, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, log256(_mm256_loadu_pd(in + i)));
  for (; i < n; ++i) out[i] = std::log(in[i]);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i];
  return s;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gauss_accum_avx2(double* out, std::size_t n, double x0, double h,
                      double mean, double inv_sigma, double amp) {
  const __m256d vh4 = _mm256_set1_pd(4.0 * h);
  const __m256d vinv = _mm256_set1_pd(inv_sigma);
  const __m256d vamp = _mm256_set1_pd(amp);
  const __m256d vneg_half = _mm256_set1_pd(-0.5);
  __m256d x = _mm256_add_pd(_mm256_set1_pd(x0 - mean),
                            _mm256_mul_pd(_mm256_setr_pd(0, 1, 2, 3), _mm256_set1_pd(h)));
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_mul_pd(x, vinv);
    const __m256d arg = _mm256_mul_pd(vneg_half, _mm256_mul_pd(t, t));
    const __m256d g = _mm256_fmadd_pd(vamp, exp256(arg), _mm256_loadu_pd(out + i));
    _mm256_storeu_pd(out + i, g);
    x = _mm256_add_pd(x, vh4);
  }
  for (; i < n; ++i) {
    const double t = (x0 + static_cast<double>(i) * h - mean) * inv_sigma;
    out[i] += amp * std::exp(-0.5 * t * t);
  }
}

void convolve_avx2(double* out, const double* a, std::size_t na,
                   const double* b, std::size_t nb, double h) {
  // Reverse b once so both operands of the inner dot run forward.
  thread_local std::vector<double> rev;
  rev.resize(nb);
  for (std::size_t j = 0; j < nb; ++j) rev[j] = b[nb - 1 - j];
  const double* br = rev.data();

  const std::size_t nout = na + nb - 1;
  for (std::size_t k = 0; k < nout; ++k) {
    const std::size_t i0 = (k >= nb - 1) ? k - (nb - 1) : 0;
    const std::size_t i1 = (k < na - 1) ? k : na - 1;
    if (i0 >= i1) {
      out[k] = 0.0;
      continue;
    }
    const std::size_t len = i1 - i0 + 1;
    // b[k-i] == br[nb-1-k+i]
    double s = dot_avx2(a + i0, br + (nb - 1 - k + i0), len);
    s -= 0.5 * (a[i0] * b[k - i0] + a[i1] * b[k - i1]);
    out[k] = h * s;
  }
}

}  // namespace

const KernelTable* avx2_table_impl() {
  static const KernelTable table = {
      vexp_avx2, vlog_avx2,        sum_avx2,
      dot_avx2,  gauss_accum_avx2, convolve_avx2,
  };
  return &table;
}

}  // namespace retprobe::kernels

#endif  // RETPROBE_BUILD_AVX2
