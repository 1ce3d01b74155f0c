#include "retprobe/kernels/kernels.hpp"

#include <stdexcept>

namespace retprobe::kernels {

#ifdef RETPROBE_BUILD_AVX2
const KernelTable* avx2_table_impl();  // defined in avx2.cpp
#endif

namespace {

struct State {
  const KernelTable* table;
  std::string_view name;
};

bool detect_avx2() {
#ifdef RETPROBE_BUILD_AVX2
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

State& state() {
  static State s = [] {
#ifdef RETPROBE_BUILD_AVX2
    if (detect_avx2()) return State{avx2_table_impl(), "avx2"};
#endif
    return State{&scalar_table(), "scalar"};
  }();
  return s;
}

}  // namespace

bool avx2_available() { return detect_avx2(); }

const KernelTable* avx2_table() {
#ifdef RETPROBE_BUILD_AVX2
  if (detect_avx2()) return avx2_table_impl();
#endif
  return nullptr;
}

const KernelTable& active() { return *state().table; }

std::string_view active_name() { return state().name; }

void select(Backend b) {
  switch (b) {
    case Backend::Scalar:
      state() = {&scalar_table(), "scalar"};
      return;
    case Backend::Avx2:
      if (const KernelTable* t = avx2_table()) {
        state() = {t, "avx2"};
        return;
      }
      throw std::runtime_error("avx2 backend not available on this CPU/build");
    case Backend::Auto:
      if (const KernelTable* t = avx2_table()) {
        state() = {t, "avx2"};
      } else {
        state() = {&scalar_table(), "scalar"};
      }
      return;
  }
  throw std::runtime_error("unknown kernel backend");
}

}  // namespace retprobe::kernels
