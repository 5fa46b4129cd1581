#include <atomic>
#include <cstdlib>
#include <cstring>

#include "remeta/errors.hpp"
#include "remeta/simd/kernels.hpp"

namespace remeta::simd {

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && kernels_avx2() != nullptr;
#else
  return false;
#endif
}

namespace {

Backend pick_initial() {
  const char* env = std::getenv("REMETA_SIMD");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_supported())
        throw NumericalFailure("REMETA_SIMD=avx2 but AVX2 is unavailable");
      return Backend::Avx2;
    }
    // anything else (including "auto") falls through to detection
  }
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{pick_initial()};
  return slot;
}

}  // namespace

Backend active_backend() { return backend_slot().load(); }

void force_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported())
    throw NumericalFailure("AVX2 backend unavailable on this host");
  backend_slot().store(b);
}

const char* backend_name() {
  return active_backend() == Backend::Avx2 ? "avx2" : "scalar";
}

const KernelTable& kernels() {
  if (active_backend() == Backend::Avx2) {
    const KernelTable* t = kernels_avx2();
    if (t != nullptr) return *t;
  }
  return kernels_scalar();
}

void philox4x32_10_ref(const std::uint32_t ctr[4], const std::uint32_t key[2],
                       std::uint32_t out[4]) {
  std::uint32_t x0 = ctr[0], x1 = ctr[1], x2 = ctr[2], x3 = ctr[3];
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(x0) * 0xD2511F53u;
    const std::uint64_t p1 = static_cast<std::uint64_t>(x2) * 0xCD9E8D57u;
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    const std::uint32_t n0 = hi1 ^ x1 ^ k0;
    const std::uint32_t n2 = hi0 ^ x3 ^ k1;
    x0 = n0;
    x1 = lo1;
    x2 = n2;
    x3 = lo0;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  out[0] = x0;
  out[1] = x1;
  out[2] = x2;
  out[3] = x3;
}

}  // namespace remeta::simd
