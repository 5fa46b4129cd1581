#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

// One-lane backend.  Every operation is a correctly-rounded IEEE double
// op (or exact integer op), so the templated kernel bodies instantiated
// with this type define the reference bit pattern the wide backends
// must reproduce.

namespace remeta::simd {

struct VecScalar {
  static constexpr int width = 1;
  using U32 = std::uint32_t;
  using U64 = std::uint64_t;
  using F64 = double;
  using Mask = bool;

  static U32 u32_set1(std::uint32_t x) { return x; }
  static U32 u32_load(const std::uint32_t* p) { return *p; }
  static void mulhilo(U32 a, std::uint32_t m, U32& hi, U32& lo) {
    std::uint64_t prod = static_cast<std::uint64_t>(a) * m;
    hi = static_cast<std::uint32_t>(prod >> 32);
    lo = static_cast<std::uint32_t>(prod);
  }
  static U32 xor3(U32 a, U32 b, std::uint32_t k) { return a ^ b ^ k; }
  static U64 widen_combine(U32 lo, U32 hi) {
    return static_cast<std::uint64_t>(lo) |
           (static_cast<std::uint64_t>(hi) << 32);
  }

  static F64 set1(double x) { return x; }
  static F64 load_stride(const double* p, std::size_t /*stride*/) { return *p; }
  static void store(double* p, F64 v) { *p = v; }
  static void interleave_store(double* p, F64 a, F64 b) {
    p[0] = a;
    p[1] = b;
  }

  static F64 add(F64 a, F64 b) { return a + b; }
  static F64 sub(F64 a, F64 b) { return a - b; }
  static F64 mul(F64 a, F64 b) { return a * b; }
  static F64 div(F64 a, F64 b) { return a / b; }
  static F64 sqrt_(F64 a) { return std::sqrt(a); }
  static F64 fma_(F64 a, F64 b, F64 c) { return std::fma(a, b, c); }
  // vminpd/vmaxpd semantics: second operand wins on unordered input
  static F64 min_(F64 a, F64 b) { return a < b ? a : b; }
  static F64 max_(F64 a, F64 b) { return a > b ? a : b; }
  static F64 round_nearest(F64 a) { return std::nearbyint(a); }

  static Mask lt(F64 a, F64 b) { return a < b; }
  static Mask gt(F64 a, F64 b) { return a > b; }
  static Mask eq(F64 a, F64 b) { return a == b; }
  static Mask mask_or(Mask a, Mask b) { return a || b; }
  static F64 select(Mask m, F64 a, F64 b) { return m ? a : b; }
  static F64 flipsign_if(Mask m, F64 v) { return m ? -v : v; }

  static U64 to_bits(F64 d) {
    U64 u;
    std::memcpy(&u, &d, sizeof(u));
    return u;
  }
  static F64 from_bits(U64 u) {
    F64 d;
    std::memcpy(&d, &u, sizeof(d));
    return d;
  }
  static U64 srl(U64 x, int s) { return x >> s; }
  static U64 and_(U64 x, std::uint64_t m) { return x & m; }
  static U64 or_(U64 x, std::uint64_t m) { return x | m; }
};

}  // namespace remeta::simd
