#pragma once

#if defined(__AVX2__)

#include <immintrin.h>

#include <cstdint>

// Four-lane AVX2 backend.  Only correctly-rounded instructions are
// exposed (+ - * / sqrt fma min max blend), so lane l of any kernel
// instantiated with this type matches the VecScalar result bit for bit.

namespace remeta::simd {

struct VecAvx2 {
  static constexpr int width = 4;
  using U32 = __m128i;   // 4 x u32, one per lane
  using U64 = __m256i;   // 4 x u64
  using F64 = __m256d;   // 4 x double
  using Mask = __m256d;  // compare result bits

  static U32 u32_set1(std::uint32_t x) {
    return _mm_set1_epi32(static_cast<int>(x));
  }
  static U32 u32_load(const std::uint32_t* p) {
    return _mm_loadu_si128(reinterpret_cast<const __m128i*>(p));
  }
  static void mulhilo(U32 a, std::uint32_t m, U32& hi, U32& lo) {
    const __m128i mv = _mm_set1_epi32(static_cast<int>(m));
    const __m128i pe = _mm_mul_epu32(a, mv);  // lanes 0,2 -> 64-bit
    const __m128i po = _mm_mul_epu32(_mm_srli_epi64(a, 32),
                                     _mm_srli_epi64(mv, 32));  // lanes 1,3
    lo = _mm_mullo_epi32(a, mv);
    hi = _mm_or_si128(_mm_srli_epi64(pe, 32),
                      _mm_slli_epi64(_mm_srli_epi64(po, 32), 32));
  }
  static U32 xor3(U32 a, U32 b, std::uint32_t k) {
    return _mm_xor_si128(_mm_xor_si128(a, b),
                         _mm_set1_epi32(static_cast<int>(k)));
  }
  static U64 widen_combine(U32 lo, U32 hi) {
    const __m256i l = _mm256_cvtepu32_epi64(lo);
    const __m256i h = _mm256_cvtepu32_epi64(hi);
    return _mm256_or_si256(l, _mm256_slli_epi64(h, 32));
  }

  static F64 set1(double x) { return _mm256_set1_pd(x); }
  static F64 load_stride(const double* p, std::size_t stride) {
    return _mm256_set_pd(p[3 * stride], p[2 * stride], p[stride], p[0]);
  }
  static void store(double* p, F64 v) { _mm256_storeu_pd(p, v); }
  static void interleave_store(double* p, F64 a, F64 b) {
    const __m256d lo = _mm256_unpacklo_pd(a, b);  // a0 b0 a2 b2
    const __m256d hi = _mm256_unpackhi_pd(a, b);  // a1 b1 a3 b3
    _mm256_storeu_pd(p, _mm256_permute2f128_pd(lo, hi, 0x20));
    _mm256_storeu_pd(p + 4, _mm256_permute2f128_pd(lo, hi, 0x31));
  }

  static F64 add(F64 a, F64 b) { return _mm256_add_pd(a, b); }
  static F64 sub(F64 a, F64 b) { return _mm256_sub_pd(a, b); }
  static F64 mul(F64 a, F64 b) { return _mm256_mul_pd(a, b); }
  static F64 div(F64 a, F64 b) { return _mm256_div_pd(a, b); }
  static F64 sqrt_(F64 a) { return _mm256_sqrt_pd(a); }
  static F64 fma_(F64 a, F64 b, F64 c) { return _mm256_fmadd_pd(a, b, c); }
  static F64 min_(F64 a, F64 b) { return _mm256_min_pd(a, b); }
  static F64 max_(F64 a, F64 b) { return _mm256_max_pd(a, b); }
  static F64 round_nearest(F64 a) {
    return _mm256_round_pd(a, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  }

  static Mask lt(F64 a, F64 b) { return _mm256_cmp_pd(a, b, _CMP_LT_OQ); }
  static Mask gt(F64 a, F64 b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static Mask eq(F64 a, F64 b) { return _mm256_cmp_pd(a, b, _CMP_EQ_OQ); }
  static Mask mask_or(Mask a, Mask b) { return _mm256_or_pd(a, b); }
  static F64 select(Mask m, F64 a, F64 b) { return _mm256_blendv_pd(b, a, m); }
  static F64 flipsign_if(Mask m, F64 v) {
    const __m256d signbit = _mm256_set1_pd(-0.0);
    return _mm256_xor_pd(v, _mm256_and_pd(m, signbit));
  }

  static U64 to_bits(F64 d) { return _mm256_castpd_si256(d); }
  static F64 from_bits(U64 u) { return _mm256_castsi256_pd(u); }
  static U64 srl(U64 x, int s) { return _mm256_srli_epi64(x, s); }
  static U64 and_(U64 x, std::uint64_t m) {
    return _mm256_and_si256(x, _mm256_set1_epi64x(static_cast<long long>(m)));
  }
  static U64 or_(U64 x, std::uint64_t m) {
    return _mm256_or_si256(x, _mm256_set1_epi64x(static_cast<long long>(m)));
  }
};

}  // namespace remeta::simd

#endif  // __AVX2__
