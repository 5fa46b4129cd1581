#pragma once

#include <cstddef>
#include <cstdint>

#include "remeta/simd/kernels.hpp"
#include "vec_scalar.hpp"

// Kernel bodies, written once over a lane backend V.  Branch-free:
// both sides of every conditional are evaluated and blended, so scalar
// and wide instantiations execute the same operation sequence per lane.

namespace remeta::simd::body {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

template <class V>
struct Kern {
  using U32 = typename V::U32;
  using U64 = typename V::U64;
  using F64 = typename V::F64;
  using Mask = typename V::Mask;

  static void philox_round(U32& x0, U32& x1, U32& x2, U32& x3,
                           std::uint32_t k0, std::uint32_t k1) {
    U32 hi0, lo0, hi1, lo1;
    V::mulhilo(x0, kPhiloxM0, hi0, lo0);
    V::mulhilo(x2, kPhiloxM1, hi1, lo1);
    const U32 n0 = V::xor3(hi1, x1, k0);
    const U32 n2 = V::xor3(hi0, x3, k1);
    x0 = n0;
    x1 = lo1;
    x2 = n2;
    x3 = lo0;
  }

  static void philox10(U32& x0, U32& x1, U32& x2, U32& x3, std::uint64_t key) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int r = 0; r < 10; ++r) {
      philox_round(x0, x1, x2, x3, k0, k1);
      k0 += kPhiloxW0;
      k1 += kPhiloxW1;
    }
  }

  // u64 -> uniform double in (0,1), exact: ((x >> 12) + 0.5) * 2^-52.
  static F64 unit_double(U64 x) {
    const U64 mant = V::or_(V::srl(x, 12), 0x3FF0000000000000ULL);
    const F64 one_two = V::from_bits(mant);  // [1, 2)
    return V::add(V::sub(one_two, V::set1(1.0)), V::set1(0x1p-53));
  }

  // log for arguments in (0, 1]; reduction to m in [sqrt(1/2), sqrt(2))
  // and an odd atanh series in r = (m-1)/(m+1).  Accuracy ~1e-15 rel,
  // identical across backends by construction.
  static F64 log_unit(F64 u) {
    const U64 bits = V::to_bits(u);
    const U64 be = V::srl(bits, 52);  // biased exponent, sign is 0
    const F64 be_d =
        V::sub(V::from_bits(V::or_(be, 0x4330000000000000ULL)), V::set1(0x1p52));
    F64 e = V::sub(be_d, V::set1(1023.0));
    F64 m = V::from_bits(
        V::or_(V::and_(bits, 0x000FFFFFFFFFFFFFULL), 0x3FF0000000000000ULL));
    const Mask big = V::gt(m, V::set1(1.4142135623730951));
    m = V::select(big, V::mul(m, V::set1(0.5)), m);
    e = V::select(big, V::add(e, V::set1(1.0)), e);

    const F64 r = V::div(V::sub(m, V::set1(1.0)), V::add(m, V::set1(1.0)));
    const F64 r2 = V::mul(r, r);
    F64 p = V::set1(1.0 / 21.0);
    p = V::fma_(p, r2, V::set1(1.0 / 19.0));
    p = V::fma_(p, r2, V::set1(1.0 / 17.0));
    p = V::fma_(p, r2, V::set1(1.0 / 15.0));
    p = V::fma_(p, r2, V::set1(1.0 / 13.0));
    p = V::fma_(p, r2, V::set1(1.0 / 11.0));
    p = V::fma_(p, r2, V::set1(1.0 / 9.0));
    p = V::fma_(p, r2, V::set1(1.0 / 7.0));
    p = V::fma_(p, r2, V::set1(1.0 / 5.0));
    p = V::fma_(p, r2, V::set1(1.0 / 3.0));
    p = V::fma_(p, r2, V::set1(1.0));
    const F64 logm = V::mul(V::mul(V::set1(2.0), r), p);

    const F64 ln2_hi = V::set1(0x1.62e42fefa39efp-1);
    const F64 ln2_lo = V::set1(0x1.abc9e3b39803fp-56);
    return V::fma_(e, ln2_hi, V::fma_(e, ln2_lo, logm));
  }

  // sin and cos of 2*pi*u for u in (0,1): octant reduction to
  // theta = f*(pi/2), |f| <= 1/2, plus Taylor kernels on [-pi/4, pi/4].
  static void sincos_2pi(F64 u, F64& sin_out, F64& cos_out) {
    const F64 z = V::mul(u, V::set1(4.0));
    const F64 k = V::round_nearest(z);  // 0..4
    const F64 theta = V::mul(V::sub(z, k), V::set1(1.5707963267948966));
    const F64 x2 = V::mul(theta, theta);

    F64 ps = V::set1(-1.0 / 1307674368000.0);        // -1/15!
    ps = V::fma_(ps, x2, V::set1(1.0 / 6227020800.0));   // +1/13!
    ps = V::fma_(ps, x2, V::set1(-1.0 / 39916800.0));    // -1/11!
    ps = V::fma_(ps, x2, V::set1(1.0 / 362880.0));       // +1/9!
    ps = V::fma_(ps, x2, V::set1(-1.0 / 5040.0));        // -1/7!
    ps = V::fma_(ps, x2, V::set1(1.0 / 120.0));          // +1/5!
    ps = V::fma_(ps, x2, V::set1(-1.0 / 6.0));           // -1/3!
    const F64 s = V::fma_(V::mul(theta, x2), ps, theta);

    F64 pc = V::set1(1.0 / 20922789888000.0);            // +1/16!
    pc = V::fma_(pc, x2, V::set1(-1.0 / 87178291200.0)); // -1/14!
    pc = V::fma_(pc, x2, V::set1(1.0 / 479001600.0));    // +1/12!
    pc = V::fma_(pc, x2, V::set1(-1.0 / 3628800.0));     // -1/10!
    pc = V::fma_(pc, x2, V::set1(1.0 / 40320.0));        // +1/8!
    pc = V::fma_(pc, x2, V::set1(-1.0 / 720.0));         // -1/6!
    pc = V::fma_(pc, x2, V::set1(1.0 / 24.0));           // +1/4!
    const F64 x4 = V::mul(x2, x2);
    const F64 c =
        V::fma_(x4, pc, V::fma_(x2, V::set1(-0.5), V::set1(1.0)));

    // quadrant k mod 4 (k == 4 behaves as 0)
    const Mask is1 = V::eq(k, V::set1(1.0));
    const Mask is2 = V::eq(k, V::set1(2.0));
    const Mask is3 = V::eq(k, V::set1(3.0));
    const Mask swap = V::mask_or(is1, is3);
    sin_out = V::flipsign_if(V::mask_or(is2, is3), V::select(swap, c, s));
    cos_out = V::flipsign_if(V::mask_or(is1, is2), V::select(swap, s, c));
  }

  // One batch of V::width Philox blocks -> 2*width normals via
  // Box-Muller; pair l uses counter (pair0+l, stream) and key seed.
  static void normal_pairs(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t pair0, F64& z0, F64& z1) {
    alignas(32) std::uint32_t c0v[V::width];
    alignas(32) std::uint32_t c1v[V::width];
    for (int l = 0; l < V::width; ++l) {
      const std::uint64_t pr = pair0 + static_cast<std::uint64_t>(l);
      c0v[l] = static_cast<std::uint32_t>(pr);
      c1v[l] = static_cast<std::uint32_t>(pr >> 32);
    }
    U32 x0 = V::u32_load(c0v);
    U32 x1 = V::u32_load(c1v);
    U32 x2 = V::u32_set1(static_cast<std::uint32_t>(stream));
    U32 x3 = V::u32_set1(static_cast<std::uint32_t>(stream >> 32));
    philox10(x0, x1, x2, x3, seed);

    const F64 u1 = unit_double(V::widen_combine(x0, x1));
    const F64 u2 = unit_double(V::widen_combine(x2, x3));
    const F64 r = V::sqrt_(V::mul(V::set1(-2.0), log_unit(u1)));
    F64 sn, cs;
    sincos_2pi(u2, sn, cs);
    z0 = V::mul(r, cs);
    z1 = V::mul(r, sn);
  }

  static void fill_normals(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t pair0, std::size_t npairs,
                           double* out) {
    std::size_t i = 0;
    for (; i + V::width <= npairs; i += V::width) {
      F64 z0, z1;
      normal_pairs(seed, stream, pair0 + i, z0, z1);
      V::interleave_store(out + 2 * i, z0, z1);
    }
    if constexpr (V::width > 1) {
      if (i < npairs)
        Kern<VecScalar>::fill_normals(seed, stream, pair0 + i, npairs - i,
                                      out + 2 * i);
    }
  }

  // Per-sample loss for one of the three weight families.  z holds
  // nsamp samples of m_pad normals each; the first p-1 drive y_j, the
  // following blocks of nu_i - 1 drive the within-group chi^2 parts.
  static void eval_loss(const LossParams& P, const double* z,
                        std::size_t nsamp, double* out) {
    const int pm1 = P.p - 1;
    const std::size_t m = static_cast<std::size_t>(P.m_pad);
    std::size_t s = 0;
    for (; s + V::width <= nsamp; s += V::width) {
      const double* base = z + s * m;
      F64 y2[kMaxP];
      for (int j = 0; j < pm1; ++j) {
        const F64 yj =
            V::mul(V::load_stride(base + j, m), V::set1(P.sd[j]));
        y2[j] = V::mul(yj, yj);
      }
      F64 U[kMaxP];
      int idx = pm1;
      for (int g = 0; g < P.n_u; ++g) {
        F64 acc = V::set1(0.0);
        for (int c = 0; c < P.u_count[g]; ++c) {
          const F64 zc = V::load_stride(base + idx, m);
          acc = V::fma_(zc, zc, acc);
          ++idx;
        }
        U[g] = V::mul(acc, V::set1(P.u_scale[g]));
      }

      F64 loss = V::set1(0.0);
      if (P.family == LossFamily::Fixed) {
        for (int j = 0; j < pm1; ++j)
          loss = V::fma_(y2[j], V::set1(P.wc[j]), loss);
      } else {
        F64 q = V::set1(0.0);
        for (int j = 0; j < pm1; ++j)
          q = V::fma_(y2[j], V::set1(P.qy[j]), q);
        for (int g = 0; g < P.n_u; ++g)
          q = V::fma_(U[g], V::set1(P.ru[g]), q);
        if (P.family == LossFamily::Stein) {
          for (int j = 0; j < pm1; ++j) {
            const F64 wj =
                V::min_(V::div(V::set1(P.aq[j]), q), V::set1(P.invt2[j]));
            const F64 d = V::sub(wj, V::set1(P.h[j]));
            loss = V::add(
                loss, V::mul(V::mul(V::mul(d, d), V::set1(P.bD[j])), y2[j]));
          }
        } else {  // PluginMoment
          const F64 tau = V::max_(
              V::mul(V::sub(q, V::set1(P.mom_shift)), V::set1(P.inv_mom_denom)),
              V::set1(0.0));
          for (int j = 0; j < pm1; ++j) {
            const F64 wj =
                V::div(V::set1(1.0), V::add(tau, V::set1(P.t2[j])));
            const F64 d = V::sub(wj, V::set1(P.h[j]));
            loss = V::add(
                loss, V::mul(V::mul(V::mul(d, d), V::set1(P.bD[j])), y2[j]));
          }
        }
      }
      V::store(out + s, loss);
    }
    if constexpr (V::width > 1) {
      if (s < nsamp)
        Kern<VecScalar>::eval_loss(P, z + s * m, nsamp - s, out + s);
    }
  }
};

}  // namespace remeta::simd::body
