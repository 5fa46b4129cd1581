#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "remeta/rng.hpp"
#include "remeta/simd/kernels.hpp"

using namespace remeta;

TEST_CASE("philox4x32-10 known-answer vectors") {
  // Random123 kat_vectors, philox4x32 with 10 rounds.
  std::uint32_t out[4];
  {
    const std::uint32_t ctr[4] = {0, 0, 0, 0};
    const std::uint32_t key[2] = {0, 0};
    simd::philox4x32_10_ref(ctr, key, out);
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);
  }
  {
    const std::uint32_t ctr[4] = {0xffffffffu, 0xffffffffu, 0xffffffffu,
                                  0xffffffffu};
    const std::uint32_t key[2] = {0xffffffffu, 0xffffffffu};
    simd::philox4x32_10_ref(ctr, key, out);
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);
  }
  {
    const std::uint32_t ctr[4] = {0x243f6a88u, 0x85a308d3u, 0x13198a2eu,
                                  0x03707344u};
    const std::uint32_t key[2] = {0xa4093822u, 0x299f31d0u};
    simd::philox4x32_10_ref(ctr, key, out);
    CHECK(out[0] == 0xd16cfe09u);
    CHECK(out[1] == 0x94fdccebu);
    CHECK(out[2] == 0x5001e420u);
    CHECK(out[3] == 0x24126ea1u);
  }
}

TEST_CASE("scalar and avx2 normal streams are bit-identical") {
  if (!simd::avx2_supported()) {
    MESSAGE("AVX2 unavailable; skipping equivalence check");
    return;
  }
  const std::size_t pairs = 4099;  // odd tail on purpose
  std::vector<double> a(2 * pairs), b(2 * pairs);
  simd::kernels_scalar().fill_normals(0xDEADBEEFu, 7, 1234, pairs, a.data());
  simd::kernels_avx2()->fill_normals(0xDEADBEEFu, 7, 1234, pairs, b.data());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("scalar and avx2 loss kernels are bit-identical") {
  if (!simd::avx2_supported()) return;
  simd::LossParams P;
  P.p = 4;
  P.n_u = 2;
  P.m_pad = 3 + 3 + (0);  // 3 roots + (1+2) chi parts = 6, already even
  const double t2[3] = {1.3, 2.1, 3.7};
  for (int j = 0; j < 3; ++j) {
    P.sd[j] = std::sqrt(0.8 + t2[j]);
    P.t2[j] = t2[j];
    P.invt2[j] = 1.0 / t2[j];
    P.h[j] = 1.0 / (0.8 + t2[j]);
    P.bD[j] = 0.2 + 0.1 * j;
    P.qy[j] = 1.0 / t2[j];
    P.aq[j] = 5.0 / t2[j];
    P.wfix[j] = 0.5 * P.invt2[j];
    const double d = P.wfix[j] - P.h[j];
    P.wc[j] = d * d * P.bD[j];
  }
  P.u_count[0] = 1;
  P.u_count[1] = 2;
  P.u_scale[0] = 1.9;
  P.u_scale[1] = 2.4;
  P.ru[0] = 0.7;
  P.ru[1] = 0.9;
  P.mom_shift = 5.0;
  P.inv_mom_denom = 1.0 / 6.0;

  const std::size_t nsamp = 1027;
  std::vector<double> z(nsamp * P.m_pad);
  simd::kernels_scalar().fill_normals(42, 0, 0, z.size() / 2, z.data());
  std::vector<double> la(nsamp), lb(nsamp);
  for (auto family : {simd::LossFamily::Fixed, simd::LossFamily::Stein,
                      simd::LossFamily::PluginMoment}) {
    P.family = family;
    simd::kernels_scalar().eval_loss(P, z.data(), nsamp, la.data());
    simd::kernels_avx2()->eval_loss(P, z.data(), nsamp, lb.data());
    CHECK(std::memcmp(la.data(), lb.data(), nsamp * sizeof(double)) == 0);
  }
}

TEST_CASE("normals have the right moments") {
  const std::size_t pairs = 1u << 19;  // ~1M draws
  std::vector<double> z(2 * pairs);
  simd::kernels().fill_normals(2024, 1, 0, pairs, z.data());
  double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : z) {
    m1 += v;
    m2 += v * v;
    m3 += v * v * v;
    m4 += v * v * v * v;
  }
  const double n = static_cast<double>(z.size());
  m1 /= n;
  m2 /= n;
  m3 /= n;
  m4 /= n;
  CHECK(std::abs(m1) < 4.0 / std::sqrt(n));
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(m3) < 4.0 * std::sqrt(15.0 / n));
  CHECK(m4 == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("log and sincos agree with libm on box-muller inputs") {
  // spot-check the variates against a plain libm Box-Muller built from
  // the same uniforms
  const std::size_t pairs = 2000;
  std::vector<double> z(2 * pairs);
  simd::kernels_scalar().fill_normals(99, 3, 0, pairs, z.data());
  for (std::size_t k = 0; k < pairs; ++k) {
    std::uint32_t ctr[4] = {static_cast<std::uint32_t>(k), 0, 3, 0};
    std::uint32_t key[2] = {99, 0};
    std::uint32_t o[4];
    simd::philox4x32_10_ref(ctr, key, o);
    const std::uint64_t a =
        static_cast<std::uint64_t>(o[0]) | (static_cast<std::uint64_t>(o[1]) << 32);
    const std::uint64_t b =
        static_cast<std::uint64_t>(o[2]) | (static_cast<std::uint64_t>(o[3]) << 32);
    const double u1 = ((a >> 12) + 0.5) * 0x1p-52;
    const double u2 = ((b >> 12) + 0.5) * 0x1p-52;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double z0 = r * std::cos(2.0 * 3.14159265358979323846 * u2);
    const double z1 = r * std::sin(2.0 * 3.14159265358979323846 * u2);
    CHECK(std::abs(z[2 * k] - z0) < 1e-12 * (1.0 + std::abs(z0)));
    CHECK(std::abs(z[2 * k + 1] - z1) < 1e-12 * (1.0 + std::abs(z1)));
  }
}

TEST_CASE("streams: same key same sequence, different ids decorrelated") {
  RngStream s1(77, 5), s2(77, 5), s3(77, 6);
  std::vector<double> a, b, c;
  for (int i = 0; i < 4096; ++i) {
    a.push_back(s1.normal());
    b.push_back(s2.normal());
    c.push_back(s3.normal());
  }
  CHECK(a == b);
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * c[i];
  const double corr = dot / a.size();
  CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(a.size())));
}

TEST_CASE("chi2 draws have mean df") {
  RngStream s(11, 9);
  const int df = 3;
  const int reps = 200000;
  double acc = 0.0;
  for (int i = 0; i < reps; ++i) acc += s.chi2(df);
  const double mean = acc / reps;
  // Var(chi2_df) = 2 df
  CHECK(std::abs(mean - df) < 4.0 * std::sqrt(2.0 * df / reps));
}

TEST_CASE("fill_normals is batching-invariant") {
  std::vector<double> whole(2 * 1000);
  simd::kernels().fill_normals(5, 2, 100, 1000, whole.data());
  std::vector<double> parts(2 * 1000);
  simd::kernels().fill_normals(5, 2, 100, 137, parts.data());
  simd::kernels().fill_normals(5, 2, 237, 863, parts.data() + 2 * 137);
  CHECK(whole == parts);
}
