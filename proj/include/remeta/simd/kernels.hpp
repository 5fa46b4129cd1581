#pragma once

#include <cstddef>
#include <cstdint>

// Batch kernels behind the Monte Carlo engine: counter-based random
// streams (Philox4x32-10 -> Box-Muller) and the per-sample loss
// evaluation families.  Each kernel has a scalar reference build and an
// AVX2 build generated from the same templated body, so the two produce
// bit-identical output; selection happens at runtime (REMETA_SIMD
// environment variable: auto | scalar | avx2).

namespace remeta::simd {

enum class Backend { Scalar, Avx2 };

inline constexpr int kMaxP = 32;  // kernel-path cap on distinct variances

// Weight family of the rule being priced.  Fixed covers the sample
// mean, Graybill-Deal and any fixed plug-in tau^2 (oracle included);
// Stein covers (wco)-type rules (delta1, delta0); PluginMoment covers
// plug-ins whose tau^2 estimate is an affine function of the quadratic
// form (DerSimonian-Laird, Hedges, modified Hedges).
enum class LossFamily : int { Fixed = 0, Stein = 1, PluginMoment = 2 };

struct LossParams {
  LossFamily family = LossFamily::Fixed;
  int p = 0;      // distinct variances
  int m_pad = 0;  // normals consumed per sample (even)
  int n_u = 0;    // groups with nu_i > 1

  // Per-root constants (p-1 entries used).
  double sd[kMaxP];      // sqrt(tau2 + t_j^2)
  double t2[kMaxP];      // t_j^2
  double invt2[kMaxP];   // 1 / t_j^2
  double h[kMaxP];       // 1 / (tau2 + t_j^2)
  double bD[kMaxP];      // b_j / sum_l b_l h_l
  double wc[kMaxP];      // Fixed: (w_j - h_j)^2 * bD_j
  double wfix[kMaxP];    // Fixed: the w_j themselves (scalar-path reuse)
  double aq[kMaxP];      // Stein: alpha * q_j
  double qy[kMaxP];      // q_j coefficients on y_j^2

  // Per u-group constants (n_u entries): chi^2 summand count nu_i - 1,
  // scale tau2 + s_i^2 (so U_i = (nu_i-1) u_i^2), coefficient r_i.
  int u_count[kMaxP];
  double u_scale[kMaxP];
  double ru[kMaxP];

  // PluginMoment: tau2_hat = max(0, (q - shift) * inv_denom).
  double mom_shift = 0.0;
  double inv_mom_denom = 0.0;
};

struct KernelTable {
  // Writes 2*npairs standard normals; pair k is a deterministic
  // function of (seed, stream, pair0 + k) only.
  void (*fill_normals)(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t pair0, std::size_t npairs, double* out);
  // Per-sample loss L for nsamp samples laid out sample-major in z
  // (m_pad normals each).
  void (*eval_loss)(const LossParams& params, const double* z,
                    std::size_t nsamp, double* loss_out);
};

bool avx2_supported();
Backend active_backend();
void force_backend(Backend b);  // testing hook
const char* backend_name();

const KernelTable& kernels();          // active backend
const KernelTable& kernels_scalar();   // always available
const KernelTable* kernels_avx2();     // nullptr when unavailable

// Plain one-block Philox4x32-10 reference, for known-answer tests.
void philox4x32_10_ref(const std::uint32_t ctr[4], const std::uint32_t key[2],
                       std::uint32_t out[4]);

}  // namespace remeta::simd
