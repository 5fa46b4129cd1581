#include "remeta/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <thread>

#include "remeta/errors.hpp"
#include "remeta/numerics.hpp"
#include "remeta/rng.hpp"
#include "remeta/simd/kernels.hpp"

namespace remeta {

namespace {

constexpr std::size_t kBlock = 4096;  // samples per reduction block; pinned

struct SampleLayout {
  int pm1 = 0;
  int m = 0;      // normals per sample
  int m_pad = 0;  // rounded up to a full Box-Muller pair
  std::vector<int> u_group;    // group index i for each nu_i > 1 group
  std::vector<int> u_count;    // nu_i - 1
  std::vector<double> u_scale;  // tau2 + s_i^2
};

SampleLayout make_layout(const CanonicalForm& cf, double tau2) {
  SampleLayout lay;
  lay.pm1 = cf.p() - 1;
  lay.m = lay.pm1;
  for (int i = 0; i < cf.p(); ++i) {
    if (cf.g.nu[i] > 1) {
      lay.u_group.push_back(i);
      lay.u_count.push_back(cf.g.nu[i] - 1);
      lay.u_scale.push_back(tau2 + cf.g.s2[i]);
      lay.m += cf.g.nu[i] - 1;
    }
  }
  lay.m_pad = lay.m + (lay.m & 1);
  return lay;
}

double sum_bh(const CanonicalForm& cf, double tau2) {
  double acc = 0.0;
  for (size_t j = 0; j < cf.b.size(); ++j)
    acc += cf.b[j] / (tau2 + cf.t2[j]);
  return acc;
}

// Maps a rule to a kernel loss family where possible.
bool fill_loss_params(const CanonicalForm& cf, double tau2,
                      const WeightRule& rule, const SampleLayout& lay,
                      simd::LossParams& P) {
  const GroupedData& g = cf.g;
  if (g.p > simd::kMaxP) return false;
  P.p = g.p;
  P.m_pad = lay.m_pad;
  P.n_u = static_cast<int>(lay.u_group.size());
  const double D = sum_bh(cf, tau2);
  for (int j = 0; j < lay.pm1; ++j) {
    P.sd[j] = std::sqrt(tau2 + cf.t2[j]);
    P.t2[j] = cf.t2[j];
    P.invt2[j] = 1.0 / cf.t2[j];
    P.h[j] = 1.0 / (tau2 + cf.t2[j]);
    P.bD[j] = cf.b[j] / D;
  }
  for (int u = 0; u < P.n_u; ++u) {
    P.u_count[u] = lay.u_count[u];
    P.u_scale[u] = lay.u_scale[u];
  }

  auto fixed_family = [&](const std::vector<double>& w) {
    P.family = simd::LossFamily::Fixed;
    for (int j = 0; j < lay.pm1; ++j) {
      P.wfix[j] = w[j];
      const double d = w[j] - P.h[j];
      P.wc[j] = d * d * P.bD[j];
    }
  };
  auto stein_family = [&](const QuadraticFormSpec& spec, double alpha) {
    P.family = simd::LossFamily::Stein;
    for (int j = 0; j < lay.pm1; ++j) {
      P.qy[j] = spec.q[j];
      P.aq[j] = alpha * spec.q[j];
    }
    for (int u = 0; u < P.n_u; ++u) P.ru[u] = spec.r[lay.u_group[u]];
  };
  auto moment_family = [&](const QuadraticFormSpec& spec, double denom) {
    P.family = simd::LossFamily::PluginMoment;
    double shift = 0.0;
    for (int j = 0; j < lay.pm1; ++j) {
      P.qy[j] = spec.q[j];
      shift += spec.q[j] * cf.t2[j];
    }
    for (int u = 0; u < P.n_u; ++u) {
      const int i = lay.u_group[u];
      P.ru[u] = spec.r[i];
      shift += lay.u_count[u] * spec.r[i] * g.s2[i];
    }
    P.mom_shift = shift;
    P.inv_mom_denom = 1.0 / denom;
  };

  auto inv_t2_spec = [&]() {
    QuadraticFormSpec s;
    s.q.resize(lay.pm1);
    s.r.resize(g.p);
    for (int j = 0; j < lay.pm1; ++j) s.q[j] = 1.0 / cf.t2[j];
    for (int i = 0; i < g.p; ++i) s.r[i] = 1.0 / g.s2[i];
    return s;
  };

  switch (rule.kind) {
    case RuleKind::SampleMean:
      fixed_family(std::vector<double>(lay.pm1, 0.0));
      return true;
    case RuleKind::GraybillDeal: {
      std::vector<double> w(lay.pm1);
      for (int j = 0; j < lay.pm1; ++j) w[j] = P.invt2[j];
      fixed_family(w);
      return true;
    }
    case RuleKind::PluginFixed: {
      std::vector<double> w(lay.pm1);
      for (int j = 0; j < lay.pm1; ++j)
        w[j] = 1.0 / (rule.fixed_tau2 + cf.t2[j]);
      fixed_family(w);
      return true;
    }
    case RuleKind::Delta1:
      stein_family(QuadraticFormSpec::equal(g.p), g.n - 3);
      return true;
    case RuleKind::Delta0:
      stein_family(inv_t2_spec(), g.n - 1);
      return true;
    case RuleKind::Stein: {
      QuadraticFormSpec spec =
          rule.spec ? *rule.spec : QuadraticFormSpec::equal(g.p);
      if (spec.q.empty()) spec.q.assign(lay.pm1, 1.0);
      if (spec.q.size() == 1 && lay.pm1 > 1) spec.q.assign(lay.pm1, spec.q[0]);
      if (spec.r.empty()) spec.r.assign(g.p, 1.0);
      if (spec.r.size() == 1 && g.p > 1) spec.r.assign(g.p, spec.r[0]);
      stein_family(spec, rule.alpha);
      return true;
    }
    case RuleKind::PluginDL: {
      auto spec = inv_t2_spec();
      double denom = 0.0;
      for (int j = 0; j < lay.pm1; ++j) denom += spec.q[j];
      for (int i = 0; i < g.p; ++i) denom += (g.nu[i] - 1) * spec.r[i];
      moment_family(spec, denom);
      return true;
    }
    case RuleKind::PluginHedges:
      moment_family(QuadraticFormSpec::equal(g.p), g.n - 1);
      return true;
    case RuleKind::ModifiedHedges:
      moment_family(QuadraticFormSpec::equal(g.p), g.n - 3);
      return true;
    case RuleKind::PluginMP:
    case RuleKind::PluginREML:
    case RuleKind::Bayes:
      return false;  // per-sample iterative weights; scalar path
  }
  return false;
}

template <typename Fn>
void run_blocks(std::size_t n_blocks, int threads, const Fn& body) {
  threads = std::max(1, threads);
  if (threads == 1 || n_blocks <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) body(b);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      for (std::size_t b = static_cast<std::size_t>(t); b < n_blocks;
           b += static_cast<std::size_t>(threads))
        body(b);
    });
  }
  for (auto& th : pool) th.join();
}

struct BlockMoments {
  double sum = 0.0;
  double sumsq = 0.0;
};

// Draws y/u2 for one sample from its slice of normals.
void sample_stats(const SampleLayout& lay, const CanonicalForm& cf,
                  double tau2, const double* zs, std::vector<double>& y,
                  std::vector<double>& u2) {
  for (int j = 0; j < lay.pm1; ++j)
    y[j] = std::sqrt(tau2 + cf.t2[j]) * zs[j];
  std::fill(u2.begin(), u2.end(), 0.0);
  int idx = lay.pm1;
  for (size_t u = 0; u < lay.u_group.size(); ++u) {
    double acc = 0.0;
    for (int c = 0; c < lay.u_count[u]; ++c) {
      acc += zs[idx] * zs[idx];
      ++idx;
    }
    u2[lay.u_group[u]] = lay.u_scale[u] * acc / lay.u_count[u];
  }
}

double loss_from_weights(const CanonicalForm& cf, double tau2,
                         const std::vector<double>& w,
                         const std::vector<double>& y) {
  const double D = sum_bh(cf, tau2);
  double acc = 0.0;
  for (size_t j = 0; j < w.size(); ++j) {
    const double d = w[j] - 1.0 / (tau2 + cf.t2[j]);
    acc += d * d * cf.b[j] * y[j] * y[j];
  }
  return acc / D;
}

}  // namespace

double loss(const CanonicalForm& design, double tau2,
            const std::vector<double>& y, const std::vector<double>& u2,
            const WeightRule& rule) {
  if (tau2 < 0.0) throw InvalidInput("tau2 >= 0 required");
  CanonicalForm cf = design;
  cf.y = y;
  cf.g.u2 = u2;
  const std::vector<double> w = rule_weights(cf, rule);
  return loss_from_weights(cf, tau2, w, y);
}

double loss_squared_error_form(const CanonicalForm& design, double tau2,
                               const std::vector<double>& y,
                               const std::vector<double>& u2,
                               const WeightRule& rule) {
  CanonicalForm cf = design;
  cf.y = y;
  cf.g.u2 = u2;
  const std::vector<double> w = rule_weights(cf, rule);
  double diff = 0.0;
  for (size_t j = 0; j < w.size(); ++j)
    diff += std::sqrt(cf.b[j]) * (1.0 / (tau2 + cf.t2[j]) - w[j]) * y[j];
  return diff * diff / sum_bh(cf, tau2);
}

RiskPoint r_risk_mc(const CanonicalForm& design, double tau2,
                    const WeightRule& rule, const McOptions& opts) {
  if (opts.n_samples == 0) throw InvalidInput("n_samples >= 1 required");
  if (tau2 < 0.0) throw InvalidInput("tau2 >= 0 required");
  const SampleLayout lay = make_layout(design, tau2);
  const std::uint64_t n = opts.n_samples;
  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<BlockMoments> partial(n_blocks);

  simd::LossParams P;
  const bool kernel_path = fill_loss_params(design, tau2, rule, lay, P);
  const std::uint64_t pairs_per_sample = lay.m_pad / 2;
  const auto& K = simd::kernels();

  run_blocks(n_blocks, opts.threads, [&](std::size_t blk) {
    const std::uint64_t s0 = blk * kBlock;
    const std::size_t cnt =
        static_cast<std::size_t>(std::min<std::uint64_t>(kBlock, n - s0));
    std::vector<double> z(cnt * lay.m_pad);
    K.fill_normals(opts.seed, opts.stream, s0 * pairs_per_sample,
                   cnt * pairs_per_sample, z.data());
    std::vector<double> losses(cnt);
    if (kernel_path) {
      K.eval_loss(P, z.data(), cnt, losses.data());
    } else {
      CanonicalForm cf = design;
      std::vector<double> y(lay.pm1), u2(design.p());
      for (std::size_t s = 0; s < cnt; ++s) {
        sample_stats(lay, design, tau2, z.data() + s * lay.m_pad, y, u2);
        cf.y = y;
        cf.g.u2 = u2;
        losses[s] = loss_from_weights(cf, tau2, rule_weights(cf, rule), y);
      }
    }
    KahanSum sum, sumsq;
    for (std::size_t s = 0; s < cnt; ++s) {
      sum.add(losses[s]);
      sumsq.add(losses[s] * losses[s]);
    }
    partial[blk] = BlockMoments{sum.value(), sumsq.value()};
  });

  KahanSum total, totalsq;
  for (const auto& bm : partial) {
    total.add(bm.sum);
    totalsq.add(bm.sumsq);
  }
  const double nn = static_cast<double>(n);
  const double mean = total.value() / nn;
  double var = 0.0;
  if (n > 1)
    var = std::max(0.0, (totalsq.value() - nn * mean * mean) / (nn - 1.0));
  RiskPoint pt;
  pt.tau2 = tau2;
  pt.r_risk = mean;
  pt.mc_std_error = std::sqrt(var / nn);
  pt.n_samples = n;
  pt.method = RiskMethod::MonteCarlo;
  return pt;
}

double fixed_rule_risk_closed(const CanonicalForm& design, double tau2,
                              const std::vector<double>& w) {
  double num = 0.0;
  for (size_t j = 0; j < w.size(); ++j) {
    const double h = 1.0 / (tau2 + design.t2[j]);
    const double d = w[j] - h;
    num += d * d * design.b[j] * (tau2 + design.t2[j]);
  }
  return num / sum_bh(design, tau2);
}

double gd_risk_closed(const CanonicalForm& design, double tau2) {
  std::vector<double> w(design.t2.size());
  for (size_t j = 0; j < w.size(); ++j) w[j] = 1.0 / design.t2[j];
  return fixed_rule_risk_closed(design, tau2, w);
}

DecompCheck variance_decomposition_check(const std::vector<double>& s2,
                                         const std::vector<int>& nu, double mu,
                                         double tau2, const WeightRule& rule,
                                         std::uint64_t reps,
                                         std::uint64_t seed) {
  if (reps < 2) throw InvalidInput("reps >= 2 required");
  GenerativeConfig config;
  config.mu = mu;
  config.tau2 = tau2;
  config.group_variances = s2;
  config.multiplicities = nu;
  config.seed = seed;

  std::vector<double> deltas;
  deltas.reserve(reps);
  KahanSum sq, sq2;
  for (std::uint64_t r = 0; r < reps; ++r) {
    const StudySet set = simulate(config, streams::kDecomp + r);
    const CanonicalForm cf = transform(group(set));
    const MuEstimate est = estimate_mu(cf, rule);
    const double xt = weighted_mean_decomposition(cf, tau2).direct;
    const double dsq = (est.value - xt) * (est.value - xt);
    deltas.push_back(est.value);
    sq.add(dsq);
    sq2.add(dsq * dsq);
  }
  const double nn = static_cast<double>(reps);
  double mean_d = 0.0;
  for (double d : deltas) mean_d += d;
  mean_d /= nn;
  double m2 = 0.0, m4 = 0.0;
  for (double d : deltas) {
    const double c = d - mean_d;
    m2 += c * c;
    m4 += c * c * c * c;
  }
  m2 /= nn;
  m4 /= nn;
  const double var_d = m2 * nn / (nn - 1.0);
  const double se_var = std::sqrt(std::max(0.0, m4 - m2 * m2) / nn);
  const double mean_q = sq.value() / nn;
  const double var_q =
      std::max(0.0, (sq2.value() - nn * mean_q * mean_q) / (nn - 1.0));

  double wsum = 0.0;
  for (size_t i = 0; i < s2.size(); ++i) wsum += nu[i] / (tau2 + s2[i]);

  DecompCheck out;
  out.var_xt = 1.0 / wsum;
  out.var_delta = var_d;
  out.var_delta_se = se_var;
  out.rhs = out.var_xt + mean_q;
  out.rhs_se = std::sqrt(var_q / nn);
  return out;
}

namespace {

struct WeightDerivs {
  std::vector<double> w;
  std::vector<double> dfdy;  // d(y_j w_j)/d y_j
  bool at_kink = false;
};

WeightDerivs analytic_derivs(const CanonicalForm& cf, const WeightRule& rule) {
  const GroupedData& g = cf.g;
  const int pm1 = g.p - 1;
  WeightDerivs out;
  out.w = rule_weights(cf, rule);
  out.dfdy.assign(pm1, 0.0);

  auto qspec_of = [&](RuleKind kind) {
    QuadraticFormSpec s = QuadraticFormSpec::equal(g.p);
    if (kind == RuleKind::Delta0 || kind == RuleKind::PluginDL) {
      for (int j = 0; j < pm1; ++j) s.q[j] = 1.0 / cf.t2[j];
      for (int i = 0; i < g.p; ++i) s.r[i] = 1.0 / g.s2[i];
    } else if (kind == RuleKind::Stein) {
      if (rule.spec) {
        s = *rule.spec;
        if (s.q.empty()) s.q.assign(pm1, 1.0);
        if (s.q.size() == 1 && pm1 > 1) s.q.assign(pm1, s.q[0]);
        if (s.r.empty()) s.r.assign(g.p, 1.0);
        if (s.r.size() == 1 && g.p > 1) s.r.assign(g.p, s.r[0]);
      }
    }
    return s;
  };

  switch (rule.kind) {
    case RuleKind::SampleMean:
    case RuleKind::GraybillDeal:
    case RuleKind::PluginFixed:
      for (int j = 0; j < pm1; ++j) out.dfdy[j] = out.w[j];
      return out;
    case RuleKind::Delta1:
    case RuleKind::Delta0:
    case RuleKind::Stein: {
      const QuadraticFormSpec spec = qspec_of(rule.kind);
      const double alpha = rule.kind == RuleKind::Delta1  ? g.n - 3
                           : rule.kind == RuleKind::Delta0 ? g.n - 1
                                                           : rule.alpha;
      double q = 0.0;
      for (int j = 0; j < pm1; ++j) q += spec.q[j] * cf.y[j] * cf.y[j];
      for (int i = 0; i < g.p; ++i)
        q += (g.nu[i] - 1) * spec.r[i] * g.u2[i];
      for (int j = 0; j < pm1; ++j) {
        const double cap = 1.0 / cf.t2[j];
        const double unclamped = alpha * spec.q[j] / q;
        if (std::abs(unclamped - cap) <= 1e-12 * cap) out.at_kink = true;
        if (unclamped < cap) {
          const double y = cf.y[j];
          out.dfdy[j] = unclamped - 2.0 * alpha * spec.q[j] * spec.q[j] * y *
                                        y / (q * q);
        } else {
          out.dfdy[j] = cap;
        }
      }
      return out;
    }
    case RuleKind::PluginDL:
    case RuleKind::PluginHedges:
    case RuleKind::ModifiedHedges: {
      const QuadraticFormSpec spec = qspec_of(rule.kind);
      double denom = 0.0;
      if (rule.kind == RuleKind::PluginDL) {
        for (int j = 0; j < pm1; ++j) denom += spec.q[j];
        for (int i = 0; i < g.p; ++i) denom += (g.nu[i] - 1) * spec.r[i];
      } else {
        denom = rule.kind == RuleKind::PluginHedges ? g.n - 1 : g.n - 3;
      }
      double shift = 0.0, qform = 0.0;
      for (int j = 0; j < pm1; ++j) {
        shift += spec.q[j] * cf.t2[j];
        qform += spec.q[j] * cf.y[j] * cf.y[j];
      }
      for (int i = 0; i < g.p; ++i) {
        shift += (g.nu[i] - 1) * spec.r[i] * g.s2[i];
        qform += (g.nu[i] - 1) * spec.r[i] * g.u2[i];
      }
      const double tau_raw = (qform - shift) / denom;
      if (std::abs(tau_raw) <= 1e-12 * (1.0 + shift / denom))
        out.at_kink = true;
      for (int j = 0; j < pm1; ++j) {
        if (tau_raw > 0.0) {
          const double wj = 1.0 / (tau_raw + cf.t2[j]);
          out.dfdy[j] =
              wj - 2.0 * (spec.q[j] / denom) * cf.y[j] * cf.y[j] * wj * wj;
        } else {
          out.dfdy[j] = 1.0 / cf.t2[j];
        }
      }
      return out;
    }
    default:
      throw UnsupportedInput(
          "unbiased risk estimate: rule must be sample mean, fixed plug-in, "
          "stein family, or a moment plug-in");
  }
}

}  // namespace

UreResult unbiased_risk_estimate(const CanonicalForm& cf,
                                 const WeightRule& rule, DerivMode mode) {
  const int pm1 = cf.p() - 1;
  WeightDerivs d;
  if (mode == DerivMode::Analytic) {
    d = analytic_derivs(cf, rule);
  } else {
    d.w = rule_weights(cf, rule);
    d.dfdy.assign(pm1, 0.0);
    double scale = std::sqrt(q_infinity(cf) / std::max(1, cf.n() - 1));
    if (!(scale > 0.0)) scale = 1.0;
    CanonicalForm probe = cf;
    for (int j = 0; j < pm1; ++j) {
      const double eps = 1e-5 * std::max(scale, std::abs(cf.y[j]));
      probe.y = cf.y;
      probe.y[j] = cf.y[j] + eps;
      const double fp = probe.y[j] * rule_weights(probe, rule)[j];
      probe.y[j] = cf.y[j] - eps;
      const double fm = probe.y[j] * rule_weights(probe, rule)[j];
      d.dfdy[j] = (fp - fm) / (2.0 * eps);
    }
  }
  UreResult out;
  out.at_kink = d.at_kink;
  double acc = 0.0;
  for (int j = 0; j < pm1; ++j) {
    const double f = cf.y[j] * d.w[j];
    acc += cf.b[j] * (f * f - 2.0 * d.dfdy[j]);
  }
  out.value = acc;
  return out;
}

McValue theorem1_limit(const CanonicalForm& design,
                       const QuadraticFormSpec& spec,
                       const std::vector<double>& alphas,
                       std::uint64_t n_samples, std::uint64_t seed) {
  const GroupedData& g = design.g;
  if (g.n <= 3) throw InvalidForSampleSize("theorem 1 requires n > 3");
  const int pm1 = g.p - 1;
  if (static_cast<int>(alphas.size()) != pm1)
    throw InvalidInput("theorem1_limit: need p-1 alphas");
  if (static_cast<int>(spec.q.size()) != pm1 ||
      static_cast<int>(spec.r.size()) != g.p)
    throw InvalidInput("theorem1_limit: spec sizes must match the design");

  SampleLayout lay = make_layout(design, 0.0);  // counts reused; scales unused
  const double bsum =
      std::accumulate(design.b.begin(), design.b.end(), 0.0);
  const std::size_t n_blocks = (n_samples + kBlock - 1) / kBlock;
  std::vector<BlockMoments> partial(n_blocks);
  const std::uint64_t pairs_per_sample = lay.m_pad / 2;
  const auto& K = simd::kernels();

  run_blocks(n_blocks, 1, [&](std::size_t blk) {
    const std::uint64_t s0 = blk * kBlock;
    const std::size_t cnt = static_cast<std::size_t>(
        std::min<std::uint64_t>(kBlock, n_samples - s0));
    std::vector<double> z(cnt * lay.m_pad);
    K.fill_normals(seed, streams::kTheorem1, s0 * pairs_per_sample,
                   cnt * pairs_per_sample, z.data());
    KahanSum sum, sumsq;
    for (std::size_t s = 0; s < cnt; ++s) {
      const double* zs = z.data() + s * lay.m_pad;
      double q = 0.0;
      for (int j = 0; j < pm1; ++j) q += spec.q[j] * zs[j] * zs[j];
      int idx = pm1;
      for (size_t u = 0; u < lay.u_group.size(); ++u) {
        double chi = 0.0;
        for (int c = 0; c < lay.u_count[u]; ++c) {
          chi += zs[idx] * zs[idx];
          ++idx;
        }
        q += spec.r[lay.u_group[u]] * chi;
      }
      double gs = 0.0;
      for (int j = 0; j < pm1; ++j) {
        const double zj2 = zs[j] * zs[j];
        gs += design.b[j] *
              (2.0 * alphas[j] * zj2 / q -
               alphas[j] * alphas[j] * zj2 / (q * q));
      }
      gs /= bsum;
      sum.add(gs);
      sumsq.add(gs * gs);
    }
    partial[blk] = BlockMoments{sum.value(), sumsq.value()};
  });

  KahanSum total, totalsq;
  for (const auto& bm : partial) {
    total.add(bm.sum);
    totalsq.add(bm.sumsq);
  }
  const double nn = static_cast<double>(n_samples);
  const double mean_g = total.value() / nn;
  const double var_g = std::max(
      0.0, (totalsq.value() - nn * mean_g * mean_g) / (nn - 1.0));
  McValue out;
  out.value = 1.0 - mean_g;
  out.std_error = std::sqrt(var_g / nn);
  out.n_samples = n_samples;
  return out;
}

double theorem1_limit_equal_closed(int n, double alpha) {
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  return 1.0 - 2.0 * alpha / (n - 1) + alpha * alpha / ((n - 1.0) * (n - 3.0));
}

double xbar_improvement_alpha(const CanonicalForm& design,
                              const QuadraticFormSpec& spec) {
  const GroupedData& g = design.g;
  if (g.n <= 3) throw InvalidForSampleSize("n > 3 required");
  const int pm1 = g.p - 1;
  double min_qt = std::numeric_limits<double>::infinity();
  double max_qt = 0.0;
  for (int j = 0; j < pm1; ++j) {
    const double v = spec.q[j] * spec.q[j] * design.t2[j] * design.t2[j];
    min_qt = std::min(min_qt, v);
    max_qt = std::max(max_qt, v);
  }
  for (int i = 0; i < g.p; ++i) {
    if (g.nu[i] < 2) continue;
    const double v = spec.r[i] * spec.r[i] * g.s2[i] * g.s2[i];
    min_qt = std::min(min_qt, v);
    max_qt = std::max(max_qt, v);
  }
  double bq = 0.0, bq2 = 0.0;
  for (int j = 0; j < pm1; ++j) {
    bq += design.b[j] * spec.q[j];
    bq2 += design.b[j] * spec.q[j] * spec.q[j];
  }
  return 2.0 * (g.n - 3) * min_qt * bq / (max_qt * bq2);
}

double equal_uncertainty_risk(int n, double s2, double tau2, double alpha) {
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  if (!(s2 > 0.0) || tau2 < 0.0) throw InvalidInput("need s2 > 0, tau2 >= 0");
  const double xi = alpha * s2 / (tau2 + s2);
  const double t4 = (tau2 / s2) * (tau2 / s2);
  return 1.0 - (1.0 - t4) * chi2_cdf(n + 1, xi) -
         2.0 * alpha * chi2_sf(n - 1, xi) / (n - 1) +
         alpha * alpha * chi2_sf(n - 3, xi) / ((n - 1.0) * (n - 3.0));
}

double equal_uncertainty_risk_general(int n, double s2, double tau2,
                                      const std::function<double(double)>& w,
                                      const std::vector<double>& kinks) {
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double sigma = tau2 + s2;
  const double hi = chi2_tail_cutoff(n + 1, 1e-18);
  std::vector<double> ukinks;
  for (double v : kinks) ukinks.push_back(v / sigma);
  auto f = [&](double u) {
    const double d = sigma * w(sigma * u) - 1.0;
    return d * d * chi2_pdf(n + 1, u);
  };
  return integrate_with_kinks(f, 0.0, hi, ukinks, 1e-10);
}

std::function<double(double)> equal_uncertainty_w(RuleKind kind, int n,
                                                  double s2, double* kink) {
  switch (kind) {
    case RuleKind::SampleMean:
      if (kink) *kink = -1.0;
      return [](double) { return 0.0; };
    case RuleKind::GraybillDeal:
      if (kink) *kink = -1.0;
      return [s2](double) { return 1.0 / s2; };
    case RuleKind::Delta1:
      if (kink) *kink = (n - 3) * s2;
      return [n, s2](double v) { return std::min((n - 3) / v, 1.0 / s2); };
    case RuleKind::PluginDL:
    case RuleKind::PluginHedges:
    case RuleKind::PluginREML:
      if (kink) *kink = (n - 1) * s2;
      return [n, s2](double v) { return std::min((n - 1) / v, 1.0 / s2); };
    case RuleKind::ModifiedHedges:
      if (kink) *kink = (n - 1) * s2;
      return [n, s2](double v) {
        return 1.0 / (std::max(0.0, v - (n - 1) * s2) / (n - 3) + s2);
      };
    default:
      throw UnsupportedInput(
          "no equal-uncertainty limiting weight for this rule");
  }
}

double minimax_bound(int n) {
  if (n <= 3) throw InvalidForSampleSize("minimax bound needs n > 3");
  return 2.0 / (n - 1);
}

namespace {

void require_p2_design(const CanonicalForm& design) {
  if (design.p() != 2)
    throw UnsupportedInput("this operation is for p = 2 designs");
}

}  // namespace

double p2_kappa(const CanonicalForm& design) {
  require_p2_design(design);
  const GroupedData& g = design.g;
  return 1.0 + design.t2[0] * ((g.nu[0] - 1) / g.s2[0] +
                               (g.nu[1] - 1) / g.s2[1]);
}

double p2_risk_at_zero_dl(const CanonicalForm& design) {
  require_p2_design(design);
  const int n = design.n();
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double kappa = p2_kappa(design);
  const double lo = n - 1.0;
  const double hi = chi2_tail_cutoff(n + 1, 1e-18);
  auto f = [&](double v) {
    const double d = 1.0 / (1.0 + (v - (n - 1.0)) / kappa) - 1.0;
    return d * d * chi2_pdf(n + 1, v);
  };
  return integrate(f, lo, hi, 1e-10);
}

double p2_risk_at_zero_delta0(const CanonicalForm& design) {
  require_p2_design(design);
  const int n = design.n();
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double lo = n - 1.0;
  const double hi = chi2_tail_cutoff(n + 1, 1e-18);
  auto f = [&](double v) {
    const double d = (n - 1.0) / v - 1.0;
    return d * d * chi2_pdf(n + 1, v);
  };
  return integrate(f, lo, hi, 1e-10);
}

double p2_risk_at_zero_delta1_quad(const CanonicalForm& design) {
  require_p2_design(design);
  const GroupedData& g = design.g;
  const int n = g.n;
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double t2 = design.t2[0];
  const double c = (n - 3.0) * t2;  // threshold on V

  // components of V = t^2 chi2_3 + s1^2 chi2_{nu1-1} + s2^2 chi2_{nu2-1}
  std::vector<std::pair<double, int>> comps{{t2, 3}};
  for (int i = 0; i < 2; ++i)
    if (g.nu[i] > 1) comps.emplace_back(g.s2[i], g.nu[i] - 1);

  auto gfun = [&](double V) {
    if (V <= c) return 0.0;
    const double d = c / V - 1.0;
    return d * d;
  };
  // iterated expectation over the chi-square components
  std::function<double(std::size_t, double)> nest =
      [&](std::size_t level, double acc) -> double {
    if (level == comps.size()) return gfun(acc);
    const auto [coef, df] = comps[level];
    const double hi = chi2_tail_cutoff(df, 1e-16);
    std::vector<double> kinks;
    const double xk = (c - acc) / coef;
    if (xk > 0.0 && xk < hi) kinks.push_back(xk);
    const double tol = level == 0 ? 1e-9 : 1e-11;
    return integrate_with_kinks(
        [&](double x) {
          return chi2_pdf(df, x) * nest(level + 1, acc + coef * x);
        },
        0.0, hi, kinks, tol);
  };
  return nest(0, 0.0);
}

McValue p2_risk_at_zero_delta1_mc(const CanonicalForm& design,
                                  std::uint64_t draws, std::uint64_t seed) {
  require_p2_design(design);
  const GroupedData& g = design.g;
  const int n = g.n;
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double t2 = design.t2[0];
  const double c = (n - 3.0) * t2;
  const int m = n + 1;  // 3 + (nu1-1) + (nu2-1)
  const int m_pad = m + (m & 1);
  const std::uint64_t pairs_per_draw = m_pad / 2;
  const std::size_t n_blocks = (draws + kBlock - 1) / kBlock;
  std::vector<BlockMoments> partial(n_blocks);
  const auto& K = simd::kernels();
  run_blocks(n_blocks, 1, [&](std::size_t blk) {
    const std::uint64_t s0 = blk * kBlock;
    const std::size_t cnt =
        static_cast<std::size_t>(std::min<std::uint64_t>(kBlock, draws - s0));
    std::vector<double> z(cnt * m_pad);
    K.fill_normals(seed, streams::kP2Delta1, s0 * pairs_per_draw,
                   cnt * pairs_per_draw, z.data());
    KahanSum sum, sumsq;
    for (std::size_t s = 0; s < cnt; ++s) {
      const double* zs = z.data() + s * m_pad;
      double V = 0.0;
      int idx = 0;
      for (int c3 = 0; c3 < 3; ++c3, ++idx) V += t2 * zs[idx] * zs[idx];
      for (int i = 0; i < 2; ++i)
        for (int k = 0; k < g.nu[i] - 1; ++k, ++idx)
          V += g.s2[i] * zs[idx] * zs[idx];
      double gs = 0.0;
      if (V > c) {
        const double d = c / V - 1.0;
        gs = d * d;
      }
      sum.add(gs);
      sumsq.add(gs * gs);
    }
    partial[blk] = BlockMoments{sum.value(), sumsq.value()};
  });
  KahanSum total, totalsq;
  for (const auto& bm : partial) {
    total.add(bm.sum);
    totalsq.add(bm.sumsq);
  }
  const double nn = static_cast<double>(draws);
  const double mean = total.value() / nn;
  const double var =
      std::max(0.0, (totalsq.value() - nn * mean * mean) / (nn - 1.0));
  return McValue{mean, std::sqrt(var / nn), draws};
}

double p2_risk_at_zero(const CanonicalForm& design, RuleKind kind) {
  switch (kind) {
    case RuleKind::PluginDL:
      return p2_risk_at_zero_dl(design);
    case RuleKind::Delta0:
      return p2_risk_at_zero_delta0(design);
    case RuleKind::Delta1:
      return p2_risk_at_zero_delta1_mc(design, 10'000'000, 0x52554B48).value;
    default:
      throw UnsupportedInput("p2_risk_at_zero supports dl, delta0, delta1");
  }
}

double okamoto_a(const CanonicalForm& design) {
  require_p2_design(design);
  const GroupedData& g = design.g;
  const double lt = std::log(design.t2[0]);
  const double gm = (3.0 * lt + (g.nu[0] - 1) * std::log(g.s2[0]) +
                     (g.nu[1] - 1) * std::log(g.s2[1])) /
                    (g.n + 1);
  return std::exp(lt - gm);
}

std::pair<double, double> okamoto_bound(const CanonicalForm& design,
                                        double v) {
  const double a = okamoto_a(design);
  return {a, chi2_cdf(design.n() + 1, a * v)};
}

double delta1_zero_lower_bound(double a, int n) {
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double xi = a * (n - 3.0);
  return 1.0 - chi2_cdf(n + 1, xi) -
         2.0 * (n - 3.0) * a * chi2_sf(n - 1, xi) / (n - 1.0) +
         (n - 3.0) * a * a * chi2_sf(n - 3, xi) / (n - 1.0);
}

double a0_threshold(int n) {
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double target = minimax_bound(n);
  auto f = [&](double a) { return delta1_zero_lower_bound(a, n) - target; };
  RootBracket br{1e-3, 1.0, 1e-12};
  return solve_bracketed(f, br);
}

std::vector<double> default_tau2_grid(const CanonicalForm& design) {
  const double s2b = design.g.s2_bar();
  std::vector<double> grid{0.0};
  const double lo = std::log(1e-3 * s2b), hi = std::log(1e3 * s2b);
  for (int k = 0; k < 40; ++k)
    grid.push_back(std::exp(lo + (hi - lo) * k / 39.0));
  return grid;
}

RiskCurve risk_curve(const CanonicalForm& design, const WeightRule& rule,
                     const std::vector<double>& grid, const McOptions& opts) {
  if (grid.empty()) throw InvalidInput("risk_curve: empty grid");
  RiskCurve curve;
  curve.rule = rule.name();
  curve.s2 = design.g.s2;
  curve.nu = design.g.nu;
  curve.seed = opts.seed;
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  const bool fixed_rule = rule.kind == RuleKind::SampleMean ||
                          rule.kind == RuleKind::GraybillDeal ||
                          rule.kind == RuleKind::PluginFixed;
  for (double tau2 : sorted) {
    if (tau2 < 0.0) throw InvalidInput("risk_curve: tau2 >= 0 required");
    if (fixed_rule) {
      CanonicalForm cf = design;
      const std::vector<double> w = rule_weights(cf, rule);
      RiskPoint pt;
      pt.tau2 = tau2;
      pt.r_risk = fixed_rule_risk_closed(design, tau2, w);
      pt.mc_std_error = 0.0;
      pt.n_samples = 0;
      pt.method = RiskMethod::ClosedForm;
      curve.points.push_back(pt);
    } else {
      curve.points.push_back(r_risk_mc(design, tau2, rule, opts));
    }
  }
  return curve;
}

Figure1Curves figure1_curves(int n, const std::vector<double>& grid) {
  if (n <= 3) throw InvalidForSampleSize("n > 3 required");
  const double s2 = 1.0;
  Figure1Curves fig;
  fig.n = n;
  fig.minimax = minimax_bound(n);
  double kink = 0.0;
  const auto w_mh =
      equal_uncertainty_w(RuleKind::ModifiedHedges, n, s2, &kink);
  for (double tau2 : grid) {
    fig.tau2.push_back(tau2);
    fig.dl.push_back(equal_uncertainty_risk(n, s2, tau2, n - 1.0));
    fig.delta1.push_back(equal_uncertainty_risk(n, s2, tau2, n - 3.0));
    fig.mh.push_back(
        equal_uncertainty_risk_general(n, s2, tau2, w_mh, {kink}));
  }
  return fig;
}

}  // namespace remeta
