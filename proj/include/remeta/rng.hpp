#pragma once

#include <cstdint>
#include <vector>

namespace remeta {

// Deterministic stream of standard normals (and chi-square draws built
// from them) keyed by (seed, stream_id).  Streams with different ids
// never overlap; the sequence depends only on the key, never on how
// draws are batched.  Generator: Philox4x32-10 counters feeding
// Box-Muller pairs (see simd/kernels.hpp), which pins the byte-exact
// reproducibility of every Monte Carlo output.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  double normal();
  // Sum of df squared normals; exact chi-square law for any df >= 0.
  double chi2(int df);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  void refill();

  static constexpr std::size_t kBlockPairs = 512;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t next_pair_ = 0;
  std::vector<double> buf_;
  std::size_t cursor_ = 0;
};

// Well-known stream ids used by the library itself.
namespace streams {
inline constexpr std::uint64_t kSimulate = 0x53494D00;
inline constexpr std::uint64_t kRiskLoss = 0;
inline constexpr std::uint64_t kTheorem1 = 0x54483100;
inline constexpr std::uint64_t kDecomp = 0x44435000;
inline constexpr std::uint64_t kP2Delta1 = 0x50324400;
}  // namespace streams

}  // namespace remeta
