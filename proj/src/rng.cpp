#include "remeta/rng.hpp"

#include "remeta/errors.hpp"
#include "remeta/simd/kernels.hpp"

namespace remeta {

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_(stream_id) {
  buf_.resize(2 * kBlockPairs);
  cursor_ = buf_.size();
}

void RngStream::refill() {
  simd::kernels().fill_normals(seed_, stream_, next_pair_, kBlockPairs,
                               buf_.data());
  next_pair_ += kBlockPairs;
  cursor_ = 0;
}

double RngStream::normal() {
  if (cursor_ >= buf_.size()) refill();
  return buf_[cursor_++];
}

double RngStream::chi2(int df) {
  if (df < 0) throw InvalidInput("chi2 draw: df >= 0 required");
  double acc = 0.0;
  for (int i = 0; i < df; ++i) {
    double z = normal();
    acc += z * z;
  }
  return acc;
}

}  // namespace remeta
