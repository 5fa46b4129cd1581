#include "remeta/simd/kernels.hpp"

#if defined(__AVX2__)

#include "kernels_body.hpp"
#include "vec_avx2.hpp"

namespace remeta::simd {

namespace {

void fill_normals_avx2(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t pair0, std::size_t npairs, double* out) {
  body::Kern<VecAvx2>::fill_normals(seed, stream, pair0, npairs, out);
}

void eval_loss_avx2(const LossParams& p, const double* z, std::size_t nsamp,
                    double* out) {
  body::Kern<VecAvx2>::eval_loss(p, z, nsamp, out);
}

}  // namespace

const KernelTable* kernels_avx2() {
  static const KernelTable table{&fill_normals_avx2, &eval_loss_avx2};
  return &table;
}

}  // namespace remeta::simd

#else

namespace remeta::simd {

const KernelTable* kernels_avx2() { return nullptr; }

}  // namespace remeta::simd

#endif
