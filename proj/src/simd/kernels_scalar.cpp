#include "kernels_body.hpp"
#include "remeta/simd/kernels.hpp"
#include "vec_scalar.hpp"

namespace remeta::simd {

namespace {

void fill_normals_sc(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t pair0, std::size_t npairs, double* out) {
  body::Kern<VecScalar>::fill_normals(seed, stream, pair0, npairs, out);
}

void eval_loss_sc(const LossParams& p, const double* z, std::size_t nsamp,
                  double* out) {
  body::Kern<VecScalar>::eval_loss(p, z, nsamp, out);
}

}  // namespace

const KernelTable& kernels_scalar() {
  static const KernelTable table{&fill_normals_sc, &eval_loss_sc};
  return table;
}

}  // namespace remeta::simd
