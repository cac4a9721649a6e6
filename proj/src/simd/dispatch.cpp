#include <cstdlib>
#include <string_view>

#include "sonopipe/simd/kernels.hpp"

namespace sonopipe::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Neon:
      return "neon";
  }
  return "unknown";
}

const KernelTable* kernels_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &detail::scalar_table();
    case Isa::Avx2:
      return detail::avx2_table();
    case Isa::Neon:
      return detail::neon_table();
  }
  return nullptr;
}

namespace {

const KernelTable& select_table() {
  if (const char* forced = std::getenv("SONOPIPE_SIMD")) {
    const std::string_view want{forced};
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (want == isa_name(isa)) {
        if (const KernelTable* t = kernels_for(isa)) return *t;
      }
    }
  }
  if (const KernelTable* t = detail::avx2_table()) return *t;
  if (const KernelTable* t = detail::neon_table()) return *t;
  return detail::scalar_table();
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& active = select_table();
  return active;
}

}  // namespace sonopipe::simd
