#pragma once

#include <complex>
#include <cstddef>
#include <new>
#include <vector>

namespace ccdbp {

/// Allocator returning 64-byte aligned storage so buffers can be handed to
/// FFTW's new-array execute functions and to aligned SIMD loads.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), alignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using cplx = std::complex<double>;
using CVec = std::vector<cplx, AlignedAllocator<cplx>>;
using RVec = std::vector<double, AlignedAllocator<double>>;

}  // namespace ccdbp
