#include "ccdbp/fft.hpp"

#include <fftw3.h>

#include <cstdint>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace ccdbp::fft {
namespace {

enum class Kind { c2c_fwd, c2c_inv, r2c, c2r };

using Key = std::tuple<Kind, std::size_t, bool /*in_place*/, bool /*aligned*/>;

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(const Key& key) {
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    fftw_plan plan = make(key);
    if (plan == nullptr) throw std::runtime_error("fftw: plan creation failed");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  static fftw_plan make(const Key& key) {
    const auto [kind, n, in_place, aligned] = key;
    const int ni = static_cast<int>(n);
    unsigned flags = FFTW_ESTIMATE;
    if (!aligned) flags |= FFTW_UNALIGNED;
    // Complex buffers are large enough for every kind of transform of size n.
    auto* a = fftw_alloc_complex(n + 2);
    auto* b = in_place ? a : fftw_alloc_complex(n + 2);
    fftw_plan plan = nullptr;
    switch (kind) {
      case Kind::c2c_fwd:
        plan = fftw_plan_dft_1d(ni, a, b, FFTW_FORWARD, flags);
        break;
      case Kind::c2c_inv:
        plan = fftw_plan_dft_1d(ni, a, b, FFTW_BACKWARD, flags);
        break;
      case Kind::r2c:
        plan = fftw_plan_dft_r2c_1d(ni, reinterpret_cast<double*>(a), b, flags);
        break;
      case Kind::c2r:
        plan = fftw_plan_dft_c2r_1d(ni, a, reinterpret_cast<double*>(b), flags);
        break;
    }
    if (b != a) fftw_free(b);
    fftw_free(a);
    return plan;
  }

  std::mutex mutex_;
  std::map<Key, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

bool is_aligned(const void* p) {
  return reinterpret_cast<std::uintptr_t>(p) % 64 == 0;
}

auto* as_fftw(const cplx* p) {
  return reinterpret_cast<fftw_complex*>(const_cast<cplx*>(p));
}

}  // namespace

void forward(std::span<const cplx> in, std::span<cplx> out) {
  if (in.size() != out.size()) throw std::invalid_argument("fft: size mismatch");
  if (in.empty()) return;
  const bool in_place = in.data() == out.data();
  const bool aligned = is_aligned(in.data()) && is_aligned(out.data());
  fftw_plan plan = cache().get({Kind::c2c_fwd, in.size(), in_place, aligned});
  fftw_execute_dft(plan, as_fftw(in.data()), as_fftw(out.data()));
}

void inverse(std::span<const cplx> in, std::span<cplx> out) {
  if (in.size() != out.size()) throw std::invalid_argument("fft: size mismatch");
  if (in.empty()) return;
  const bool in_place = in.data() == out.data();
  const bool aligned = is_aligned(in.data()) && is_aligned(out.data());
  fftw_plan plan = cache().get({Kind::c2c_inv, in.size(), in_place, aligned});
  fftw_execute_dft(plan, as_fftw(in.data()), as_fftw(out.data()));
}

void forward_real(std::span<const double> in, std::span<cplx> out) {
  if (out.size() != in.size() / 2 + 1) throw std::invalid_argument("fft: r2c size mismatch");
  if (in.empty()) return;
  const bool aligned = is_aligned(in.data()) && is_aligned(out.data());
  fftw_plan plan = cache().get({Kind::r2c, in.size(), false, aligned});
  fftw_execute_dft_r2c(plan, const_cast<double*>(in.data()), as_fftw(out.data()));
}

void inverse_real(std::span<const cplx> in, std::span<double> out) {
  if (in.size() != out.size() / 2 + 1) throw std::invalid_argument("fft: c2r size mismatch");
  if (out.empty()) return;
  // c2r overwrites its input.
  thread_local CVec scratch;
  scratch.assign(in.begin(), in.end());
  const bool aligned = is_aligned(out.data());
  fftw_plan plan = cache().get({Kind::c2r, out.size(), false, aligned});
  fftw_execute_dft_c2r(plan, as_fftw(scratch.data()), out.data());
}

}  // namespace ccdbp::fft
