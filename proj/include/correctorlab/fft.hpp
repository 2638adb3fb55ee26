#pragma once

#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace clab {

// Thin FFTW wrapper. Plans are cached per thread and executed on their own
// aligned buffers, so transforms are bitwise reproducible regardless of the
// alignment of caller arrays and safe to run from several workers at once.
// FFTW's planner itself is not thread-safe and is serialized here.

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class FftPlan {
 public:
  FftPlan(int rank, int n) : size_(1) {
    for (int i = 0; i < rank; ++i) size_ *= static_cast<std::size_t>(n);
    buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * size_));
    std::vector<int> dims(static_cast<std::size_t>(rank), n);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft(rank, dims.data(), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft(rank, dims.data(), buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  ~FftPlan() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void execute(std::complex<double>* data, bool forward) {
    // std::complex<double> is layout-compatible with fftw_complex (double[2]).
    std::memcpy(buf_, reinterpret_cast<const double*>(data), sizeof(fftw_complex) * size_);
    fftw_execute(forward ? fwd_ : bwd_);
    std::memcpy(reinterpret_cast<double*>(data), buf_, sizeof(fftw_complex) * size_);
  }

  std::size_t size() const { return size_; }

 private:
  std::size_t size_;
  fftw_complex* buf_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

inline FftPlan& plan_for(int rank, int n) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<FftPlan>> cache;
  auto& slot = cache[{rank, n}];
  if (!slot) slot = std::make_unique<FftPlan>(rank, n);
  return *slot;
}

}  // namespace detail

/// In-place unnormalized forward DFT on a rank-dimensional n^rank array (row-major).
inline void fft_forward(int rank, int n, std::complex<double>* data) {
  detail::plan_for(rank, n).execute(data, true);
}

/// In-place inverse DFT, normalized by 1/n^rank (round trip is the identity).
inline void fft_inverse(int rank, int n, std::complex<double>* data) {
  auto& plan = detail::plan_for(rank, n);
  plan.execute(data, false);
  const double scale = 1.0 / static_cast<double>(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) data[i] *= scale;
}

}  // namespace clab
