#ifndef UQBENCH_FFT_HPP
#define UQBENCH_FFT_HPP

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>
#include <utility>

namespace uqbench {

using complex = std::complex<double>;

namespace detail {
// The FFTW planner is not reentrant; execution on distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Complex-to-complex FFT of a fixed length with owned, aligned workspaces.
///
/// forward():  X[m] = sum_j x[j] exp(-2 pi i j m / n)
/// inverse():  x[j] = (1/n) sum_m X[m] exp(+2 pi i j m / n)
///
/// One instance per task; instances are movable but not shareable across
/// threads while executing.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("Fft: length must be positive");
    in_ = fftw_alloc_complex(n);
    out_ = fftw_alloc_complex(n);
    if (in_ == nullptr || out_ == nullptr) {
      release();
      throw std::bad_alloc();
    }
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;
  Fft(Fft&& o) noexcept { swap(o); }
  Fft& operator=(Fft&& o) noexcept {
    if (this != &o) {
      release();
      swap(o);
    }
    return *this;
  }
  ~Fft() { release(); }

  std::size_t size() const noexcept { return n_; }

  void forward(std::span<const complex> x, std::span<complex> out) { run(fwd_, x, out, 1.0); }

  void inverse(std::span<const complex> x, std::span<complex> out) {
    run(bwd_, x, out, 1.0 / static_cast<double>(n_));
  }

  /// Unnormalized transforms on FFTW-allocated storage of length size(),
  /// without staging copies. `in` and `out` must be distinct AlignedBuffers.
  void forward_raw(const complex* in, complex* out) { execute(fwd_, in, out); }
  void backward_raw(const complex* in, complex* out) { execute(bwd_, in, out); }

 private:
  void run(fftw_plan plan, std::span<const complex> x, std::span<complex> out, double scale) {
    if (x.size() != n_ || out.size() != n_) throw std::invalid_argument("Fft: length mismatch");
    auto* in = reinterpret_cast<complex*>(in_);
    auto* res = reinterpret_cast<const complex*>(out_);
    for (std::size_t i = 0; i < n_; ++i) in[i] = x[i];
    fftw_execute(plan);
    for (std::size_t i = 0; i < n_; ++i) out[i] = res[i] * scale;
  }

  static void execute(fftw_plan plan, const complex* in, complex* out) {
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<complex*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }

  void swap(Fft& o) noexcept {
    std::swap(n_, o.n_);
    std::swap(in_, o.in_);
    std::swap(out_, o.out_);
    std::swap(fwd_, o.fwd_);
    std::swap(bwd_, o.bwd_);
  }

  void release() noexcept {
    {
      std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
      if (fwd_ != nullptr) fftw_destroy_plan(fwd_);
      if (bwd_ != nullptr) fftw_destroy_plan(bwd_);
    }
    if (in_ != nullptr) fftw_free(in_);
    if (out_ != nullptr) fftw_free(out_);
    fwd_ = bwd_ = nullptr;
    in_ = out_ = nullptr;
  }

  std::size_t n_ = 0;
  fftw_complex* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

/// Complex array allocated with FFTW's SIMD alignment, for use with
/// Fft::forward_raw / backward_raw.
class AlignedBuffer {
 public:
  AlignedBuffer() = default;
  explicit AlignedBuffer(std::size_t n) : n_(n), data_(reinterpret_cast<complex*>(fftw_alloc_complex(n))) {
    if (data_ == nullptr) throw std::bad_alloc();
    for (std::size_t i = 0; i < n; ++i) data_[i] = complex{};
  }
  AlignedBuffer(const AlignedBuffer&) = delete;
  AlignedBuffer& operator=(const AlignedBuffer&) = delete;
  AlignedBuffer(AlignedBuffer&& o) noexcept : n_(std::exchange(o.n_, 0)), data_(std::exchange(o.data_, nullptr)) {}
  AlignedBuffer& operator=(AlignedBuffer&& o) noexcept {
    if (this != &o) {
      if (data_ != nullptr) fftw_free(data_);
      n_ = std::exchange(o.n_, 0);
      data_ = std::exchange(o.data_, nullptr);
    }
    return *this;
  }
  ~AlignedBuffer() {
    if (data_ != nullptr) fftw_free(data_);
  }

  std::size_t size() const noexcept { return n_; }
  complex* data() noexcept { return data_; }
  const complex* data() const noexcept { return data_; }
  complex& operator[](std::size_t i) noexcept { return data_[i]; }
  const complex& operator[](std::size_t i) const noexcept { return data_[i]; }
  std::span<complex> span() noexcept { return {data_, n_}; }
  std::span<const complex> span() const noexcept { return {data_, n_}; }

 private:
  std::size_t n_ = 0;
  complex* data_ = nullptr;
};

/// Signed integer wavenumber of FFT bin `i` for a length-`n` transform,
/// in [-n/2, n/2).
inline long signed_mode(std::size_t i, std::size_t n) {
  const auto si = static_cast<long>(i);
  const auto sn = static_cast<long>(n);
  return si < sn / 2 ? si : si - sn;
}

}  // namespace uqbench

#endif  // UQBENCH_FFT_HPP
