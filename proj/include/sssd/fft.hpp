#pragma once

#include <complex>
#include <span>
#include <vector>

#include "sssd/tensor.hpp"

namespace sssd::fft {

using Complex = std::complex<double>;

constexpr bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

constexpr Index next_power_of_two(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Real-input radix-2 transform of a fixed power-of-two length n.
///
/// Packs the real sequence into a complex sequence of length n/2, transforms
/// it, and untangles the even/odd halves, producing the n/2+1 non-redundant
/// bins. Throws std::length_error for lengths that are not powers of two.
class RealFft {
 public:
  explicit RealFft(Index n);

  Index size() const { return n_; }
  Index bins() const { return n_ / 2 + 1; }

  // in: n reals, out: n/2+1 bins.
  void forward(const double* in, Complex* out) const;
  // in: n/2+1 bins, out: n reals. Includes the 1/n normalization.
  void inverse(const Complex* in, double* out) const;

 private:
  void complex_transform(Complex* data, bool inverse) const;

  Index n_;
  Index half_;
  std::vector<Index> bit_reverse_;
  std::vector<Complex> twiddles_;  // e^{-2 pi i k / half}, k < half/2
  std::vector<Complex> untangle_;  // e^{-2 pi i k / n}, k <= half
  mutable std::vector<Complex> scratch_;  // inverse() work area; use one object per thread
};

/// Spectra of many real rows in planar, bin-major layout: bin f of row r is
/// (re[f * rows + r], im[f * rows + r]).
struct PlanarSpectra {
  Index bins = 0;
  Index rows = 0;
  std::vector<double> re;
  std::vector<double> im;

  void resize(Index bins_, Index rows_) {
    bins = bins_;
    rows = rows_;
    re.assign(static_cast<std::size_t>(bins * rows), 0.0);
    im.assign(static_cast<std::size_t>(bins * rows), 0.0);
  }
  // Like resize() but leaves the contents unspecified.
  void reshape(Index bins_, Index rows_) {
    bins = bins_;
    rows = rows_;
    re.resize(static_cast<std::size_t>(bins * rows));
    im.resize(static_cast<std::size_t>(bins * rows));
  }
};

/// Transforms of many rows at once; the butterflies run across rows so they
/// vectorize. Same conventions as RealFft.
class BatchedRealFft {
 public:
  explicit BatchedRealFft(Index n);

  Index size() const { return n_; }
  Index bins() const { return n_ / 2 + 1; }

  // Row r is in[r * stride .. r * stride + length), zero-padded to n. With
  // `reversed`, each row is read back to front before padding.
  void forward(const double* in, Index rows, Index stride, Index length, PlanarSpectra& out,
               bool reversed = false) const;
  // Writes the first `length` samples of each row to out[r * stride ..],
  // back to front when `reversed`.
  void inverse(const PlanarSpectra& in, double* out, Index stride, Index length, bool reversed = false) const;

 private:
  // Rows per pass through the stages; the work area is (n/2, kLanes).
  static constexpr Index kLanes = 16;

  void forward_stages(double* re, double* im, Index filled) const;
  void inverse_stages(double* re, double* im, Index needed) const;

  Index n_;
  Index half_;
  std::vector<std::size_t> bit_reverse_;
  std::vector<double> tw_re_, tw_im_;      // e^{-2 pi i k / half}, k < half/2
  std::vector<double> un_re_, un_im_;      // e^{-2 pi i k / n}, k <= half
  mutable std::vector<double> work_re_, work_im_;
};

// Shared per-thread plan caches.
const RealFft& plan(Index n);
const BatchedRealFft& batched_plan(Index n);

std::vector<Complex> rfft(std::span<const double> x);
std::vector<double> irfft(std::span<const Complex> spectrum, Index n);

}  // namespace sssd::fft
