#include "sssd/fft.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sssd::fft {

RealFft::RealFft(Index n) : n_(n), half_(n / 2) {
  if (!is_power_of_two(n)) {
    throw std::length_error("rfft length must be a power of two, got " + std::to_string(n));
  }
  if (half_ >= 1) {
    int bits = 0;
    while ((Index{1} << bits) < half_) ++bits;
    bit_reverse_.resize(static_cast<std::size_t>(half_));
    for (Index i = 0; i < half_; ++i) {
      Index r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      bit_reverse_[static_cast<std::size_t>(i)] = static_cast<std::size_t>(r);
    }
    twiddles_.resize(static_cast<std::size_t>(std::max<Index>(half_ / 2, 1)));
    for (Index k = 0; k < static_cast<Index>(twiddles_.size()); ++k) {
      twiddles_[static_cast<std::size_t>(k)] = std::polar(1.0, -2.0 * std::numbers::pi * double(k) / double(half_));
    }
  }
  untangle_.resize(static_cast<std::size_t>(half_ + 1));
  for (Index k = 0; k <= half_; ++k) {
    untangle_[static_cast<std::size_t>(k)] = std::polar(1.0, -2.0 * std::numbers::pi * double(k) / double(n_));
  }
}

void RealFft::complex_transform(Complex* data, bool inverse) const {
  const Index m = half_;
  for (Index i = 0; i < m; ++i) {
    const Index j = bit_reverse_[static_cast<std::size_t>(i)];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (Index len = 2; len <= m; len <<= 1) {
    const Index stride = m / len;
    const Index span = len / 2;
    for (Index start = 0; start < m; start += len) {
      for (Index k = 0; k < span; ++k) {
        Complex w = twiddles_[static_cast<std::size_t>(k * stride)];
        if (inverse) w = std::conj(w);
        const Complex a = data[start + k];
        const Complex b = data[start + k + span] * w;
        data[start + k] = a + b;
        data[start + k + span] = a - b;
      }
    }
  }
}

void RealFft::forward(const double* in, Complex* out) const {
  if (n_ == 1) {
    out[0] = in[0];
    return;
  }
  const Index m = half_;
  for (Index j = 0; j < m; ++j) out[j] = Complex(in[2 * j], in[2 * j + 1]);
  complex_transform(out, false);
  const Complex z0 = out[0];
  out[m] = Complex(z0.real() - z0.imag(), 0.0);
  out[0] = Complex(z0.real() + z0.imag(), 0.0);
  for (Index k = 1; k <= m / 2; ++k) {
    const Index j = m - k;
    const Complex zk = out[k];
    const Complex zj = out[j];
    const Complex even_k = 0.5 * (zk + std::conj(zj));
    const Complex odd_k = Complex(0.0, -0.5) * (zk - std::conj(zj));
    const Complex even_j = 0.5 * (zj + std::conj(zk));
    const Complex odd_j = Complex(0.0, -0.5) * (zj - std::conj(zk));
    out[k] = even_k + untangle_[static_cast<std::size_t>(k)] * odd_k;
    out[j] = even_j + untangle_[static_cast<std::size_t>(j)] * odd_j;
  }
}

void RealFft::inverse(const Complex* in, double* out) const {
  if (n_ == 1) {
    out[0] = in[0].real();
    return;
  }
  const Index m = half_;
  std::vector<Complex>& z = scratch_;
  z.resize(static_cast<std::size_t>(m));
  for (Index k = 0; k < m; ++k) {
    const Complex xk = in[k];
    const Complex xj = std::conj(in[m - k]);
    const Complex even = 0.5 * (xk + xj);
    const Complex odd = 0.5 * (xk - xj) * std::conj(untangle_[static_cast<std::size_t>(k)]);
    z[static_cast<std::size_t>(k)] = even + Complex(0.0, 1.0) * odd;
  }
  complex_transform(z.data(), true);
  const double scale = 1.0 / double(m);
  for (Index j = 0; j < m; ++j) {
    out[2 * j] = z[static_cast<std::size_t>(j)].real() * scale;
    out[2 * j + 1] = z[static_cast<std::size_t>(j)].imag() * scale;
  }
}

const RealFft& plan(Index n) {
  thread_local std::map<Index, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::vector<Complex> rfft(std::span<const double> x) {
  const auto& p = plan(static_cast<Index>(x.size()));
  std::vector<Complex> out(static_cast<std::size_t>(p.bins()));
  p.forward(x.data(), out.data());
  return out;
}

std::vector<double> irfft(std::span<const Complex> spectrum, Index n) {
  const auto& p = plan(n);
  if (static_cast<Index>(spectrum.size()) != p.bins()) {
    throw DimensionError("irfft expects " + std::to_string(p.bins()) + " bins, got " +
                         std::to_string(spectrum.size()));
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  p.inverse(spectrum.data(), out.data());
  return out;
}

}  // namespace sssd::fft

namespace sssd::fft {

BatchedRealFft::BatchedRealFft(Index n) : n_(n), half_(n / 2) {
  if (!is_power_of_two(n) || n < 2) {
    throw std::length_error("batched rfft length must be a power of two >= 2, got " + std::to_string(n));
  }
  int bits = 0;
  while ((Index{1} << bits) < half_) ++bits;
  bit_reverse_.resize(static_cast<std::size_t>(half_));
  for (Index i = 0; i < half_; ++i) {
    Index r = 0;
    for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
    bit_reverse_[static_cast<std::size_t>(i)] = static_cast<std::size_t>(r);
  }
  const Index tw = std::max<Index>(half_ / 2, 1);
  tw_re_.resize(static_cast<std::size_t>(tw));
  tw_im_.resize(static_cast<std::size_t>(tw));
  for (Index k = 0; k < tw; ++k) {
    const double angle = -2.0 * std::numbers::pi * double(k) / double(half_);
    tw_re_[static_cast<std::size_t>(k)] = std::cos(angle);
    tw_im_[static_cast<std::size_t>(k)] = std::sin(angle);
  }
  un_re_.resize(static_cast<std::size_t>(half_ + 1));
  un_im_.resize(static_cast<std::size_t>(half_ + 1));
  for (Index k = 0; k <= half_; ++k) {
    const double angle = -2.0 * std::numbers::pi * double(k) / double(n_);
    un_re_[static_cast<std::size_t>(k)] = std::cos(angle);
    un_im_[static_cast<std::size_t>(k)] = std::sin(angle);
  }
}

// Decimation in frequency: natural-order input, bit-reversed output. Entries
// at index >= filled are zero on entry.
void BatchedRealFft::forward_stages(double* re, double* im, Index filled) const {
  constexpr Index rows = kLanes;
  const Index m = half_;
  Index len = m;
  if (len >= 2 && filled <= m / 2) {
    const Index span = m / 2;
    for (Index k = 0; k < span; ++k) {
      const double wr = tw_re_[static_cast<std::size_t>(k)], wi = tw_im_[static_cast<std::size_t>(k)];
      const double* __restrict ar = re + k * rows;
      const double* __restrict ai = im + k * rows;
      double* __restrict br = re + (k + span) * rows;
      double* __restrict bi = im + (k + span) * rows;
      for (Index r = 0; r < rows; ++r) {
        br[r] = ar[r] * wr - ai[r] * wi;
        bi[r] = ar[r] * wi + ai[r] * wr;
      }
    }
    len >>= 1;
  }
  for (; len >= 2; len >>= 1) {
    const Index stride = m / len, span = len / 2;
    for (Index start = 0; start < m; start += len) {
      for (Index k = 0; k < span; ++k) {
        const double wr = tw_re_[static_cast<std::size_t>(k * stride)];
        const double wi = tw_im_[static_cast<std::size_t>(k * stride)];
        double* __restrict ar = re + (start + k) * rows;
        double* __restrict ai = im + (start + k) * rows;
        double* __restrict br = re + (start + k + span) * rows;
        double* __restrict bi = im + (start + k + span) * rows;
        for (Index r = 0; r < rows; ++r) {
          const double dr = ar[r] - br[r], di = ai[r] - bi[r];
          ar[r] += br[r];
          ai[r] += bi[r];
          br[r] = dr * wr - di * wi;
          bi[r] = dr * wi + di * wr;
        }
      }
    }
  }
}

// Decimation in time with conjugate twiddles: bit-reversed input, natural
// output. Only entries below `needed` are guaranteed on exit.
void BatchedRealFft::inverse_stages(double* re, double* im, Index needed) const {
  constexpr Index rows = kLanes;
  const Index m = half_;
  for (Index len = 2; len <= m; len <<= 1) {
    const Index stride = m / len, span = len / 2;
    const bool top_only = len == m && needed <= span;
    for (Index start = 0; start < m; start += len) {
      for (Index k = 0; k < span; ++k) {
        const double wr = tw_re_[static_cast<std::size_t>(k * stride)];
        const double wi = -tw_im_[static_cast<std::size_t>(k * stride)];
        double* __restrict ar = re + (start + k) * rows;
        double* __restrict ai = im + (start + k) * rows;
        double* __restrict br = re + (start + k + span) * rows;
        double* __restrict bi = im + (start + k + span) * rows;
        if (top_only) {
          for (Index r = 0; r < rows; ++r) {
            ar[r] += br[r] * wr - bi[r] * wi;
            ai[r] += br[r] * wi + bi[r] * wr;
          }
          continue;
        }
        for (Index r = 0; r < rows; ++r) {
          const double tr = br[r] * wr - bi[r] * wi;
          const double ti = br[r] * wi + bi[r] * wr;
          br[r] = ar[r] - tr;
          bi[r] = ai[r] - ti;
          ar[r] += tr;
          ai[r] += ti;
        }
      }
    }
  }
}

void BatchedRealFft::forward(const double* in, Index rows, Index stride, Index length, PlanarSpectra& out,
                             bool reversed) const {
  if (length > n_) throw DimensionError("batched rfft: row length exceeds transform size");
  const Index m = half_;
  out.bins = m + 1;
  out.rows = rows;
  out.re.resize(static_cast<std::size_t>((m + 1) * rows));
  out.im.resize(static_cast<std::size_t>((m + 1) * rows));
  work_re_.resize(static_cast<std::size_t>(m * kLanes));
  work_im_.resize(static_cast<std::size_t>(m * kLanes));
  const Index filled = (length + 1) / 2;
  const Index zero_end = m >= 2 && filled <= m / 2 ? m / 2 : m;
  const std::size_t* rev = bit_reverse_.data();
  for (Index r0 = 0; r0 < rows; r0 += kLanes) {
    const Index w = std::min(kLanes, rows - r0);
    constexpr Index lanes = kLanes;
    double* zr = work_re_.data();
    double* zi = work_im_.data();
    // Pack x[2j] + i x[2j+1], zero-padded, then transform in place. Lanes
    // past the last row are zero.
    if (w < lanes) {
      std::fill_n(zr, m * lanes, 0.0);
      std::fill_n(zi, m * lanes, 0.0);
    } else {
      std::fill(zr + filled * lanes, zr + zero_end * lanes, 0.0);
      std::fill(zi + filled * lanes, zi + zero_end * lanes, 0.0);
      if (length % 2) std::fill_n(zi + (filled - 1) * lanes, lanes, 0.0);
    }
    for (Index r = 0; r < w; ++r) {
      const double* x = in + (r0 + r) * stride;
      if (reversed) {
        const double* xe = x + length - 1;
        for (Index t = 0; t + 1 < length; t += 2) {
          zr[(t / 2) * lanes + r] = xe[-t];
          zi[(t / 2) * lanes + r] = xe[-t - 1];
        }
        if (length % 2) zr[(length / 2) * lanes + r] = x[0];
        continue;
      }
      for (Index t = 0; t + 1 < length; t += 2) {
        zr[(t / 2) * lanes + r] = x[t];
        zi[(t / 2) * lanes + r] = x[t + 1];
      }
      if (length % 2) zr[(length / 2) * lanes + r] = x[length - 1];
    }
    forward_stages(zr, zi, filled);
    // Untangle the even/odd halves into bins k and m - k; z_k sits at rev[k].
    double* o_re = out.re.data() + r0;
    double* o_im = out.im.data() + r0;
    for (Index r = 0; r < w; ++r) {
      const double a = zr[r], b = zi[r];
      o_re[r] = a + b;
      o_im[r] = 0.0;
      o_re[m * rows + r] = a - b;
      o_im[m * rows + r] = 0.0;
    }
    for (Index k = 1; k <= m / 2; ++k) {
      const Index j = m - k;
      const double* kr = zr + rev[k] * lanes;
      const double* ki = zi + rev[k] * lanes;
      const double* jr = zr + rev[j] * lanes;
      const double* ji = zi + rev[j] * lanes;
      double* __restrict okr = o_re + k * rows;
      double* __restrict oki = o_im + k * rows;
      const double ukr = un_re_[static_cast<std::size_t>(k)], uki = un_im_[static_cast<std::size_t>(k)];
      const double ujr = un_re_[static_cast<std::size_t>(j)], uji = un_im_[static_cast<std::size_t>(j)];
      if (k == j) {
        for (Index r = 0; r < w; ++r) {
          const double ekr = 0.5 * (kr[r] + jr[r]), eki = 0.5 * (ki[r] - ji[r]);
          const double odr = 0.5 * (ki[r] + ji[r]), odi = -0.5 * (kr[r] - jr[r]);
          okr[r] = ekr + ukr * odr - uki * odi;
          oki[r] = eki + ukr * odi + uki * odr;
        }
        continue;
      }
      double* __restrict ojr = o_re + j * rows;
      double* __restrict oji = o_im + j * rows;
      for (Index r = 0; r < w; ++r) {
        // even_k = (z_k + conj z_j)/2, odd_k = -i (z_k - conj z_j)/2; bin j uses their conjugates.
        const double ekr = 0.5 * (kr[r] + jr[r]), eki = 0.5 * (ki[r] - ji[r]);
        const double odr = 0.5 * (ki[r] + ji[r]), odi = -0.5 * (kr[r] - jr[r]);
        okr[r] = ekr + ukr * odr - uki * odi;
        oki[r] = eki + ukr * odi + uki * odr;
        ojr[r] = ekr + ujr * odr + uji * odi;
        oji[r] = -eki - ujr * odi + uji * odr;
      }
    }
  }
}

void BatchedRealFft::inverse(const PlanarSpectra& in, double* out, Index stride, Index length, bool reversed) const {
  const Index m = half_, rows = in.rows;
  if (in.bins != m + 1) throw DimensionError("batched irfft: bin count does not match the transform size");
  if (length > n_) throw DimensionError("batched irfft: row length exceeds transform size");
  work_re_.resize(static_cast<std::size_t>(m * kLanes));
  work_im_.resize(static_cast<std::size_t>(m * kLanes));
  const double scale = 1.0 / double(m);
  const std::size_t* rev = bit_reverse_.data();
  for (Index r0 = 0; r0 < rows; r0 += kLanes) {
    const Index w = std::min(kLanes, rows - r0);
    constexpr Index lanes = kLanes;
    double* zr = work_re_.data();
    double* zi = work_im_.data();
    if (w < lanes) {
      std::fill_n(zr, m * lanes, 0.0);
      std::fill_n(zi, m * lanes, 0.0);
    }
    for (Index k = 0; k < m; ++k) {
      const double* __restrict xr = in.re.data() + k * rows + r0;
      const double* __restrict xi = in.im.data() + k * rows + r0;
      const double* __restrict yr = in.re.data() + (m - k) * rows + r0;
      const double* __restrict yi = in.im.data() + (m - k) * rows + r0;
      double* __restrict outr = zr + rev[k] * lanes;
      double* __restrict outi = zi + rev[k] * lanes;
      const double ur = un_re_[static_cast<std::size_t>(k)], ui = -un_im_[static_cast<std::size_t>(k)];
      for (Index r = 0; r < w; ++r) {
        // even = (X_k + conj X_{m-k})/2, odd = (X_k - conj X_{m-k})/2 * conj(u_k), z = even + i odd.
        const double er = 0.5 * (xr[r] + yr[r]), ei = 0.5 * (xi[r] - yi[r]);
        const double dr = 0.5 * (xr[r] - yr[r]), di = 0.5 * (xi[r] + yi[r]);
        const double odr = dr * ur - di * ui, odi = dr * ui + di * ur;
        outr[r] = er - odi;
        outi[r] = ei + odr;
      }
    }
    inverse_stages(zr, zi, (length + 1) / 2);
    for (Index r = 0; r < w; ++r) {
      double* y = out + (r0 + r) * stride;
      if (reversed) {
        double* ye = y + length - 1;
        for (Index t = 0; t + 1 < length; t += 2) {
          ye[-t] = zr[(t / 2) * lanes + r] * scale;
          ye[-t - 1] = zi[(t / 2) * lanes + r] * scale;
        }
        if (length % 2) y[0] = zr[(length / 2) * lanes + r] * scale;
        continue;
      }
      for (Index t = 0; t + 1 < length; t += 2) {
        y[t] = zr[(t / 2) * lanes + r] * scale;
        y[t + 1] = zi[(t / 2) * lanes + r] * scale;
      }
      if (length % 2) y[length - 1] = zr[(length / 2) * lanes + r] * scale;
    }
  }
}

const BatchedRealFft& batched_plan(Index n) {
  thread_local std::map<Index, std::unique_ptr<BatchedRealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<BatchedRealFft>(n);
  return *slot;
}

}  // namespace sssd::fft
