// Copyright 2026 The mosanet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Layer primitives with explicit forward and backward passes.
//
// Sequences are row-major matrices with one row per frame. Convolutional
// feature maps over a (time x frequency) grid with C channels are stored as
// (T*F) x C matrices, row index t*F + f, so that reinterpreting the storage as
// T x (F*C) gives the per-frame flattening for free.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mosanet/error.hpp"
#include "mosanet/stft.hpp"

namespace mosanet::nn {

template <typename S>
using Mat = RowMatrix<S>;

template <typename S>
void check_finite(const Mat<S>& m, const char* layer) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite activation in layer '") + layer + "'");
}

// ---------------------------------------------------------------------------
// Dense

template <typename S>
void dense_forward(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b, Mat<S>* y) {
  y->noalias() = x * w;
  y->rowwise() += b.row(0);
}

// Accumulates into dw/db; writes dx when non-null.
template <typename S>
void dense_backward(const Mat<S>& x, const Mat<S>& w, const Mat<S>& dy, Mat<S>* dw, Mat<S>* db, Mat<S>* dx) {
  dw->noalias() += x.transpose() * dy;
  db->row(0) += dy.colwise().sum();
  if (dx) dx->noalias() = dy * w.transpose();
}

template <typename S>
void relu_inplace(Mat<S>* x) {
  *x = x->cwiseMax(S(0));
}

// dy <- dy * 1[y > 0], using the post-activation values.
template <typename S>
void relu_backward_inplace(const Mat<S>& y, Mat<S>* dy) {
  *dy = (y.array() > S(0)).select(dy->array(), S(0));
}

// ---------------------------------------------------------------------------
// Log compression followed by per-column mean/variance normalization over
// time, applied to one utterance.

template <typename S>
struct NormCache {
  Mat<S> input;       // pre-log values
  Mat<S> normalized;  // output
  Eigen::Matrix<S, 1, Eigen::Dynamic> inv_std;
};

inline constexpr double kNormVarianceFloor = 1e-5;

template <typename S>
Mat<S> log_normalize_forward(const Mat<S>& x, S log_floor, NormCache<S>* cache) {
  Mat<S> z = (x.array() + log_floor).log().matrix();
  const auto rows = static_cast<S>(z.rows());
  Eigen::Matrix<S, 1, Eigen::Dynamic> mean = z.colwise().sum() / rows;
  z.rowwise() -= mean;
  Eigen::Matrix<S, 1, Eigen::Dynamic> var = z.cwiseAbs2().colwise().sum() / rows;
  Eigen::Matrix<S, 1, Eigen::Dynamic> inv_std =
      (var.array() + S(kNormVarianceFloor)).rsqrt().matrix();
  z.array().rowwise() *= inv_std.array();
  if (cache) {
    cache->input = x;
    cache->normalized = z;
    cache->inv_std = inv_std;
  }
  return z;
}

template <typename S>
Mat<S> log_normalize_backward(const NormCache<S>& c, S log_floor, const Mat<S>& dy) {
  const auto rows = static_cast<S>(dy.rows());
  Eigen::Matrix<S, 1, Eigen::Dynamic> mean_dy = dy.colwise().sum() / rows;
  Eigen::Matrix<S, 1, Eigen::Dynamic> mean_dy_y = dy.cwiseProduct(c.normalized).colwise().sum() / rows;
  Mat<S> dz = dy;
  dz.rowwise() -= mean_dy;
  dz -= (c.normalized.array().rowwise() * mean_dy_y.array()).matrix();
  dz.array().rowwise() *= c.inv_std.array();
  return (dz.array() / (c.input.array() + log_floor)).matrix();
}

// ---------------------------------------------------------------------------
// Learnable sinc band-pass filter bank.
//
// Each filter k is an ideal band-pass [f1, f2] (cycles/sample), truncated to
// L taps by a symmetric Hamming window. The in-phase kernel is the difference
// of two low-pass sincs and the quadrature kernel its Hilbert transform:
//   re[n] = (sin(2 pi f2 n) - sin(2 pi f1 n)) / (pi n)
//   im[n] = (cos(2 pi f1 n) - cos(2 pi f2 n)) / (pi n)
// for tap offsets n = j - (L-1)/2. A frame's output is re^2 + im^2, the
// squared envelope of the band, which does not depend on the signal phase.

struct SincBand {
  double low_hz;
  double high_hz;
  double dlow_dlow;    // d low / d low_param
  double dhigh_dlow;   // d high / d low_param
  double dhigh_dband;  // d high / d band_param
};

struct SincLimits {
  double sample_rate = 16000.0;
  double min_low_hz = 10.0;
  double min_band_hz = 20.0;

  // Upper edge cap, strictly below Nyquist.
  double cap_hz() const { return sample_rate / 2.0 - 1.0; }
};

inline double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Maps the learnable parameters to band edges, clamping so that
// 0 < low < low + min_band <= high < Nyquist.
inline SincBand sinc_band(double low_param, double band_param, const SincLimits& lim) {
  SincBand b{};
  const double low = lim.min_low_hz + std::abs(low_param);
  const double low_cap = lim.cap_hz() - lim.min_band_hz;
  if (low > low_cap) {
    b.low_hz = low_cap;
    b.dlow_dlow = 0.0;
  } else {
    b.low_hz = low;
    b.dlow_dlow = sign_of(low_param);
  }
  const double high = b.low_hz + lim.min_band_hz + std::abs(band_param);
  if (high > lim.cap_hz()) {
    b.high_hz = lim.cap_hz();
    b.dhigh_dlow = b.dhigh_dband = 0.0;
  } else {
    b.high_hz = high;
    b.dhigh_dlow = b.dlow_dlow;
    b.dhigh_dband = sign_of(band_param);
  }
  return b;
}

inline std::vector<double> symmetric_hamming(int length) {
  std::vector<double> w(length, 1.0);
  if (length == 1) return w;
  for (int i = 0; i < length; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (length - 1));
  return w;
}

// Unit phasors exp(i 2 pi f n) for the kernel tap offsets n = j - (L-1)/2,
// generated by repeated rotation.
inline void tap_phasors(double f, int kernel_len, std::vector<std::complex<double>>* out) {
  out->resize(kernel_len);
  const double centre = (kernel_len - 1) / 2.0;
  const std::complex<double> step = std::polar(1.0, 2.0 * std::numbers::pi * f);
  std::complex<double> z = std::polar(1.0, -2.0 * std::numbers::pi * f * centre);
  for (int j = 0; j < kernel_len; ++j) {
    (*out)[j] = z;
    z *= step;
    if ((j & 63) == 63) z /= std::abs(z);  // keep on the unit circle
  }
}

// In-phase and quadrature kernels, each kernel_len x K (one filter per column).
template <typename S>
void sinc_kernels(std::span<const S> low_params, std::span<const S> band_params, int kernel_len,
                  const SincLimits& lim, Mat<S>* re, Mat<S>* im) {
  const auto k_count = static_cast<Eigen::Index>(low_params.size());
  re->resize(kernel_len, k_count);
  im->resize(kernel_len, k_count);
  const auto window = symmetric_hamming(kernel_len);
  const double centre = (kernel_len - 1) / 2.0;
  std::vector<std::complex<double>> p1, p2;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const SincBand b = sinc_band(low_params[k], band_params[k], lim);
    const double f1 = b.low_hz / lim.sample_rate;
    const double f2 = b.high_hz / lim.sample_rate;
    tap_phasors(f1, kernel_len, &p1);
    tap_phasors(f2, kernel_len, &p2);
    for (int j = 0; j < kernel_len; ++j) {
      const double n = j - centre;
      double r, q;
      if (n == 0.0) {
        r = 2.0 * (f2 - f1);
        q = 0.0;
      } else {
        r = (p2[j].imag() - p1[j].imag()) / (std::numbers::pi * n);
        q = (p1[j].real() - p2[j].real()) / (std::numbers::pi * n);
      }
      (*re)(j, k) = static_cast<S>(r * window[j]);
      (*im)(j, k) = static_cast<S>(q * window[j]);
    }
  }
}

// Chain rule from kernel gradients to the learnable parameters (accumulating).
template <typename S>
void sinc_kernels_backward(std::span<const S> low_params, std::span<const S> band_params, int kernel_len,
                           const SincLimits& lim, const Mat<S>& d_re, const Mat<S>& d_im, std::span<S> d_low,
                           std::span<S> d_band) {
  const auto window = symmetric_hamming(kernel_len);
  std::vector<std::complex<double>> p1, p2;
  for (std::size_t k = 0; k < low_params.size(); ++k) {
    const SincBand b = sinc_band(low_params[k], band_params[k], lim);
    const double f1 = b.low_hz / lim.sample_rate;
    const double f2 = b.high_hz / lim.sample_rate;
    tap_phasors(f1, kernel_len, &p1);
    tap_phasors(f2, kernel_len, &p2);
    double g_f1 = 0.0, g_f2 = 0.0;
    for (int j = 0; j < kernel_len; ++j) {
      const double gr = static_cast<double>(d_re(j, static_cast<Eigen::Index>(k))) * window[j];
      const double gq = static_cast<double>(d_im(j, static_cast<Eigen::Index>(k))) * window[j];
      g_f1 += -2.0 * p1[j].real() * gr - 2.0 * p1[j].imag() * gq;
      g_f2 += 2.0 * p2[j].real() * gr + 2.0 * p2[j].imag() * gq;
    }
    const double g_low_hz = g_f1 / lim.sample_rate;
    const double g_high_hz = g_f2 / lim.sample_rate;
    d_low[k] += static_cast<S>(g_low_hz * b.dlow_dlow + g_high_hz * b.dhigh_dlow);
    d_band[k] += static_cast<S>(g_high_hz * b.dhigh_dband);
  }
}

// Rows are the kernel_len-sample windows starting at multiples of stride.
template <typename S>
Mat<S> frame_signal(std::span<const float> wave, int kernel_len, int stride) {
  const int frames = num_frames(wave.size(), kernel_len, stride);
  Mat<S> out(frames, kernel_len);
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < kernel_len; ++j) out(t, j) = static_cast<S>(wave[static_cast<std::size_t>(t) * stride + j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3x3 "same" convolution over a (T x F) grid.
//
// The input is copied into a zero-bordered (T+2) x (F+2) grid so each of the
// nine taps becomes a constant row offset; the convolution is then nine
// GEMMs over contiguous row ranges, with no im2col buffer. Weight rows are
// grouped by tap: rows [k*Cin, (k+1)*Cin) hold tap k = (dt+1)*3 + (df+1).

template <typename S>
Mat<S> pad_grid(const Mat<S>& x, int t_len, int f_len) {
  const int fp = f_len + 2;
  Mat<S> out = Mat<S>::Zero(static_cast<Eigen::Index>(t_len + 2) * fp, x.cols());
  for (int t = 0; t < t_len; ++t) {
    out.middleRows(static_cast<Eigen::Index>(t + 1) * fp + 1, f_len) =
        x.middleRows(static_cast<Eigen::Index>(t) * f_len, f_len);
  }
  return out;
}

template <typename S>
Mat<S> unpad_grid(const Mat<S>& xp, int t_len, int f_len) {
  const int fp = f_len + 2;
  Mat<S> out(static_cast<Eigen::Index>(t_len) * f_len, xp.cols());
  for (int t = 0; t < t_len; ++t) {
    out.middleRows(static_cast<Eigen::Index>(t) * f_len, f_len) =
        xp.middleRows(static_cast<Eigen::Index>(t + 1) * fp + 1, f_len);
  }
  return out;
}

struct ConvSpan {
  Eigen::Index first;  // first output row computed in the padded grid
  Eigen::Index count;
  std::array<Eigen::Index, 9> offsets;
};

inline ConvSpan conv_span(int t_len, int f_len) {
  const Eigen::Index fp = f_len + 2;
  ConvSpan s{};
  s.first = fp + 1;
  s.count = static_cast<Eigen::Index>(t_len + 2) * fp - 2 * (fp + 1);
  for (int dt = -1; dt <= 1; ++dt) {
    for (int df = -1; df <= 1; ++df) s.offsets[(dt + 1) * 3 + (df + 1)] = dt * fp + df;
  }
  return s;
}

// weight: (9*Cin) x Cout, bias: 1 x Cout. Output is ReLU-activated.
template <typename S>
Mat<S> conv_relu_forward(const Mat<S>& x, int t_len, int f_len, const Mat<S>& weight, const Mat<S>& bias) {
  const Eigen::Index cin = x.cols();
  const Eigen::Index cout = weight.cols();
  const Mat<S> xp = pad_grid(x, t_len, f_len);
  const ConvSpan sp = conv_span(t_len, f_len);
  Mat<S> yp(xp.rows(), cout);
  auto out = yp.middleRows(sp.first, sp.count);
  out.rowwise() = bias.row(0);
  for (int k = 0; k < 9; ++k) {
    out.noalias() += xp.middleRows(sp.first + sp.offsets[k], sp.count) * weight.middleRows(k * cin, cin);
  }
  Mat<S> y = unpad_grid(yp, t_len, f_len);
  relu_inplace(&y);
  return y;
}

// dy is consumed. Returns dx (empty when need_dx is false).
template <typename S>
Mat<S> conv_relu_backward(const Mat<S>& x, const Mat<S>& y, int t_len, int f_len, const Mat<S>& weight, Mat<S> dy,
                          Mat<S>* dweight, Mat<S>* dbias, bool need_dx) {
  relu_backward_inplace(y, &dy);
  dbias->row(0) += dy.colwise().sum();
  const Eigen::Index cin = x.cols();
  const Mat<S> xp = pad_grid(x, t_len, f_len);
  const Mat<S> dyp = pad_grid(dy, t_len, f_len);
  const ConvSpan sp = conv_span(t_len, f_len);
  const auto dout = dyp.middleRows(sp.first, sp.count);
  for (int k = 0; k < 9; ++k) {
    dweight->middleRows(k * cin, cin).noalias() +=
        xp.middleRows(sp.first + sp.offsets[k], sp.count).transpose() * dout;
  }
  if (!need_dx) return {};
  Mat<S> dxp = Mat<S>::Zero(xp.rows(), cin);
  for (int k = 0; k < 9; ++k) {
    dxp.middleRows(sp.first + sp.offsets[k], sp.count).noalias() +=
        dout * weight.middleRows(k * cin, cin).transpose();
  }
  return unpad_grid(dxp, t_len, f_len);
}

// ---------------------------------------------------------------------------
// Max pooling by 2 along frequency (ceil mode: an odd last bin pools alone).

inline int pooled_len(int f_len) { return (f_len + 1) / 2; }

template <typename S>
Mat<S> freq_maxpool_forward(const Mat<S>& x, int t_len, int f_len, std::vector<Eigen::Index>* argmax) {
  const int fo = pooled_len(f_len);
  const auto c = x.cols();
  Mat<S> y(static_cast<Eigen::Index>(t_len) * fo, c);
  argmax->assign(static_cast<std::size_t>(y.size()), 0);
  for (int t = 0; t < t_len; ++t) {
    for (int f = 0; f < fo; ++f) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * f_len + 2 * f;
      const bool pair = 2 * f + 1 < f_len;
      const Eigen::Index ro = static_cast<Eigen::Index>(t) * fo + f;
      for (Eigen::Index ch = 0; ch < c; ++ch) {
        Eigen::Index src = r0;
        if (pair && x(r0 + 1, ch) > x(r0, ch)) src = r0 + 1;
        y(ro, ch) = x(src, ch);
        (*argmax)[static_cast<std::size_t>(ro * c + ch)] = src;
      }
    }
  }
  return y;
}

template <typename S>
Mat<S> freq_maxpool_backward(const Mat<S>& dy, Eigen::Index in_rows, const std::vector<Eigen::Index>& argmax) {
  const auto c = dy.cols();
  Mat<S> dx = Mat<S>::Zero(in_rows, c);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      dx(argmax[static_cast<std::size_t>(r * c + ch)], ch) += dy(r, ch);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LSTM, gate order (input, forget, cell, output).

template <typename S>
struct LstmCache {
  Mat<S> x;      // T x Din
  Mat<S> gates;  // T x 4H, activated
  Mat<S> c;      // T x H
  Mat<S> tanh_c;
  Mat<S> h;      // T x H
};

template <typename S>
S sigmoid(S v) {
  return S(1) / (S(1) + std::exp(-v));
}

// Runs over rows of x in order (reverse = true runs last to first; the output
// rows stay aligned with the input rows).
template <typename S>
Mat<S> lstm_forward(const Mat<S>& x, const Mat<S>& wx, const Mat<S>& wh, const Mat<S>& b, bool reverse,
                    LstmCache<S>* cache) {
  const Eigen::Index t_len = x.rows();
  const Eigen::Index h = wh.rows();
  Mat<S> pre;
  dense_forward(x, wx, b, &pre);
  Mat<S> gates(t_len, 4 * h), cs(t_len, h), tcs(t_len, h), hs(t_len, h);
  Eigen::Matrix<S, 1, Eigen::Dynamic> h_prev = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(h);
  Eigen::Matrix<S, 1, Eigen::Dynamic> c_prev = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(h);
  Eigen::Matrix<S, 1, Eigen::Dynamic> z(4 * h);
  for (Eigen::Index step = 0; step < t_len; ++step) {
    const Eigen::Index t = reverse ? t_len - 1 - step : step;
    z.noalias() = pre.row(t) + h_prev * wh;
    for (Eigen::Index i = 0; i < h; ++i) {
      const S ig = sigmoid(z(i));
      const S fg = sigmoid(z(h + i));
      const S cg = std::tanh(z(2 * h + i));
      const S og = sigmoid(z(3 * h + i));
      gates(t, i) = ig;
      gates(t, h + i) = fg;
      gates(t, 2 * h + i) = cg;
      gates(t, 3 * h + i) = og;
      const S cv = fg * c_prev(i) + ig * cg;
      const S tc = std::tanh(cv);
      cs(t, i) = cv;
      tcs(t, i) = tc;
      hs(t, i) = og * tc;
    }
    h_prev = hs.row(t);
    c_prev = cs.row(t);
  }
  if (cache) {
    cache->x = x;
    cache->gates = std::move(gates);
    cache->c = std::move(cs);
    cache->tanh_c = std::move(tcs);
    cache->h = hs;
  }
  return hs;
}

template <typename S>
Mat<S> lstm_backward(const LstmCache<S>& cache, const Mat<S>& wx, const Mat<S>& wh, const Mat<S>& dh_out,
                     bool reverse, Mat<S>* dwx, Mat<S>* dwh, Mat<S>* db) {
  const Eigen::Index t_len = cache.x.rows();
  const Eigen::Index h = wh.rows();
  Mat<S> dz(t_len, 4 * h);
  Mat<S> h_prev_all = Mat<S>::Zero(t_len, h);
  Eigen::Matrix<S, 1, Eigen::Dynamic> dh_next = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(h);
  Eigen::Matrix<S, 1, Eigen::Dynamic> dc_next = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(h);
  for (Eigen::Index step = t_len - 1; step >= 0; --step) {
    const Eigen::Index t = reverse ? t_len - 1 - step : step;
    const Eigen::Index tp = reverse ? t + 1 : t - 1;  // previous time step in processing order
    const bool has_prev = step > 0;
    if (has_prev) h_prev_all.row(t) = cache.h.row(tp);
    for (Eigen::Index i = 0; i < h; ++i) {
      const S ig = cache.gates(t, i);
      const S fg = cache.gates(t, h + i);
      const S cg = cache.gates(t, 2 * h + i);
      const S og = cache.gates(t, 3 * h + i);
      const S tc = cache.tanh_c(t, i);
      const S c_prev = has_prev ? cache.c(tp, i) : S(0);
      const S dh = dh_out(t, i) + dh_next(i);
      const S dc = dh * og * (S(1) - tc * tc) + dc_next(i);
      dz(t, i) = dc * cg * ig * (S(1) - ig);
      dz(t, h + i) = dc * c_prev * fg * (S(1) - fg);
      dz(t, 2 * h + i) = dc * ig * (S(1) - cg * cg);
      dz(t, 3 * h + i) = dh * tc * og * (S(1) - og);
      dc_next(i) = dc * fg;
    }
    dh_next.noalias() = dz.row(t) * wh.transpose();
  }
  dwh->noalias() += h_prev_all.transpose() * dz;
  Mat<S> dx;
  dense_backward(cache.x, wx, dz, dwx, db, &dx);
  return dx;
}

// ---------------------------------------------------------------------------
// Self-attention over the frames of one utterance. Returns the attended
// values (T x Da); the attention matrix rows are softmax-normalized.

template <typename S>
void softmax_rows_inplace(Mat<S>* e) {
  for (Eigen::Index i = 0; i < e->rows(); ++i) {
    auto row = e->row(i);
    const S m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row /= row.sum();
  }
}

// dE = A * (dA - rowsum(dA * A)).
template <typename S>
Mat<S> softmax_rows_backward(const Mat<S>& a, const Mat<S>& da) {
  Eigen::Matrix<S, Eigen::Dynamic, 1> dots = a.cwiseProduct(da).rowwise().sum();
  Mat<S> de = da;
  de.colwise() -= dots;
  return a.cwiseProduct(de);
}

}  // namespace mosanet::nn
