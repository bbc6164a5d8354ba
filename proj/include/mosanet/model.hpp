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

// Cross-domain speech assessment network.
//
//   waveform --STFT--------> PS  (T1 x K) --log+norm--+
//   waveform --sinc bank---> LFB (T2 x K) --log+norm--+-- stacked in time --> CNN --> (T1+T2) x Dc --+
//   waveform --frozen enc--> WS  (T3 x D) --adapter----------------------------------> T3 x Dc -----+
//                                                                                                   |
//                           stacked in time: F = T1+T2+T3 frames x Dc  <---------------------------+
//                           --> BLSTM --> dense(ReLU) --+--> attention --> dense(1) --> frame quality
//                                                       +--> attention --> dense(1) --> frame intelligibility
//
// Utterance scores are the mean of the frame scores. Everything up to and
// including the encoder embedding is fixed input; the sinc band edges and
// all layers after them are trained.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mosanet/error.hpp"
#include "mosanet/features.hpp"
#include "mosanet/nn/layers.hpp"
#include "mosanet/stft.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

enum class Activation { kNone, kRelu, kTanh };
enum class AttentionType { kDot, kAdditive };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}
inline const char* to_string(AttentionType a) { return a == AttentionType::kDot ? "dot" : "additive"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "' (expected none, relu or tanh)");
}
inline AttentionType parse_attention(const std::string& s) {
  if (s == "dot") return AttentionType::kDot;
  if (s == "additive") return AttentionType::kAdditive;
  throw ConfigError("unknown attention type '" + s + "' (expected dot or additive)");
}

struct ModelTopology {
  int sample_rate = kPipelineSampleRate;
  int num_filters = 257;  // must equal the spectrogram width
  int sinc_kernel_len = 512;
  int sinc_stride = 256;
  double sinc_min_low_hz = 10.0;
  double sinc_min_band_hz = 20.0;
  std::vector<int> cnn_channels = {16, 32, 64, 128};
  int convs_per_block = 3;
  int encoder_dim = 64;
  Activation adapter_activation = Activation::kRelu;
  int lstm_hidden = 128;
  int dense_units = 128;
  AttentionType attention = AttentionType::kDot;
  int attention_dim = 128;
  double log_floor = 1e-6;

  // Filter bank frames line up with the spectrogram frames.
  static ModelTopology for_features(const StftConfig& stft, int encoder_dim) {
    ModelTopology t;
    t.num_filters = stft.num_bins();
    t.sinc_kernel_len = stft.window_samples(kPipelineSampleRate);
    t.sinc_stride = stft.hop_samples(kPipelineSampleRate);
    t.encoder_dim = encoder_dim;
    return t;
  }

  int num_conv_layers() const { return static_cast<int>(cnn_channels.size()) * convs_per_block; }

  int pooled_bins() const {
    int f = num_filters;
    for (std::size_t b = 0; b < cnn_channels.size(); ++b) f = nn::pooled_len(f);
    return f;
  }

  // Per-frame width after the CNN; the adapter projects to the same width.
  int cnn_output_dim() const { return cnn_channels.back() * pooled_bins(); }

  nn::SincLimits sinc_limits() const {
    return {static_cast<double>(sample_rate), sinc_min_low_hz, sinc_min_band_hz};
  }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw ConfigError(std::string("model.") + name + " must be positive");
    };
    positive(num_filters, "num_filters");
    positive(sinc_kernel_len, "sinc_kernel_len");
    positive(sinc_stride, "sinc_stride");
    positive(convs_per_block, "convs_per_block");
    positive(encoder_dim, "encoder_dim");
    positive(lstm_hidden, "lstm_hidden");
    positive(dense_units, "dense_units");
    positive(attention_dim, "attention_dim");
    if (cnn_channels.empty()) throw ConfigError("model.cnn_channels must not be empty");
    for (int c : cnn_channels) positive(c, "cnn_channels");
    if (!(sinc_min_low_hz > 0) || !(sinc_min_band_hz > 0) ||
        sinc_min_low_hz + sinc_min_band_hz >= sample_rate / 2.0 - 1.0) {
      throw ConfigError("model.sinc_min_low_hz / sinc_min_band_hz leave no room below Nyquist");
    }
    if (!(log_floor > 0)) throw ConfigError("model.log_floor must be positive");
  }

  nlohmann::json to_json() const {
    return {{"sample_rate", sample_rate},
            {"num_filters", num_filters},
            {"sinc_kernel_len", sinc_kernel_len},
            {"sinc_stride", sinc_stride},
            {"sinc_min_low_hz", sinc_min_low_hz},
            {"sinc_min_band_hz", sinc_min_band_hz},
            {"cnn_channels", cnn_channels},
            {"convs_per_block", convs_per_block},
            {"encoder_dim", encoder_dim},
            {"adapter_activation", to_string(adapter_activation)},
            {"lstm_hidden", lstm_hidden},
            {"dense_units", dense_units},
            {"attention", to_string(attention)},
            {"attention_dim", attention_dim},
            {"log_floor", log_floor}};
  }

  static ModelTopology from_json(const nlohmann::json& j) {
    ModelTopology t;
    t.sample_rate = j.at("sample_rate");
    t.num_filters = j.at("num_filters");
    t.sinc_kernel_len = j.at("sinc_kernel_len");
    t.sinc_stride = j.at("sinc_stride");
    t.sinc_min_low_hz = j.at("sinc_min_low_hz");
    t.sinc_min_band_hz = j.at("sinc_min_band_hz");
    t.cnn_channels = j.at("cnn_channels").get<std::vector<int>>();
    t.convs_per_block = j.at("convs_per_block");
    t.encoder_dim = j.at("encoder_dim");
    t.adapter_activation = parse_activation(j.at("adapter_activation"));
    t.lstm_hidden = j.at("lstm_hidden");
    t.dense_units = j.at("dense_units");
    t.attention = parse_attention(j.at("attention"));
    t.attention_dim = j.at("attention_dim");
    t.log_floor = j.at("log_floor");
    return t;
  }

  std::uint64_t hash() const { return Fnv1a().add(to_json().dump()).digest(); }
};

template <typename S>
using Mat = RowMatrix<S>;

template <typename S>
struct DenseParams {
  Mat<S> weight;  // in x out
  Mat<S> bias;    // 1 x out
};

template <typename S>
struct LstmParams {
  Mat<S> wx;    // in x 4H
  Mat<S> wh;    // H x 4H
  Mat<S> bias;  // 1 x 4H
};

template <typename S>
struct HeadParams {
  Mat<S> query;       // U x A
  Mat<S> key;         // U x A
  Mat<S> value;       // U x A
  Mat<S> score_bias;  // 1 x A, additive attention only
  Mat<S> score;       // A x 1, additive attention only
  DenseParams<S> out;  // A x 1
};

inline constexpr std::array<const char*, 2> kTaskNames = {"quality", "intelligibility"};

// All trainable parameters. The frozen encoder is not part of the model.
template <typename S>
struct ModelWeights {
  ModelTopology topology;
  Mat<S> sinc_low;   // 1 x K, learnable lower edge (Hz, before clamping)
  Mat<S> sinc_band;  // 1 x K, learnable bandwidth (Hz, before clamping)
  std::vector<DenseParams<S>> conv;  // weight (9*Cin) x Cout
  DenseParams<S> adapter;
  LstmParams<S> lstm_fwd;
  LstmParams<S> lstm_bwd;
  DenseParams<S> shared;
  std::array<HeadParams<S>, 2> heads;

  // Calls f(name, matrix) for every parameter in a fixed order.
  template <typename W, typename F>
  static void visit(W& w, F&& f) {
    f("sinc.low_hz", w.sinc_low);
    f("sinc.band_hz", w.sinc_band);
    for (std::size_t l = 0; l < w.conv.size(); ++l) {
      f("cnn." + std::to_string(l) + ".weight", w.conv[l].weight);
      f("cnn." + std::to_string(l) + ".bias", w.conv[l].bias);
    }
    f("adapter.weight", w.adapter.weight);
    f("adapter.bias", w.adapter.bias);
    for (auto [name, p] : {std::pair{"blstm.forward", &w.lstm_fwd}, std::pair{"blstm.backward", &w.lstm_bwd}}) {
      f(std::string(name) + ".wx", p->wx);
      f(std::string(name) + ".wh", p->wh);
      f(std::string(name) + ".bias", p->bias);
    }
    f("shared.weight", w.shared.weight);
    f("shared.bias", w.shared.bias);
    for (std::size_t h = 0; h < 2; ++h) {
      const std::string p = std::string("head.") + kTaskNames[h];
      auto& head = w.heads[h];
      f(p + ".query", head.query);
      f(p + ".key", head.key);
      f(p + ".value", head.value);
      if (w.topology.attention == AttentionType::kAdditive) {
        f(p + ".score_bias", head.score_bias);
        f(p + ".score", head.score);
      }
      f(p + ".out.weight", head.out.weight);
      f(p + ".out.bias", head.out.bias);
    }
  }

  template <typename F>
  void for_each_parameter(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <typename F>
  void for_each_parameter(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&n](const std::string&, const Mat<S>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_parameter([&ok](const std::string&, const Mat<S>& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  ModelWeights zeros_like() const {
    ModelWeights z = *this;
    z.for_each_parameter([](const std::string&, Mat<S>& m) { m.setZero(); });
    return z;
  }

  template <typename T>
  ModelWeights<T> cast() const {
    ModelWeights<T> out;
    out.topology = topology;
    out.conv.resize(conv.size());
    out.sinc_low = sinc_low.template cast<T>();
    out.sinc_band = sinc_band.template cast<T>();
    for (std::size_t l = 0; l < conv.size(); ++l) {
      out.conv[l].weight = conv[l].weight.template cast<T>();
      out.conv[l].bias = conv[l].bias.template cast<T>();
    }
    auto dense = [](const DenseParams<S>& d) {
      return DenseParams<T>{d.weight.template cast<T>(), d.bias.template cast<T>()};
    };
    auto lstm = [](const LstmParams<S>& p) {
      return LstmParams<T>{p.wx.template cast<T>(), p.wh.template cast<T>(), p.bias.template cast<T>()};
    };
    out.adapter = dense(adapter);
    out.lstm_fwd = lstm(lstm_fwd);
    out.lstm_bwd = lstm(lstm_bwd);
    out.shared = dense(shared);
    for (std::size_t h = 0; h < 2; ++h) {
      out.heads[h] = HeadParams<T>{heads[h].query.template cast<T>(),      heads[h].key.template cast<T>(),
                                   heads[h].value.template cast<T>(),      heads[h].score_bias.template cast<T>(),
                                   heads[h].score.template cast<T>(),      dense(heads[h].out)};
    }
    return out;
  }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Lowest initial band edge for the mel-spaced filter bank.
inline constexpr double kSincInitLowHz = 30.0;

// Seeded initialization. Sinc filters start mel-spaced, convolutions use
// He-uniform, other projections Glorot-uniform, LSTM forget-gate bias 1 and
// each head's output bias the midpoint of its label range.
template <typename S>
ModelWeights<S> init_weights(const ModelTopology& topo, std::uint64_t seed) {
  topo.validate();
  Rng rng(seed);
  auto uniform = [&rng](Eigen::Index r, Eigen::Index c, double limit) {
    Mat<S> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
    return m;
  };
  auto glorot = [&uniform](Eigen::Index in, Eigen::Index out) {
    return uniform(in, out, std::sqrt(6.0 / static_cast<double>(in + out)));
  };
  auto he = [&uniform](Eigen::Index in, Eigen::Index out) {
    return uniform(in, out, std::sqrt(6.0 / static_cast<double>(in)));
  };

  ModelWeights<S> w;
  w.topology = topo;
  const int k = topo.num_filters;
  const auto lim = topo.sinc_limits();
  w.sinc_low.resize(1, k);
  w.sinc_band.resize(1, k);
  const double mel_lo = hz_to_mel(kSincInitLowHz);
  const double mel_hi = hz_to_mel(lim.cap_hz() - 1.0);
  for (int i = 0; i < k; ++i) {
    const double lo = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (k + 1));
    const double hi = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (i + 1) / (k + 1));
    w.sinc_low(0, i) = static_cast<S>(lo - lim.min_low_hz);
    w.sinc_band(0, i) = static_cast<S>(std::max(hi - lo - lim.min_band_hz, 1.0));
  }

  int in_ch = 1;
  for (int l = 0; l < topo.num_conv_layers(); ++l) {
    const int out_ch = topo.cnn_channels[l / topo.convs_per_block];
    w.conv.push_back({he(9 * in_ch, out_ch), Mat<S>::Zero(1, out_ch)});
    in_ch = out_ch;
  }
  const int dc = topo.cnn_output_dim();
  w.adapter = {glorot(topo.encoder_dim, dc), Mat<S>::Zero(1, dc)};
  const int h = topo.lstm_hidden;
  for (auto* p : {&w.lstm_fwd, &w.lstm_bwd}) {
    const double lim_h = 1.0 / std::sqrt(static_cast<double>(h));
    p->wx = uniform(dc, 4 * h, lim_h);
    p->wh = uniform(h, 4 * h, lim_h);
    p->bias = Mat<S>::Zero(1, 4 * h);
    p->bias.block(0, h, 1, h).setOnes();
  }
  w.shared = {he(2 * h, topo.dense_units), Mat<S>::Zero(1, topo.dense_units)};
  const int a = topo.attention_dim;
  const std::array<double, 2> midpoints = {(kQualityMin + kQualityMax) / 2.0,
                                           (kIntelligibilityMin + kIntelligibilityMax) / 2.0};
  for (std::size_t t = 0; t < 2; ++t) {
    auto& head = w.heads[t];
    head.query = glorot(topo.dense_units, a);
    head.key = glorot(topo.dense_units, a);
    head.value = glorot(topo.dense_units, a);
    if (topo.attention == AttentionType::kAdditive) {
      head.score_bias = Mat<S>::Zero(1, a);
      head.score = glorot(a, 1);
    }
    head.out = {glorot(a, 1), Mat<S>::Constant(1, 1, static_cast<S>(midpoints[t]))};
  }
  return w;
}

struct Prediction {
  std::vector<double> frame_quality;
  std::vector<double> frame_intelligibility;
  double utterance_quality = 0.0;
  double utterance_intelligibility = 0.0;
  std::size_t frame_count = 0;
  // Frame counts of the spectrogram, filter-bank and encoder streams.
  std::size_t ps_frames = 0;
  std::size_t lfb_frames = 0;
  std::size_t ws_frames = 0;

  const std::vector<double>& frames(std::size_t task) const {
    return task == 0 ? frame_quality : frame_intelligibility;
  }
  double utterance(std::size_t task) const { return task == 0 ? utterance_quality : utterance_intelligibility; }
};

// Intermediate values kept for the backward pass.
template <typename S>
struct ForwardTape {
  struct Head {
    Mat<S> query, key, value;
    Mat<S> hidden;     // additive attention: (T*T) x A, tanh activations
    Mat<S> attention;  // T x T, rows sum to one
    Mat<S> attended;   // T x A
  };

  int t1 = 0, t2 = 0, t3 = 0;
  Mat<S> frames;  // T2 x kernel_len
  Mat<S> kernel_re, kernel_im;
  Mat<S> lfb_re, lfb_im;
  nn::NormCache<S> lfb_norm;
  std::vector<Mat<S>> conv_in;
  std::vector<Mat<S>> conv_out;
  std::vector<int> conv_bins;
  std::vector<std::vector<Eigen::Index>> pool_argmax;
  Mat<S> ws;
  Mat<S> adapter_out;
  Mat<S> sequence;  // F x Dc, time-stacked CNN and adapter outputs
  nn::LstmCache<S> lstm_fwd, lstm_bwd;
  Mat<S> blstm_out;
  Mat<S> shared_out;
  std::array<Head, 2> heads;
};

namespace detail {

template <typename S>
Mat<S> activate(Mat<S> x, Activation a) {
  switch (a) {
    case Activation::kNone: return x;
    case Activation::kRelu: return x.cwiseMax(S(0));
    case Activation::kTanh: return x.array().tanh().matrix();
  }
  return x;
}

// Uses post-activation values y.
template <typename S>
Mat<S> activate_backward(const Mat<S>& y, Mat<S> dy, Activation a) {
  switch (a) {
    case Activation::kNone: return dy;
    case Activation::kRelu: nn::relu_backward_inplace(y, &dy); return dy;
    case Activation::kTanh: return (dy.array() * (S(1) - y.array().square())).matrix();
  }
  return dy;
}

template <typename S>
Mat<S> vstack(const Mat<S>& a, const Mat<S>& b) {
  Mat<S> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

template <typename S>
Mat<S> head_forward(const Mat<S>& x, const HeadParams<S>& p, AttentionType type, typename ForwardTape<S>::Head* tape) {
  const Eigen::Index t = x.rows();
  const Eigen::Index a = p.query.cols();
  Mat<S> q = x * p.query;
  Mat<S> k = x * p.key;
  Mat<S> v = x * p.value;
  Mat<S> scores(t, t);
  Mat<S> hidden;
  if (type == AttentionType::kDot) {
    scores.noalias() = q * k.transpose();
    scores *= static_cast<S>(1.0 / std::sqrt(static_cast<double>(a)));
  } else {
    hidden.resize(t * t, a);
    for (Eigen::Index i = 0; i < t; ++i) {
      for (Eigen::Index j = 0; j < t; ++j) {
        hidden.row(i * t + j) = (q.row(i) + k.row(j) + p.score_bias.row(0)).array().tanh().matrix();
      }
    }
    Eigen::Matrix<S, Eigen::Dynamic, 1> e = hidden * p.score.col(0);
    scores = Eigen::Map<Mat<S>>(e.data(), t, t);
  }
  nn::softmax_rows_inplace(&scores);
  Mat<S> attended = scores * v;
  Mat<S> frame;
  nn::dense_forward(attended, p.out.weight, p.out.bias, &frame);
  if (tape) {
    tape->query = std::move(q);
    tape->key = std::move(k);
    tape->value = std::move(v);
    tape->hidden = std::move(hidden);
    tape->attention = std::move(scores);
    tape->attended = std::move(attended);
  }
  return frame;
}

// Returns d(loss)/d(x) for the head input; accumulates parameter gradients.
template <typename S>
Mat<S> head_backward(const Mat<S>& x, const HeadParams<S>& p, AttentionType type,
                     const typename ForwardTape<S>::Head& tape, const Mat<S>& dframe, HeadParams<S>* g) {
  const Eigen::Index t = x.rows();
  const Eigen::Index a = p.query.cols();
  Mat<S> d_attended;
  nn::dense_backward(tape.attended, p.out.weight, dframe, &g->out.weight, &g->out.bias, &d_attended);
  Mat<S> d_attn = d_attended * tape.value.transpose();
  Mat<S> dv = tape.attention.transpose() * d_attended;
  Mat<S> d_scores = nn::softmax_rows_backward(tape.attention, d_attn);
  Mat<S> dq, dk;
  if (type == AttentionType::kDot) {
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(a)));
    dq = d_scores * tape.key * scale;
    dk = d_scores.transpose() * tape.query * scale;
  } else {
    dq = Mat<S>::Zero(t, a);
    dk = Mat<S>::Zero(t, a);
    Eigen::Matrix<S, 1, Eigen::Dynamic> score_row = p.score.col(0).transpose();
    Eigen::Matrix<S, 1, Eigen::Dynamic> d_score = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(a);
    Eigen::Matrix<S, 1, Eigen::Dynamic> d_bias = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(a);
    for (Eigen::Index i = 0; i < t; ++i) {
      for (Eigen::Index j = 0; j < t; ++j) {
        const auto h = tape.hidden.row(i * t + j);
        const S de = d_scores(i, j);
        d_score += de * h;
        Eigen::Matrix<S, 1, Eigen::Dynamic> dh =
            (de * score_row.array() * (S(1) - h.array().square())).matrix();
        dq.row(i) += dh;
        dk.row(j) += dh;
        d_bias += dh;
      }
    }
    g->score.col(0) += d_score.transpose();
    g->score_bias.row(0) += d_bias;
  }
  g->query.noalias() += x.transpose() * dq;
  g->key.noalias() += x.transpose() * dk;
  g->value.noalias() += x.transpose() * dv;
  Mat<S> dx = dq * p.query.transpose();
  dx.noalias() += dk * p.key.transpose();
  dx.noalias() += dv * p.value.transpose();
  return dx;
}

}  // namespace detail

// Raises ConfigError when the features do not fit the model's input layer.
template <typename S>
void check_compatible(const FeatureBundle& b, const ModelWeights<S>& w) {
  const auto& topo = w.topology;
  if (b.ps.cols() != topo.num_filters) {
    throw ConfigError("spectrogram has " + std::to_string(b.ps.cols()) + " bins but the model expects " +
                      std::to_string(topo.num_filters));
  }
  if (b.ws.cols() != topo.encoder_dim) {
    throw ConfigError("encoder embedding has dim " + std::to_string(b.ws.cols()) + " but the adapter expects " +
                      std::to_string(topo.encoder_dim));
  }
  if (b.sample_rate != topo.sample_rate) {
    throw ConfigError("features are at " + std::to_string(b.sample_rate) + " Hz, model expects " +
                      std::to_string(topo.sample_rate) + " Hz");
  }
}

template <typename S>
Prediction forward(const FeatureBundle& b, const ModelWeights<S>& w, ForwardTape<S>* tape = nullptr) {
  check_compatible(b, w);
  const auto& topo = w.topology;
  const S floor = static_cast<S>(topo.log_floor);
  const int k = topo.num_filters;
  if (b.waveform.size() < static_cast<std::size_t>(topo.sinc_kernel_len)) {
    throw InputTooShortError("waveform shorter than the filter-bank kernel");
  }
  if (b.ps.rows() == 0 || b.ws.rows() == 0) throw InputTooShortError("empty feature stream");

  ForwardTape<S> local;
  ForwardTape<S>& tp = tape ? *tape : local;

  // Spectrogram stream (fixed input).
  Mat<S> ps = nn::log_normalize_forward<S>(b.ps.cast<S>(), floor, nullptr);
  const int t1 = static_cast<int>(ps.rows());

  // Learnable filter-bank stream.
  tp.frames = nn::frame_signal<S>(b.waveform, topo.sinc_kernel_len, topo.sinc_stride);
  nn::sinc_kernels<S>({w.sinc_low.data(), static_cast<std::size_t>(k)},
                      {w.sinc_band.data(), static_cast<std::size_t>(k)}, topo.sinc_kernel_len,
                      topo.sinc_limits(), &tp.kernel_re, &tp.kernel_im);
  tp.lfb_re.noalias() = tp.frames * tp.kernel_re;
  tp.lfb_im.noalias() = tp.frames * tp.kernel_im;
  Mat<S> power = tp.lfb_re.cwiseAbs2() + tp.lfb_im.cwiseAbs2();
  Mat<S> lfb = nn::log_normalize_forward<S>(power, floor, &tp.lfb_norm);
  nn::check_finite(lfb, "sinc_filterbank");
  const int t2 = static_cast<int>(lfb.rows());

  // CNN over the time-stacked PS and LFB streams, one input channel.
  const int t12 = t1 + t2;
  Mat<S> stacked = detail::vstack(ps, lfb);
  Mat<S> x = Eigen::Map<Mat<S>>(stacked.data(), static_cast<Eigen::Index>(t12) * k, 1);
  int bins = k;
  tp.conv_in.clear();
  tp.conv_out.clear();
  tp.conv_bins.clear();
  tp.pool_argmax.clear();
  for (int l = 0; l < topo.num_conv_layers(); ++l) {
    Mat<S> y = nn::conv_relu_forward(x, t12, bins, w.conv[l].weight, w.conv[l].bias);
    nn::check_finite(y, "cnn");
    tp.conv_in.push_back(std::move(x));
    tp.conv_out.push_back(y);
    tp.conv_bins.push_back(bins);
    if ((l + 1) % topo.convs_per_block == 0) {
      std::vector<Eigen::Index> argmax;
      x = nn::freq_maxpool_forward(y, t12, bins, &argmax);
      tp.pool_argmax.push_back(std::move(argmax));
      bins = nn::pooled_len(bins);
    } else {
      x = std::move(y);
    }
  }
  const int dc = topo.cnn_output_dim();
  Mat<S> cnn_out = Eigen::Map<Mat<S>>(x.data(), t12, dc);

  // Frozen-encoder stream through the adapter.
  tp.ws = b.ws.cast<S>();
  Mat<S> adapter_pre;
  nn::dense_forward(tp.ws, w.adapter.weight, w.adapter.bias, &adapter_pre);
  tp.adapter_out = detail::activate(std::move(adapter_pre), topo.adapter_activation);
  nn::check_finite(tp.adapter_out, "adapter");
  const int t3 = static_cast<int>(tp.adapter_out.rows());

  tp.sequence = detail::vstack(cnn_out, tp.adapter_out);
  const Eigen::Index f_n = tp.sequence.rows();

  // BLSTM and shared dense layer.
  const int h = topo.lstm_hidden;
  tp.blstm_out.resize(f_n, 2 * h);
  tp.blstm_out.leftCols(h) = nn::lstm_forward(tp.sequence, w.lstm_fwd.wx, w.lstm_fwd.wh, w.lstm_fwd.bias, false,
                                              &tp.lstm_fwd);
  tp.blstm_out.rightCols(h) = nn::lstm_forward(tp.sequence, w.lstm_bwd.wx, w.lstm_bwd.wh, w.lstm_bwd.bias, true,
                                               &tp.lstm_bwd);
  nn::check_finite(tp.blstm_out, "blstm");
  nn::dense_forward(tp.blstm_out, w.shared.weight, w.shared.bias, &tp.shared_out);
  nn::relu_inplace(&tp.shared_out);
  nn::check_finite(tp.shared_out, "shared_dense");

  Prediction pred;
  pred.ps_frames = static_cast<std::size_t>(t1);
  pred.lfb_frames = static_cast<std::size_t>(t2);
  pred.ws_frames = static_cast<std::size_t>(t3);
  pred.frame_count = static_cast<std::size_t>(f_n);
  for (std::size_t task = 0; task < 2; ++task) {
    Mat<S> frame = detail::head_forward(tp.shared_out, w.heads[task], topo.attention, &tp.heads[task]);
    nn::check_finite(frame, task == 0 ? "head.quality" : "head.intelligibility");
    std::vector<double> scores(static_cast<std::size_t>(f_n));
    double sum = 0.0;
    for (Eigen::Index i = 0; i < f_n; ++i) {
      scores[i] = static_cast<double>(frame(i, 0));
      sum += scores[i];
    }
    const double mean = sum / static_cast<double>(f_n);
    if (task == 0) {
      pred.frame_quality = std::move(scores);
      pred.utterance_quality = mean;
    } else {
      pred.frame_intelligibility = std::move(scores);
      pred.utterance_intelligibility = mean;
    }
  }
  tp.t1 = t1;
  tp.t2 = t2;
  tp.t3 = t3;
  return pred;
}

// Accumulates parameter gradients into grads given d(loss)/d(frame score)
// for each task.
template <typename S>
void backward(const ForwardTape<S>& tp, const ModelWeights<S>& w, std::span<const double> d_frame_quality,
              std::span<const double> d_frame_intelligibility, ModelWeights<S>* grads) {
  const auto& topo = w.topology;
  const Eigen::Index f_n = tp.sequence.rows();
  const int k = topo.num_filters;
  const int h = topo.lstm_hidden;

  Mat<S> d_shared = Mat<S>::Zero(f_n, topo.dense_units);
  for (std::size_t task = 0; task < 2; ++task) {
    const auto d = task == 0 ? d_frame_quality : d_frame_intelligibility;
    Mat<S> dframe(f_n, 1);
    for (Eigen::Index i = 0; i < f_n; ++i) dframe(i, 0) = static_cast<S>(d[static_cast<std::size_t>(i)]);
    d_shared += detail::head_backward(tp.shared_out, w.heads[task], topo.attention, tp.heads[task], dframe,
                                      &grads->heads[task]);
  }

  nn::relu_backward_inplace(tp.shared_out, &d_shared);
  Mat<S> d_blstm;
  nn::dense_backward(tp.blstm_out, w.shared.weight, d_shared, &grads->shared.weight, &grads->shared.bias, &d_blstm);

  Mat<S> d_seq = nn::lstm_backward(tp.lstm_fwd, w.lstm_fwd.wx, w.lstm_fwd.wh, Mat<S>(d_blstm.leftCols(h)), false,
                                   &grads->lstm_fwd.wx, &grads->lstm_fwd.wh, &grads->lstm_fwd.bias);
  d_seq += nn::lstm_backward(tp.lstm_bwd, w.lstm_bwd.wx, w.lstm_bwd.wh, Mat<S>(d_blstm.rightCols(h)), true,
                             &grads->lstm_bwd.wx, &grads->lstm_bwd.wh, &grads->lstm_bwd.bias);

  const int t12 = tp.t1 + tp.t2;
  Mat<S> d_adapter = detail::activate_backward(tp.adapter_out, Mat<S>(d_seq.bottomRows(tp.t3)),
                                               topo.adapter_activation);
  nn::dense_backward(tp.ws, w.adapter.weight, d_adapter, &grads->adapter.weight, &grads->adapter.bias,
                     static_cast<Mat<S>*>(nullptr));

  // Back through the CNN; the row-major layout makes the flatten a reshape.
  const int last_ch = topo.cnn_channels.back();
  Mat<S> d_top = d_seq.topRows(t12);
  Mat<S> dx = Eigen::Map<Mat<S>>(d_top.data(), static_cast<Eigen::Index>(t12) * topo.pooled_bins(), last_ch);
  for (int l = topo.num_conv_layers() - 1; l >= 0; --l) {
    if ((l + 1) % topo.convs_per_block == 0) {
      const auto block = static_cast<std::size_t>(l / topo.convs_per_block);
      dx = nn::freq_maxpool_backward(dx, tp.conv_out[l].rows(), tp.pool_argmax[block]);
    }
    dx = nn::conv_relu_backward(tp.conv_in[l], tp.conv_out[l], t12, tp.conv_bins[l], w.conv[l].weight,
                                std::move(dx), &grads->conv[l].weight, &grads->conv[l].bias, true);
  }

  // Only the filter-bank rows carry gradient to parameters.
  Mat<S> d_lfb = Eigen::Map<Mat<S>>(dx.data() + static_cast<Eigen::Index>(tp.t1) * k, tp.t2, k);
  Mat<S> d_power = nn::log_normalize_backward(tp.lfb_norm, static_cast<S>(topo.log_floor), d_lfb);
  Mat<S> d_re = (S(2) * tp.lfb_re.array() * d_power.array()).matrix();
  Mat<S> d_im = (S(2) * tp.lfb_im.array() * d_power.array()).matrix();
  Mat<S> d_kernel_re = tp.frames.transpose() * d_re;
  Mat<S> d_kernel_im = tp.frames.transpose() * d_im;
  nn::sinc_kernels_backward<S>({w.sinc_low.data(), static_cast<std::size_t>(k)},
                               {w.sinc_band.data(), static_cast<std::size_t>(k)}, topo.sinc_kernel_len,
                               topo.sinc_limits(), d_kernel_re, d_kernel_im,
                               {grads->sinc_low.data(), static_cast<std::size_t>(k)},
                               {grads->sinc_band.data(), static_cast<std::size_t>(k)});
}

// Band edges (Hz) after clamping, one row per filter: low, high.
template <typename S>
std::vector<std::pair<double, double>> sinc_bands(const ModelWeights<S>& w) {
  std::vector<std::pair<double, double>> out;
  const auto lim = w.topology.sinc_limits();
  for (Eigen::Index i = 0; i < w.sinc_low.cols(); ++i) {
    const auto b = nn::sinc_band(static_cast<double>(w.sinc_low(0, i)), static_cast<double>(w.sinc_band(0, i)), lim);
    out.emplace_back(b.low_hz, b.high_hz);
  }
  return out;
}

// Squared-envelope filter-bank output (T2 x K) without normalization.
template <typename S>
Mat<S> sinc_filterbank_forward(std::span<const float> waveform, const ModelWeights<S>& w) {
  const auto& topo = w.topology;
  if (waveform.size() < static_cast<std::size_t>(topo.sinc_kernel_len)) {
    throw InputTooShortError("waveform shorter than the filter-bank kernel");
  }
  Mat<S> re, im;
  const auto k = static_cast<std::size_t>(topo.num_filters);
  nn::sinc_kernels<S>({w.sinc_low.data(), k}, {w.sinc_band.data(), k}, topo.sinc_kernel_len, topo.sinc_limits(),
                      &re, &im);
  const Mat<S> frames = nn::frame_signal<S>(waveform, topo.sinc_kernel_len, topo.sinc_stride);
  Mat<S> a = frames * re;
  Mat<S> b = frames * im;
  return a.cwiseAbs2() + b.cwiseAbs2();
}

// Adapter projection of an encoder embedding (T3 x Dc).
template <typename S>
Mat<S> adapter_forward(const EncoderEmbedding& ws, const ModelWeights<S>& w) {
  if (ws.dim() != w.topology.encoder_dim) {
    throw ConfigError("encoder embedding has dim " + std::to_string(ws.dim()) + " but the adapter expects " +
                      std::to_string(w.topology.encoder_dim));
  }
  Mat<S> pre;
  nn::dense_forward<S>(ws.values.cast<S>(), w.adapter.weight, w.adapter.bias, &pre);
  return detail::activate(std::move(pre), w.topology.adapter_activation);
}

}  // namespace mosanet
