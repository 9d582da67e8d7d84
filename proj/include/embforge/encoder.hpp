// Copyright 2026 the embforge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "embforge/error.hpp"
#include "embforge/numerics.hpp"
#include "embforge/tokenizer.hpp"

namespace embforge {

enum class MaskMode { kBidirectional, kCausal };

inline const char* to_string(MaskMode m) {
  return m == MaskMode::kCausal ? "causal" : "bidirectional";
}
MaskMode parse_mask_mode(const std::string& s);

struct EncoderConfig {
  int vocab_size = 0;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int max_len = static_cast<int>(kDefaultMaxLen);
  MaskMode mask = MaskMode::kBidirectional;
  bool positional = true;
  std::uint64_t vocab_hash = 0;

  int head_dim() const { return dim / heads; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Weights of one pre-norm transformer block. Vectors are stored as 1 x n
/// matrices so every tensor shares one type.
template <typename Scalar>
struct LayerParams {
  Mat<Scalar> ln1_gain, ln1_bias;
  Mat<Scalar> wq, wk, wv, wo;
  Mat<Scalar> ln2_gain, ln2_bias;
  Mat<Scalar> w1, b1, w2, b2;
};

/// Which parameter blocks receive gradient.
struct FrozenGroups {
  bool embeddings = false;
  bool attention = false;
  bool ffn = false;
  bool norms = false;
};

template <typename Scalar>
struct EncoderParams {
  EncoderConfig config;
  Mat<Scalar> token_embeddings;
  std::vector<LayerParams<Scalar>> layers;

  static EncoderParams zeros(const EncoderConfig& cfg) {
    cfg.validate();
    const Eigen::Index d = cfg.dim, v = cfg.vocab_size, f = 4 * cfg.dim;
    EncoderParams p;
    p.config = cfg;
    p.token_embeddings = Mat<Scalar>::Zero(v, d);
    p.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& l : p.layers) {
      l.ln1_gain = Mat<Scalar>::Zero(1, d);
      l.ln1_bias = Mat<Scalar>::Zero(1, d);
      l.wq = Mat<Scalar>::Zero(d, d);
      l.wk = Mat<Scalar>::Zero(d, d);
      l.wv = Mat<Scalar>::Zero(d, d);
      l.wo = Mat<Scalar>::Zero(d, d);
      l.ln2_gain = Mat<Scalar>::Zero(1, d);
      l.ln2_bias = Mat<Scalar>::Zero(1, d);
      l.w1 = Mat<Scalar>::Zero(d, f);
      l.b1 = Mat<Scalar>::Zero(1, f);
      l.w2 = Mat<Scalar>::Zero(f, d);
      l.b2 = Mat<Scalar>::Zero(1, d);
    }
    return p;
  }

  /// Visits every tensor in a fixed order: fn(name, tensor).
  template <typename Fn>
  void for_each(Fn&& fn) {
    fn(std::string("token_embeddings"), token_embeddings);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string pre = "layers." + std::to_string(i) + ".";
      auto& l = layers[i];
      fn(pre + "ln1_gain", l.ln1_gain);
      fn(pre + "ln1_bias", l.ln1_bias);
      fn(pre + "wq", l.wq);
      fn(pre + "wk", l.wk);
      fn(pre + "wv", l.wv);
      fn(pre + "wo", l.wo);
      fn(pre + "ln2_gain", l.ln2_gain);
      fn(pre + "ln2_bias", l.ln2_bias);
      fn(pre + "w1", l.w1);
      fn(pre + "b1", l.b1);
      fn(pre + "w2", l.w2);
      fn(pre + "b2", l.b2);
    }
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<EncoderParams*>(this)->for_each(
        [&](const std::string& name, Mat<Scalar>& t) { fn(name, static_cast<const Mat<Scalar>&>(t)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Mat<Scalar>& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  void set_zero() {
    for_each([](const std::string&, Mat<Scalar>& t) { t.setZero(); });
  }

  template <typename Other>
  EncoderParams<Other> cast() const {
    EncoderParams<Other> out = EncoderParams<Other>::zeros(config);
    std::vector<const Mat<Scalar>*> src;
    for_each([&](const std::string&, const Mat<Scalar>& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.for_each([&](const std::string&, Mat<Other>& t) { t = src[i++]->template cast<Other>(); });
    return out;
  }

  /// All tensors concatenated in visitation order.
  Vec<Scalar> flatten() const {
    Vec<Scalar> out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index off = 0;
    for_each([&](const std::string&, const Mat<Scalar>& t) {
      out.segment(off, t.size()) = Eigen::Map<const Vec<Scalar>>(t.data(), t.size());
      off += t.size();
    });
    return out;
  }

  void unflatten(const Vec<Scalar>& flat) {
    require(flat.size() == static_cast<Eigen::Index>(parameter_count()), ErrorKind::kDimension,
            "unflatten: size mismatch");
    Eigen::Index off = 0;
    for_each([&](const std::string&, Mat<Scalar>& t) {
      Eigen::Map<Vec<Scalar>>(t.data(), t.size()) = flat.segment(off, t.size());
      off += t.size();
    });
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Mat<Scalar>& t) { ok = ok && t.allFinite(); });
    return ok;
  }
};

/// Gaussian initialization: embeddings N(0, 1), projections N(0, 1/fan_in),
/// unit norm gains and zero biases.
template <typename Scalar>
EncoderParams<Scalar> init_encoder(const EncoderConfig& cfg, SeededRng& rng) {
  auto p = EncoderParams<Scalar>::zeros(cfg);
  auto gauss = [&rng]() {
    // Box-Muller, one value per call keeps the stream layout simple.
    const double u1 = rng.uniform(), u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  auto fill = [&](Mat<Scalar>& m, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(stddev * gauss());
  };
  fill(p.token_embeddings, 1.0);
  const double d = cfg.dim;
  const double depth = std::sqrt(2.0 * std::max(1, cfg.layers));
  for (auto& l : p.layers) {
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
    fill(l.wq, 1.0 / std::sqrt(d));
    fill(l.wk, 1.0 / std::sqrt(d));
    fill(l.wv, 1.0 / std::sqrt(d));
    fill(l.wo, 1.0 / std::sqrt(d) / depth);
    fill(l.w1, 1.0 / std::sqrt(d));
    fill(l.w2, 1.0 / std::sqrt(4.0 * d) / depth);
  }
  return p;
}

/// Sinusoidal encodings for positions 0..length-1.
template <typename Scalar>
Mat<Scalar> positional_encoding(int length, int dim) {
  Mat<Scalar> pe(length, dim);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
      pe(t, i) = static_cast<Scalar>(std::sin(t * freq));
      if (i + 1 < dim) pe(t, i + 1) = static_cast<Scalar>(std::cos(t * freq));
    }
  }
  return pe;
}

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
struct LayerNormCache {
  Mat<Scalar> xhat;
  Vec<Scalar> rstd;
};

template <typename Scalar>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, const Mat<Scalar>& gain, const Mat<Scalar>& bias,
                       LayerNormCache<Scalar>& cache) {
  const Eigen::Index n = x.rows();
  cache.xhat.resize(x.rows(), x.cols());
  cache.rstd.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Scalar mu = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mu).square().mean();
    const Scalar rstd = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEps));
    cache.rstd[r] = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mu) * rstd;
  }
  return (cache.xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy, const Mat<Scalar>& gain,
                                const LayerNormCache<Scalar>& cache, Mat<Scalar>* dgain,
                                Mat<Scalar>* dbias) {
  if (dgain) dgain->row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (dbias) dbias->row(0) += dy.colwise().sum();
  Mat<Scalar> dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  Mat<Scalar> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const Scalar m1 = dxhat.row(r).mean();
    const Scalar m2 = (dxhat.row(r).array() * cache.xhat.row(r).array()).mean();
    dx.row(r) = cache.rstd[r] * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
  }
  return dx;
}

template <typename Scalar>
Scalar gelu(Scalar u) {
  const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
  return Scalar(0.5) * u * (Scalar(1) + std::tanh(c * (u + Scalar(0.044715) * u * u * u)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar u) {
  const Scalar c = Scalar(0.7978845608028654);
  const Scalar t = std::tanh(c * (u + Scalar(0.044715) * u * u * u));
  return Scalar(0.5) * (Scalar(1) + t) +
         Scalar(0.5) * u * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3 * 0.044715) * u * u);
}

inline void check_finite_layer(bool ok, int layer, const char* where) {
  if (!ok) {
    raise(ErrorKind::kNumeric,
          std::string("non-finite ") + where + " in layer " + std::to_string(layer));
  }
}

}  // namespace detail

/// Intermediate activations of one encoder pass, kept for the backward pass.
template <typename Scalar>
struct ForwardTrace {
  struct Layer {
    Mat<Scalar> x_in;
    detail::LayerNormCache<Scalar> ln1;
    Mat<Scalar> h1, q, k, v, o;
    std::vector<Mat<Scalar>> attn;  // per head, L x L
    Mat<Scalar> x_mid;
    detail::LayerNormCache<Scalar> ln2;
    Mat<Scalar> h2, u, act;
  };
  std::vector<TokenId> ids;
  std::vector<bool> valid;  // false at pad positions
  int valid_count = 0;
  std::vector<Layer> layers;
  Mat<Scalar> hidden;  // final hidden states, L x d
};

/// Contextual hidden states plus pooled embedding. Pad positions are masked
/// out of attention keys and excluded from mean pooling.
template <typename Scalar>
Vec<Scalar> encode(const TokenSequence& seq, const EncoderParams<Scalar>& params,
                   ForwardTrace<Scalar>* trace = nullptr) {
  const auto& cfg = params.config;
  const Eigen::Index len = static_cast<Eigen::Index>(seq.ids.size());
  require(len >= 1, ErrorKind::kInput, "encode: empty token sequence");
  require(len <= cfg.max_len, ErrorKind::kInput, "encode: sequence longer than max_len");

  ForwardTrace<Scalar> local;
  ForwardTrace<Scalar>& tr = trace ? *trace : local;
  tr.ids = seq.ids;
  tr.valid.assign(static_cast<std::size_t>(len), true);
  tr.valid_count = 0;
  tr.layers.clear();

  Mat<Scalar> x(len, cfg.dim);
  for (Eigen::Index t = 0; t < len; ++t) {
    const TokenId id = seq.ids[static_cast<std::size_t>(t)];
    require(id >= 0 && id < cfg.vocab_size, ErrorKind::kInput,
            "encode: token id " + std::to_string(id) + " out of range");
    x.row(t) = params.token_embeddings.row(id);
    const bool is_pad = id == Tokenizer::kPadId;
    tr.valid[static_cast<std::size_t>(t)] = !is_pad;
    tr.valid_count += is_pad ? 0 : 1;
  }
  require(tr.valid_count > 0, ErrorKind::kInput, "encode: sequence contains only padding");
  if (cfg.positional) x += positional_encoding<Scalar>(static_cast<int>(len), cfg.dim);

  const int heads = cfg.heads;
  const Eigen::Index hd = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
  const bool causal = cfg.mask == MaskMode::kCausal;

  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& lp = params.layers[li];
    typename ForwardTrace<Scalar>::Layer c;
    c.x_in = x;
    c.h1 = detail::layer_norm(x, lp.ln1_gain, lp.ln1_bias, c.ln1);
    c.q = c.h1 * lp.wq;
    c.k = c.h1 * lp.wk;
    c.v = c.h1 * lp.wv;
    c.o = Mat<Scalar>::Zero(len, cfg.dim);
    c.attn.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Mat<Scalar> s = (c.q.middleCols(h * hd, hd) * c.k.middleCols(h * hd, hd).transpose()) * scale;
      Mat<Scalar> a = Mat<Scalar>::Zero(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        for (Eigen::Index j = 0; j < len; ++j) {
          if (tr.valid[static_cast<std::size_t>(j)] && (!causal || j <= i)) mx = std::max(mx, s(i, j));
        }
        if (!std::isfinite(mx)) continue;  // no permitted key: zero output row
        Scalar z = 0;
        for (Eigen::Index j = 0; j < len; ++j) {
          if (tr.valid[static_cast<std::size_t>(j)] && (!causal || j <= i)) {
            a(i, j) = std::exp(s(i, j) - mx);
            z += a(i, j);
          }
        }
        a.row(i) /= z;
      }
      c.o.middleCols(h * hd, hd) = a * c.v.middleCols(h * hd, hd);
      c.attn[static_cast<std::size_t>(h)] = std::move(a);
    }
    c.x_mid = x + c.o * lp.wo;
    c.h2 = detail::layer_norm(c.x_mid, lp.ln2_gain, lp.ln2_bias, c.ln2);
    c.u = (c.h2 * lp.w1).rowwise() + lp.b1.row(0);
    c.act = c.u.unaryExpr([](Scalar u) { return detail::gelu(u); });
    x = c.x_mid + ((c.act * lp.w2).rowwise() + lp.b2.row(0));
    detail::check_finite_layer(x.allFinite(), static_cast<int>(li), "activation");
    tr.layers.push_back(std::move(c));
  }

  Vec<Scalar> pooled = Vec<Scalar>::Zero(cfg.dim);
  for (Eigen::Index t = 0; t < len; ++t) {
    if (tr.valid[static_cast<std::size_t>(t)]) pooled += x.row(t).transpose();
  }
  pooled /= static_cast<Scalar>(tr.valid_count);
  tr.hidden = std::move(x);
  require(pooled.allFinite(), ErrorKind::kNumeric, "encode: non-finite pooled embedding");
  return pooled;
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(pooled).
template <typename Scalar>
void encode_backward(const ForwardTrace<Scalar>& tr, const EncoderParams<Scalar>& params,
                     const Vec<Scalar>& grad_pooled, EncoderParams<Scalar>& grads,
                     const FrozenGroups& frozen = {}) {
  const auto& cfg = params.config;
  require(grad_pooled.size() == cfg.dim, ErrorKind::kDimension, "encode_backward: gradient dim");
  const Eigen::Index len = static_cast<Eigen::Index>(tr.ids.size());
  const int heads = cfg.heads;
  const Eigen::Index hd = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  Mat<Scalar> dx = Mat<Scalar>::Zero(len, cfg.dim);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(tr.valid_count);
  for (Eigen::Index t = 0; t < len; ++t) {
    if (tr.valid[static_cast<std::size_t>(t)]) dx.row(t) = grad_pooled.transpose() * inv;
  }

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& lp = params.layers[li];
    auto& lg = grads.layers[li];
    const auto& c = tr.layers[li];

    // Feed-forward block: x_out = x_mid + gelu(h2 W1 + b1) W2 + b2.
    if (!frozen.ffn) {
      lg.w2.noalias() += c.act.transpose() * dx;
      lg.b2.row(0) += dx.colwise().sum();
    }
    Mat<Scalar> du = (dx * lp.w2.transpose()).array() *
                     c.u.unaryExpr([](Scalar u) { return detail::gelu_grad(u); }).array();
    if (!frozen.ffn) {
      lg.w1.noalias() += c.h2.transpose() * du;
      lg.b1.row(0) += du.colwise().sum();
    }
    Mat<Scalar> dh2 = du * lp.w1.transpose();
    Mat<Scalar> dx_mid = dx + detail::layer_norm_backward(dh2, lp.ln2_gain, c.ln2,
                                                          frozen.norms ? nullptr : &lg.ln2_gain,
                                                          frozen.norms ? nullptr : &lg.ln2_bias);

    // Attention block: x_mid = x_in + O Wo.
    if (!frozen.attention) lg.wo.noalias() += c.o.transpose() * dx_mid;
    Mat<Scalar> d_o = dx_mid * lp.wo.transpose();
    Mat<Scalar> dq(len, cfg.dim), dk(len, cfg.dim), dv(len, cfg.dim);
    for (int h = 0; h < heads; ++h) {
      const auto& a = c.attn[static_cast<std::size_t>(h)];
      const auto doh = d_o.middleCols(h * hd, hd);
      Mat<Scalar> da = doh * c.v.middleCols(h * hd, hd).transpose();
      dv.middleCols(h * hd, hd) = a.transpose() * doh;
      Mat<Scalar> ds(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        const Scalar dot = (da.row(i).array() * a.row(i).array()).sum();
        ds.row(i) = a.row(i).array() * (da.row(i).array() - dot);
      }
      ds *= scale;
      dq.middleCols(h * hd, hd) = ds * c.k.middleCols(h * hd, hd);
      dk.middleCols(h * hd, hd) = ds.transpose() * c.q.middleCols(h * hd, hd);
    }
    if (!frozen.attention) {
      lg.wq.noalias() += c.h1.transpose() * dq;
      lg.wk.noalias() += c.h1.transpose() * dk;
      lg.wv.noalias() += c.h1.transpose() * dv;
    }
    Mat<Scalar> dh1 = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
    dx = dx_mid + detail::layer_norm_backward(dh1, lp.ln1_gain, c.ln1,
                                              frozen.norms ? nullptr : &lg.ln1_gain,
                                              frozen.norms ? nullptr : &lg.ln1_bias);
    detail::check_finite_layer(dx.allFinite(), static_cast<int>(li), "gradient");
  }

  if (!frozen.embeddings) {
    for (Eigen::Index t = 0; t < len; ++t) {
      grads.token_embeddings.row(tr.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    }
  }
}

}  // namespace embforge
