#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/error.hpp"
#include "ahue/rng.hpp"

namespace ahue {

// Small two-conv backbone with a shared bottleneck feature feeding a logits
// head and a 2-unit hue-prediction head:
//
//   conv3x3(C -> 16, pad 1) - relu - maxpool2
//   conv3x3(16 -> 32, pad 1) - relu - maxpool2
//   global average pool -> f (32)
//   logits = W1 f + b1 (M), hue = W2 f + b2 (2, optional hidden relu layer)
//
// Parameters are 64-bit so finite-difference checks stay meaningful. Forward
// and backward are explicit loops; input width and height must be multiples
// of 4.
struct TinyNetConfig {
  int in_channels = 3;
  int classes = 8;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int hue_hidden = 0;  // 0 = single affine hue head; >0 inserts a relu layer
};

namespace detail {

struct TinyNetLayout {
  int conv1_w = 0, conv1_b = 0;
  int conv2_w = 0, conv2_b = 0;
  int head_w = 0, head_b = 0;
  int hue1_w = 0, hue1_b = 0;
  int hue2_w = 0, hue2_b = 0;  // only with a hidden hue layer
  int total = 0;

  static TinyNetLayout make(const TinyNetConfig& cfg) {
    TinyNetLayout l;
    int off = 0;
    auto claim = [&off](int count) {
      const int at = off;
      off += count;
      return at;
    };
    l.conv1_w = claim(cfg.conv1_channels * cfg.in_channels * 9);
    l.conv1_b = claim(cfg.conv1_channels);
    l.conv2_w = claim(cfg.conv2_channels * cfg.conv1_channels * 9);
    l.conv2_b = claim(cfg.conv2_channels);
    l.head_w = claim(cfg.classes * cfg.conv2_channels);
    l.head_b = claim(cfg.classes);
    if (cfg.hue_hidden > 0) {
      l.hue1_w = claim(cfg.hue_hidden * cfg.conv2_channels);
      l.hue1_b = claim(cfg.hue_hidden);
      l.hue2_w = claim(2 * cfg.hue_hidden);
      l.hue2_b = claim(2);
    } else {
      l.hue1_w = claim(2 * cfg.conv2_channels);
      l.hue1_b = claim(2);
    }
    l.total = off;
    return l;
  }
};

// Channel-major (c, row, col) plane stack.
struct Planes {
  int channels = 0, height = 0, width = 0;
  std::vector<double> data;

  void resize(int c, int h, int w) {
    channels = c;
    height = h;
    width = w;
    data.assign(static_cast<std::size_t>(c) * h * w, 0.0);
  }
  double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
  const double* plane(int c) const {
    return data.data() + static_cast<std::size_t>(c) * height * width;
  }
};

}  // namespace detail

struct TinyNetCache {
  std::uint64_t param_version = 0;
  detail::Planes input;           // (C, H, W)
  detail::Planes conv1_pre;       // pre-relu
  detail::Planes pool1;           // after relu + maxpool
  std::vector<std::uint32_t> pool1_argmax;
  detail::Planes conv2_pre;
  detail::Planes pool2;
  std::vector<std::uint32_t> pool2_argmax;
  std::vector<double> feature;    // bottleneck (conv2_channels)
  std::vector<double> hue_hidden_pre;  // only with a hidden hue layer
  std::vector<double> logits;
  std::array<double, 2> hue_prediction{0.0, 0.0};
};

class TinyNet {
 public:
  explicit TinyNet(const TinyNetConfig& cfg, std::uint64_t init_seed = 0)
      : cfg_(cfg), layout_(detail::TinyNetLayout::make(cfg)), params_(layout_.total, 0.0) {
    if (cfg.in_channels <= 0 || cfg.classes < 2 || cfg.conv1_channels <= 0 ||
        cfg.conv2_channels <= 0 || cfg.hue_hidden < 0)
      raise(Errc::config_error, "bad network configuration");
    init_params(init_seed);
  }

  const TinyNetConfig& config() const { return cfg_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() {
    ++param_version_;
    return params_;
  }
  std::uint64_t param_version() const { return param_version_; }

  TinyNetCache forward(const ActivationImage& image) const {
    if (image.channels != cfg_.in_channels)
      raise(Errc::shape_mismatch, "image channels do not match network input");
    if (image.width % 4 != 0 || image.height % 4 != 0 || image.width < 4 || image.height < 4)
      raise(Errc::shape_mismatch, "input width and height must be multiples of 4");

    TinyNetCache cache;
    cache.param_version = param_version_;
    cache.input.resize(cfg_.in_channels, image.height, image.width);
    for (int c = 0; c < cfg_.in_channels; ++c) {
      double* plane = cache.input.plane(c);
      for (int r = 0; r < image.height; ++r)
        for (int x = 0; x < image.width; ++x)
          plane[r * image.width + x] = static_cast<double>(image.at(r, x, c));
    }

    conv3x3(cache.input, p(layout_.conv1_w), p(layout_.conv1_b), cfg_.conv1_channels,
            cache.conv1_pre);
    relu_maxpool2(cache.conv1_pre, cache.pool1, cache.pool1_argmax);
    conv3x3(cache.pool1, p(layout_.conv2_w), p(layout_.conv2_b), cfg_.conv2_channels,
            cache.conv2_pre);
    relu_maxpool2(cache.conv2_pre, cache.pool2, cache.pool2_argmax);

    // global average pool
    cache.feature.assign(cfg_.conv2_channels, 0.0);
    const int spatial = cache.pool2.height * cache.pool2.width;
    for (int c = 0; c < cfg_.conv2_channels; ++c) {
      const double* plane = cache.pool2.plane(c);
      double s = 0.0;
      for (int i = 0; i < spatial; ++i) s += plane[i];
      cache.feature[c] = s / spatial;
    }

    cache.logits = affine(p(layout_.head_w), p(layout_.head_b), cache.feature, cfg_.classes);
    if (cfg_.hue_hidden > 0) {
      cache.hue_hidden_pre =
          affine(p(layout_.hue1_w), p(layout_.hue1_b), cache.feature, cfg_.hue_hidden);
      std::vector<double> hidden(cfg_.hue_hidden);
      for (int i = 0; i < cfg_.hue_hidden; ++i) hidden[i] = std::max(0.0, cache.hue_hidden_pre[i]);
      auto out = affine(p(layout_.hue2_w), p(layout_.hue2_b), hidden, 2);
      cache.hue_prediction = {out[0], out[1]};
    } else {
      auto out = affine(p(layout_.hue1_w), p(layout_.hue1_b), cache.feature, 2);
      cache.hue_prediction = {out[0], out[1]};
    }
    return cache;
  }

  // Parameter gradients for the cached forward pass given upstream gradients
  // w.r.t. the logits and the hue prediction. Layout matches params().
  std::vector<double> backward(const TinyNetCache& cache, std::span<const double> grad_logits,
                               std::array<double, 2> grad_prediction) const {
    if (cache.param_version != param_version_)
      raise(Errc::stale_cache, "cache was built from different parameter values");
    if (grad_logits.size() != static_cast<std::size_t>(cfg_.classes))
      raise(Errc::shape_mismatch, "grad_logits size does not match class count");

    std::vector<double> grads(params_.size(), 0.0);
    std::vector<double> dfeature(cfg_.conv2_channels, 0.0);

    // logits head
    for (int m = 0; m < cfg_.classes; ++m) {
      grads[layout_.head_b + m] += grad_logits[m];
      for (int c = 0; c < cfg_.conv2_channels; ++c) {
        grads[layout_.head_w + m * cfg_.conv2_channels + c] += grad_logits[m] * cache.feature[c];
        dfeature[c] += grad_logits[m] * params_[layout_.head_w + m * cfg_.conv2_channels + c];
      }
    }
    // hue head
    if (cfg_.hue_hidden > 0) {
      std::vector<double> dhidden(cfg_.hue_hidden, 0.0);
      for (int o = 0; o < 2; ++o) {
        grads[layout_.hue2_b + o] += grad_prediction[o];
        for (int h = 0; h < cfg_.hue_hidden; ++h) {
          const double hidden = std::max(0.0, cache.hue_hidden_pre[h]);
          grads[layout_.hue2_w + o * cfg_.hue_hidden + h] += grad_prediction[o] * hidden;
          dhidden[h] += grad_prediction[o] * params_[layout_.hue2_w + o * cfg_.hue_hidden + h];
        }
      }
      for (int h = 0; h < cfg_.hue_hidden; ++h) {
        if (cache.hue_hidden_pre[h] <= 0.0) continue;
        grads[layout_.hue1_b + h] += dhidden[h];
        for (int c = 0; c < cfg_.conv2_channels; ++c) {
          grads[layout_.hue1_w + h * cfg_.conv2_channels + c] += dhidden[h] * cache.feature[c];
          dfeature[c] += dhidden[h] * params_[layout_.hue1_w + h * cfg_.conv2_channels + c];
        }
      }
    } else {
      for (int o = 0; o < 2; ++o) {
        grads[layout_.hue1_b + o] += grad_prediction[o];
        for (int c = 0; c < cfg_.conv2_channels; ++c) {
          grads[layout_.hue1_w + o * cfg_.conv2_channels + c] +=
              grad_prediction[o] * cache.feature[c];
          dfeature[c] += grad_prediction[o] * params_[layout_.hue1_w + o * cfg_.conv2_channels + c];
        }
      }
    }

    // global average pool backward
    detail::Planes dpool2;
    dpool2.resize(cfg_.conv2_channels, cache.pool2.height, cache.pool2.width);
    const int spatial2 = cache.pool2.height * cache.pool2.width;
    for (int c = 0; c < cfg_.conv2_channels; ++c) {
      double* plane = dpool2.plane(c);
      const double g = dfeature[c] / spatial2;
      for (int i = 0; i < spatial2; ++i) plane[i] = g;
    }

    detail::Planes dconv2_pre;
    unpool_relu_backward(dpool2, cache.pool2_argmax, cache.conv2_pre, dconv2_pre);
    detail::Planes dpool1;
    conv3x3_backward(cache.pool1, dconv2_pre, p(layout_.conv2_w), grads, layout_.conv2_w,
                     layout_.conv2_b, &dpool1);
    detail::Planes dconv1_pre;
    unpool_relu_backward(dpool1, cache.pool1_argmax, cache.conv1_pre, dconv1_pre);
    conv3x3_backward(cache.input, dconv1_pre, p(layout_.conv1_w), grads, layout_.conv1_w,
                     layout_.conv1_b, nullptr);
    return grads;
  }

  // Applies params += delta (the optimizer computes the delta).
  void apply_update(std::span<const double> delta) {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] += delta[i];
    ++param_version_;
  }

  // Largest-magnitude gradient entry inside the hue head (both layers when a
  // hidden layer is configured). Used as a gradient-flow check.
  double max_hue_head_grad(std::span<const double> grads) const {
    double m = 0.0;
    const int end = cfg_.hue_hidden > 0 ? layout_.hue2_b + 2 : layout_.hue1_b + 2;
    for (int i = layout_.hue1_w; i < end; ++i) m = std::max(m, std::abs(grads[i]));
    return m;
  }

 private:
  const double* p(int offset) const { return params_.data() + offset; }

  void init_params(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x6e65u /* net init stream */}));
    auto fill = [&](int offset, int count, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (int i = 0; i < count; ++i) params_[offset + i] = rng.uniform(-bound, bound);
    };
    fill(layout_.conv1_w, cfg_.conv1_channels * cfg_.in_channels * 9, cfg_.in_channels * 9);
    fill(layout_.conv1_b, cfg_.conv1_channels, cfg_.in_channels * 9);
    fill(layout_.conv2_w, cfg_.conv2_channels * cfg_.conv1_channels * 9, cfg_.conv1_channels * 9);
    fill(layout_.conv2_b, cfg_.conv2_channels, cfg_.conv1_channels * 9);
    fill(layout_.head_w, cfg_.classes * cfg_.conv2_channels, cfg_.conv2_channels);
    fill(layout_.head_b, cfg_.classes, cfg_.conv2_channels);
    if (cfg_.hue_hidden > 0) {
      fill(layout_.hue1_w, cfg_.hue_hidden * cfg_.conv2_channels, cfg_.conv2_channels);
      fill(layout_.hue1_b, cfg_.hue_hidden, cfg_.conv2_channels);
      fill(layout_.hue2_w, 2 * cfg_.hue_hidden, cfg_.hue_hidden);
      fill(layout_.hue2_b, 2, cfg_.hue_hidden);
    } else {
      fill(layout_.hue1_w, 2 * cfg_.conv2_channels, cfg_.conv2_channels);
      fill(layout_.hue1_b, 2, cfg_.conv2_channels);
    }
  }

  // out[oc] = b[oc] + sum_ic conv(in[ic], w[oc][ic]) with zero padding 1.
  static void conv3x3(const detail::Planes& in, const double* w, const double* b, int out_channels,
                      detail::Planes& out) {
    const int h = in.height, wd = in.width, ic_count = in.channels;
    out.resize(out_channels, h, wd);
    for (int oc = 0; oc < out_channels; ++oc) {
      double* op = out.plane(oc);
      for (int i = 0; i < h * wd; ++i) op[i] = b[oc];
      for (int ic = 0; ic < ic_count; ++ic) {
        const double* ip = in.plane(ic);
        const double* wk = w + (oc * ic_count + ic) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          for (int kw = 0; kw < 3; ++kw) {
            const double wv = wk[kh * 3 + kw];
            const int y0 = std::max(0, 1 - kh), y1 = std::min(h, h + 1 - kh);
            const int x0 = std::max(0, 1 - kw), x1 = std::min(wd, wd + 1 - kw);
            for (int y = y0; y < y1; ++y) {
              const double* irow = ip + (y + kh - 1) * wd + (kw - 1);
              double* orow = op + y * wd;
              for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }

  // dW, db accumulation plus (optionally) the gradient w.r.t. the layer input.
  void conv3x3_backward(const detail::Planes& in, const detail::Planes& dout, const double* w,
                        std::vector<double>& grads, int w_offset, int b_offset,
                        detail::Planes* din) const {
    const int h = in.height, wd = in.width;
    const int ic_count = in.channels, oc_count = dout.channels;
    if (din) din->resize(ic_count, h, wd);
    for (int oc = 0; oc < oc_count; ++oc) {
      const double* dop = dout.plane(oc);
      double bsum = 0.0;
      for (int i = 0; i < h * wd; ++i) bsum += dop[i];
      grads[b_offset + oc] += bsum;
      for (int ic = 0; ic < ic_count; ++ic) {
        const double* ip = in.plane(ic);
        double* dip = din ? din->plane(ic) : nullptr;
        const double* wk = w + (oc * ic_count + ic) * 9;
        double* gk = grads.data() + w_offset + (oc * ic_count + ic) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          for (int kw = 0; kw < 3; ++kw) {
            const int y0 = std::max(0, 1 - kh), y1 = std::min(h, h + 1 - kh);
            const int x0 = std::max(0, 1 - kw), x1 = std::min(wd, wd + 1 - kw);
            double wsum = 0.0;
            const double wv = wk[kh * 3 + kw];
            for (int y = y0; y < y1; ++y) {
              const double* irow = ip + (y + kh - 1) * wd + (kw - 1);
              const double* drow = dop + y * wd;
              if (dip) {
                double* dirow = dip + (y + kh - 1) * wd + (kw - 1);
                for (int x = x0; x < x1; ++x) {
                  wsum += drow[x] * irow[x];
                  dirow[x] += drow[x] * wv;
                }
              } else {
                for (int x = x0; x < x1; ++x) wsum += drow[x] * irow[x];
              }
            }
            gk[kh * 3 + kw] += wsum;
          }
        }
      }
    }
  }

  // relu then 2x2 max pooling; argmax holds the flat pre-pool index per
  // output cell (first maximum in scan order wins).
  static void relu_maxpool2(const detail::Planes& pre, detail::Planes& out,
                            std::vector<std::uint32_t>& argmax) {
    const int h = pre.height, w = pre.width;
    const int oh = h / 2, ow = w / 2;
    out.resize(pre.channels, oh, ow);
    argmax.assign(static_cast<std::size_t>(pre.channels) * oh * ow, 0);
    for (int c = 0; c < pre.channels; ++c) {
      const double* ip = pre.plane(c);
      double* op = out.plane(c);
      std::uint32_t* am = argmax.data() + static_cast<std::size_t>(c) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double best = -1.0;  // relu output is >= 0
          std::uint32_t best_idx = (2 * y) * w + 2 * x;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = (2 * y + dy) * w + 2 * x + dx;
              const double v = std::max(0.0, ip[idx]);
              if (v > best) {
                best = v;
                best_idx = static_cast<std::uint32_t>(idx);
              }
            }
          }
          op[y * ow + x] = best;
          am[y * ow + x] = best_idx;
        }
      }
    }
  }

  // Routes pooled gradients back through the argmax and the relu mask.
  static void unpool_relu_backward(const detail::Planes& dpool,
                                   const std::vector<std::uint32_t>& argmax,
                                   const detail::Planes& pre, detail::Planes& dpre) {
    dpre.resize(pre.channels, pre.height, pre.width);
    const int spatial_out = dpool.height * dpool.width;
    for (int c = 0; c < pre.channels; ++c) {
      const double* dp = dpool.plane(c);
      const double* prep = pre.plane(c);
      double* dst = dpre.plane(c);
      const std::uint32_t* am = argmax.data() + static_cast<std::size_t>(c) * spatial_out;
      for (int i = 0; i < spatial_out; ++i) {
        const std::uint32_t idx = am[i];
        if (prep[idx] > 0.0) dst[idx] += dp[i];
      }
    }
  }

  static std::vector<double> affine(const double* w, const double* b,
                                    std::span<const double> input, int outputs) {
    std::vector<double> out(outputs);
    for (int o = 0; o < outputs; ++o) {
      double s = b[o];
      const double* row = w + o * input.size();
      for (std::size_t i = 0; i < input.size(); ++i) s += row[i] * input[i];
      out[o] = s;
    }
    return out;
  }

  TinyNetConfig cfg_;
  detail::TinyNetLayout layout_;
  std::vector<double> params_;
  std::uint64_t param_version_ = 0;
};

}  // namespace ahue
