#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ahue/error.hpp"

namespace ahue {

// N-channel activation tensor. Values are float32 (matching typical activation
// dumps); derived statistics and all loss math accumulate in float64.
// Layout is row-major (row, col, channel), channel fastest, so the activation
// vector of one pixel is contiguous.
//
// Pixel (col c, row r) has centered coordinates x = c - (W-1)/2,
// y = (H-1)/2 - r (y up); the image center is (0, 0).
struct ActivationImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  bool post_relu = false;
  std::vector<float> data;

  static ActivationImage zeros(int width, int height, int channels, bool post_relu = false) {
    if (width <= 0 || height <= 0 || channels <= 0)
      raise(Errc::invalid_dims, "activation dims must be positive, got " + std::to_string(width) +
                                    "x" + std::to_string(height) + "x" + std::to_string(channels));
    ActivationImage img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.post_relu = post_relu;
    img.data.assign(static_cast<std::size_t>(width) * height * channels, 0.0f);
    return img;
  }

  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }

  float& at(int row, int col, int ch) { return data[index(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data[index(row, col, ch)]; }

  std::span<const float> pixel(int row, int col) const {
    return {data.data() + index(row, col, 0), static_cast<std::size_t>(channels)};
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  double x_of(int col) const { return col - (width - 1) / 2.0; }
  double y_of(int row) const { return (height - 1) / 2.0 - row; }

  void validate() const {
    if (width <= 0 || height <= 0 || channels <= 0)
      raise(Errc::invalid_dims, "activation dims must be positive");
    if (data.size() != static_cast<std::size_t>(width) * height * channels)
      raise(Errc::invalid_dims, "data size does not match dims");
    for (float v : data) {
      if (!std::isfinite(v)) raise(Errc::not_finite, "activation value not finite");
      if (post_relu && v < 0.0f) raise(Errc::not_finite, "negative value in post-relu tensor");
    }
  }
};

// One spatially-located activation vector. Values are float64 here: this is
// the unit for loss/geometry math, not bulk storage.
struct PixelVector {
  std::vector<double> values;
  double x = 0.0;
  double y = 0.0;
  std::uint32_t source_image = 0;
  std::optional<std::uint32_t> class_id;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

constexpr double kZeroVectorNorm = 1e-12;

// Unit-normalizes the vector; position and labels are unchanged. Dead
// (all-zero) pixels signal ZeroVector so callers can skip them.
inline PixelVector normalize(const PixelVector& v) {
  double n = l2_norm(v.values);
  if (n < kZeroVectorNorm) raise(Errc::zero_vector, "cannot normalize near-zero activation vector");
  PixelVector out = v;
  for (double& x : out.values) x /= n;
  return out;
}

// Per-pixel squared L2 norm over channels (the scalar activation energy).
struct EnergyMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major (row, col)

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

inline EnergyMap energy_map(const ActivationImage& img) {
  EnergyMap map;
  map.width = img.width;
  map.height = img.height;
  map.values.resize(img.pixel_count());
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double s = 0.0;
      for (float v : img.pixel(r, c)) s += static_cast<double>(v) * v;
      map.values[static_cast<std::size_t>(r) * img.width + c] = s;
    }
  }
  return map;
}

// Unit pixel vector in float32, or nullopt for a dead pixel. This is the one
// extraction path shared by memory insertion and query-side pixel handling,
// so a query against a memory built from the same image hits distance zero
// exactly.
inline std::optional<std::vector<float>> unit_pixel(const ActivationImage& img, int row, int col) {
  auto px = img.pixel(row, col);
  double n2 = 0.0;
  for (float v : px) n2 += static_cast<double>(v) * v;
  double n = std::sqrt(n2);
  if (n < kZeroVectorNorm) return std::nullopt;
  std::vector<float> out(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) out[i] = static_cast<float>(px[i] / n);
  return out;
}

enum class PoolMode { avg, max, flatten };

inline const char* pool_mode_name(PoolMode m) {
  switch (m) {
    case PoolMode::avg: return "avg";
    case PoolMode::max: return "max";
    case PoolMode::flatten: return "flatten";
  }
  return "?";
}

// Whole-image descriptor alternatives to pixel vectors: channel means, channel
// maxima, or the row-major flattened tensor; the result is unit-normalized.
inline std::vector<double> pool_descriptor(const ActivationImage& img, PoolMode mode) {
  std::vector<double> d;
  switch (mode) {
    case PoolMode::avg: {
      d.assign(img.channels, 0.0);
      for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
          auto px = img.pixel(r, c);
          for (int ch = 0; ch < img.channels; ++ch) d[ch] += px[ch];
        }
      const double inv = 1.0 / static_cast<double>(img.pixel_count());
      for (double& x : d) x *= inv;
      break;
    }
    case PoolMode::max: {
      d.assign(img.channels, -std::numeric_limits<double>::infinity());
      for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
          auto px = img.pixel(r, c);
          for (int ch = 0; ch < img.channels; ++ch)
            d[ch] = std::max(d[ch], static_cast<double>(px[ch]));
        }
      break;
    }
    case PoolMode::flatten: {
      d.assign(img.data.begin(), img.data.end());
      break;
    }
  }
  double n = l2_norm(d);
  if (n < kZeroVectorNorm) raise(Errc::zero_vector, "pooled descriptor is a zero vector");
  for (double& x : d) x /= n;
  return d;
}

}  // namespace ahue
