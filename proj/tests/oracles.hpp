#pragma once

// Test-only reference implementations, deliberately independent of the
// library's computation paths: full-scan kNN, a direct transcription of the
// kernel-density likelihood, a dense Jacobi eigensolver for PCA checks, and
// central finite differences for gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/memory_index.hpp"

namespace oracle {

struct ScanHit {
  double distance2 = 0.0;
  std::uint32_t index = 0;
};

inline std::vector<ScanHit> knn_full_scan(const ahue::MemoryStore& store,
                                          std::span<const float> query, int k,
                                          std::optional<std::uint32_t> exclude_image = {}) {
  std::vector<ScanHit> all;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (exclude_image && store.image_of(i) == *exclude_image) continue;
    auto e = store.vector_of(i);
    double d2 = 0.0;
    for (std::size_t c = 0; c < e.size(); ++c) {
      const double d = static_cast<double>(query[c]) - static_cast<double>(e[c]);
      d2 += d * d;
    }
    all.push_back({d2, static_cast<std::uint32_t>(i)});
  }
  std::sort(all.begin(), all.end(), [](const ScanHit& a, const ScanHit& b) {
    if (a.distance2 != b.distance2) return a.distance2 < b.distance2;
    return a.index < b.index;
  });
  if (all.size() > static_cast<std::size_t>(k)) all.resize(static_cast<std::size_t>(k));
  return all;
}

// Unit pixel vectors of an image, rederived here (double normalize, float32
// round), with centered positions; dead pixels dropped.
struct OraclePixel {
  std::vector<float> unit;
  double x = 0.0;
  double y = 0.0;
};

inline std::vector<OraclePixel> image_pixels(const ahue::ActivationImage& img) {
  std::vector<OraclePixel> out;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double n2 = 0.0;
      for (int ch = 0; ch < img.channels; ++ch) {
        const double v = img.at(r, c, ch);
        n2 += v * v;
      }
      const double n = std::sqrt(n2);
      if (n < 1e-12) continue;
      OraclePixel px;
      px.unit.resize(img.channels);
      for (int ch = 0; ch < img.channels; ++ch)
        px.unit[ch] = static_cast<float>(img.at(r, c, ch) / n);
      px.x = c - (img.width - 1) / 2.0;
      px.y = (img.height - 1) / 2.0 - r;
      out.push_back(std::move(px));
    }
  }
  return out;
}

// Direct transcription of the kernel-density class score: for every query
// pixel, rank the whole memory by distance (ties toward the lower entry
// index), take the first K, accumulate exp(-d^2/(alpha^2+eps)) per matching
// class, and divide by the class's total memory count.
inline std::map<std::uint32_t, double> likelihood_transcription(
    const std::vector<OraclePixel>& pixels, const ahue::MemoryStore& store, int k, double eps,
    std::optional<std::uint32_t> exclude_image = {}) {
  std::map<std::uint32_t, double> score;
  std::map<std::uint32_t, double> class_count;
  for (std::size_t i = 0; i < store.size(); ++i) class_count[store.class_of(i)] += 1.0;
  for (const auto& [c, n] : class_count) score[c] = 0.0;

  for (const OraclePixel& px : pixels) {
    auto hits = knn_full_scan(store, px.unit, k, exclude_image);
    if (hits.empty()) continue;
    const double alpha2 = hits.front().distance2;
    for (const ScanHit& h : hits) {
      const double d = std::sqrt(h.distance2);
      const double f = std::exp(-(d * d) / (alpha2 + eps));
      score[store.class_of(h.index)] += f;
    }
  }
  for (auto& [c, s] : score) s /= class_count[c];
  return score;
}

// Cyclic Jacobi eigendecomposition of a dense symmetric matrix. Returns
// eigenvalues in descending order with matching eigenvectors (rows of `vecs`).
struct EigenResult {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

inline EigenResult jacobi_eigen(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-28) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  EigenResult res;
  res.values.resize(n);
  res.vectors.assign(n, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    res.values[r] = a[order[r]][order[r]];
    for (std::size_t i = 0; i < n; ++i) res.vectors[r][i] = v[i][order[r]];
  }
  return res;
}

// Central finite differences of a scalar function at x.
inline std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                               std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double analytic, double numeric, double floor_scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor_scale});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace oracle
