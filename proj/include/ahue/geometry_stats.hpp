#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/classifier.hpp"
#include "ahue/error.hpp"
#include "ahue/memory_index.hpp"

namespace ahue {

// Quantitative versions of the match-geometry observations: where nearest
// neighbor matches land in the image plane, how concentrated their angles
// are per class, and how displacement variance splits into radial vs
// tangential components about the image center.

struct MatchRecord {
  double query_x = 0.0;
  double query_y = 0.0;
  double match_x = 0.0;
  double match_y = 0.0;
  bool same_class = false;
  double kernel_value = 0.0;
  std::uint32_t query_image = 0;
  std::uint32_t match_image = 0;
  std::uint32_t query_class = 0;
  std::uint32_t match_class = 0;
};

struct QueryImage {
  const ActivationImage* image = nullptr;
  std::uint32_t class_id = 0;
  std::uint32_t image_id = 0;
};

// One record per (live query pixel, retrieved neighbor) pair. With
// leave_one_out set, matches into the query's own image are excluded.
inline std::vector<MatchRecord> collect_matches(std::span<const QueryImage> queries,
                                                const MemoryStore& store,
                                                const LikelihoodParams& params = {},
                                                bool leave_one_out = false) {
  std::vector<MatchRecord> records;
  for (const QueryImage& q : queries) {
    LikelihoodParams p = params;
    if (leave_one_out) p.exclude_image = q.image_id;
    auto sets = match_pixels(*q.image, store, p);
    for (const PixelMatchSet& set : sets) {
      for (const PixelMatch& m : set.matches) {
        MatchRecord rec;
        rec.query_x = set.query_x;
        rec.query_y = set.query_y;
        rec.match_x = store.x_of(m.entry);
        rec.match_y = store.y_of(m.entry);
        rec.query_class = q.class_id;
        rec.match_class = store.class_of(m.entry);
        rec.same_class = rec.query_class == rec.match_class;
        rec.kernel_value = m.kernel_value;
        rec.query_image = q.image_id;
        rec.match_image = store.image_of(m.entry);
        records.push_back(rec);
      }
    }
  }
  return records;
}

enum class MatchFilter { same, different, all };

inline bool match_filter_accepts(MatchFilter f, const MatchRecord& r) {
  switch (f) {
    case MatchFilter::same: return r.same_class;
    case MatchFilter::different: return !r.same_class;
    case MatchFilter::all: return true;
  }
  return false;
}

inline const char* match_filter_name(MatchFilter f) {
  switch (f) {
    case MatchFilter::same: return "same";
    case MatchFilter::different: return "different";
    case MatchFilter::all: return "all";
  }
  return "?";
}

struct Histogram2D {
  int bins_x = 0;
  int bins_y = 0;
  double half_width = 0.0;   // histogram spans [-half_width, half_width]
  double half_height = 0.0;
  std::vector<std::int64_t> counts;  // row-major, y descending to match image layout
  std::int64_t total = 0;

  std::int64_t at(int by, int bx) const { return counts[static_cast<std::size_t>(by) * bins_x + bx]; }
};

// Counts of match positions over a bins_x x bins_y grid. The extent defaults
// to pixel-box edges of a W x H image: half extent (W)/2 covers centered
// coordinates in [-(W-1)/2, (W-1)/2].
inline Histogram2D location_histogram(std::span<const MatchRecord> records, MatchFilter filter,
                                      int bins_x, int bins_y, double half_width,
                                      double half_height) {
  if (bins_x < 1 || bins_y < 1) raise(Errc::config_error, "histogram needs at least one bin");
  if (half_width <= 0.0 || half_height <= 0.0)
    raise(Errc::config_error, "histogram extent must be positive");
  Histogram2D h;
  h.bins_x = bins_x;
  h.bins_y = bins_y;
  h.half_width = half_width;
  h.half_height = half_height;
  h.counts.assign(static_cast<std::size_t>(bins_x) * bins_y, 0);
  auto bin_of = [](double v, double half, int bins) {
    int b = static_cast<int>(std::floor((v + half) / (2.0 * half) * bins));
    return std::clamp(b, 0, bins - 1);
  };
  for (const MatchRecord& r : records) {
    if (!match_filter_accepts(filter, r)) continue;
    const int bx = bin_of(r.match_x, half_width, bins_x);
    const int by = bin_of(-r.match_y, half_height, bins_y);  // y up -> top row first
    ++h.counts[static_cast<std::size_t>(by) * bins_x + bx];
    ++h.total;
  }
  return h;
}

struct CircularSummary {
  std::optional<double> mean_angle;  // absent when the resultant vanishes
  double resultant_length = 0.0;     // R in [0, 1]
  std::size_t count = 0;
  std::size_t skipped_center = 0;    // records with no defined angle
};

enum class AngleWeight { uniform, kernel };

constexpr double kResultantEps = 1e-9;

// Weighted circular mean over arbitrary (angle, weight) pairs.
inline CircularSummary circular_mean_of_angles(std::span<const double> angles,
                                               std::span<const double> weights) {
  CircularSummary s;
  double sx = 0.0, sy = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    sx += w * std::cos(angles[i]);
    sy += w * std::sin(angles[i]);
    wsum += w;
    ++s.count;
  }
  if (s.count == 0 || wsum <= 0.0) return s;
  sx /= wsum;
  sy /= wsum;
  s.resultant_length = std::min(1.0, std::sqrt(sx * sx + sy * sy));
  if (s.resultant_length >= kResultantEps) s.mean_angle = std::atan2(sy, sx);
  return s;
}

// Circular mean of match-position angles atan2(y, x) about the image center.
// Records whose match sits exactly at the center carry no angle and are
// skipped with a counter.
inline CircularSummary circular_mean(std::span<const MatchRecord> records, AngleWeight weight,
                                     MatchFilter filter = MatchFilter::all) {
  std::vector<double> angles;
  std::vector<double> weights;
  std::size_t skipped = 0;
  for (const MatchRecord& r : records) {
    if (!match_filter_accepts(filter, r)) continue;
    if (r.match_x == 0.0 && r.match_y == 0.0) {
      ++skipped;
      continue;
    }
    angles.push_back(std::atan2(r.match_y, r.match_x));
    weights.push_back(weight == AngleWeight::kernel ? r.kernel_value : 1.0);
  }
  if (angles.empty()) {
    if (skipped > 0) raise(Errc::no_angular_data, "all match positions at the image center");
    CircularSummary s;
    s.skipped_center = skipped;
    return s;
  }
  CircularSummary s = circular_mean_of_angles(angles, weights);
  s.skipped_center = skipped;
  return s;
}

struct RadialTangentialVariance {
  double sigma_r2 = 0.0;  // mean squared radial displacement (px^2)
  double sigma_t2 = 0.0;  // mean squared tangential displacement (px^2)
  std::size_t count = 0;
  std::size_t skipped_center = 0;  // query at the exact center: no radial direction
};

// Splits the displacement match - query into components along the ray from the
// image center through the query pixel and perpendicular to it, and reports
// the mean squared component sizes. Displacements are deviations from the
// query location, so second moments are taken about zero; their sum equals
// the mean squared displacement exactly (per-record Pythagoras).
inline RadialTangentialVariance radial_tangential(std::span<const MatchRecord> records,
                                                  MatchFilter filter = MatchFilter::all) {
  RadialTangentialVariance v;
  double sr = 0.0, st = 0.0;
  for (const MatchRecord& r : records) {
    if (!match_filter_accepts(filter, r)) continue;
    const double qn = std::sqrt(r.query_x * r.query_x + r.query_y * r.query_y);
    if (qn == 0.0) {
      ++v.skipped_center;
      continue;
    }
    const double rx = r.query_x / qn, ry = r.query_y / qn;
    const double dx = r.match_x - r.query_x, dy = r.match_y - r.query_y;
    const double radial = dx * rx + dy * ry;
    const double tangential = -dx * ry + dy * rx;
    sr += radial * radial;
    st += tangential * tangential;
    ++v.count;
  }
  if (v.count > 0) {
    sr /= static_cast<double>(v.count);
    st /= static_cast<double>(v.count);
  }
  v.sigma_r2 = sr;
  v.sigma_t2 = st;
  return v;
}

struct ClassAngularBias {
  std::uint32_t class_id = 0;
  CircularSummary same_class;
  CircularSummary different_class;
};

// Per query class: circular mean of same-class match positions vs
// different-class match positions. A positive R gap (same above different)
// is the angular-bias signature.
inline std::vector<ClassAngularBias> angular_bias_report(std::span<const MatchRecord> records,
                                                         AngleWeight weight = AngleWeight::uniform) {
  std::map<std::uint32_t, std::vector<MatchRecord>> by_class;
  for (const MatchRecord& r : records) by_class[r.query_class].push_back(r);
  std::vector<ClassAngularBias> report;
  for (const auto& [class_id, recs] : by_class) {
    ClassAngularBias bias;
    bias.class_id = class_id;
    bias.same_class = circular_mean(recs, weight, MatchFilter::same);
    bias.different_class = circular_mean(recs, weight, MatchFilter::different);
    report.push_back(bias);
  }
  return report;
}

inline std::vector<ClassAngularBias> angular_bias_report(std::span<const QueryImage> queries,
                                                         const MemoryStore& store,
                                                         const LikelihoodParams& params = {},
                                                         AngleWeight weight = AngleWeight::uniform) {
  auto records = collect_matches(queries, store, params);
  return angular_bias_report(records, weight);
}

}  // namespace ahue
