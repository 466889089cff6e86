#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/error.hpp"
#include "ahue/memory_index.hpp"

namespace ahue {

// Adaptive-bandwidth similarity kernel: exp(-d^2 / (alpha^2 + epsilon)),
// with alpha the query pixel's distance to its nearest memory vector. The
// rank-1 neighbor therefore scores exp(-alpha^2/(alpha^2+eps)) ~ 1/e, and
// exactly 1 when alpha = 0.
inline double kernel(double distance, double alpha, double epsilon) {
  return std::exp(-(distance * distance) / (alpha * alpha + epsilon));
}

struct LikelihoodParams {
  int k = 10;
  double epsilon = 1e-8;
  std::optional<SearchMode> mode;
  std::optional<std::uint32_t> exclude_image;  // leave-one-out evaluation
  int threads = 1;
};

// Per-class likelihood scores. Scores are unnormalized (the defining sum is
// stated only up to proportionality); only the argmax is meaningful.
struct ClassLikelihoodTable {
  std::map<std::uint32_t, double> scores;  // classes present in memory only
  std::uint32_t decision = 0;
  double epsilon = 0.0;
  int k = 0;

  void decide() {
    bool first = true;
    double best = 0.0;
    for (const auto& [class_id, score] : scores) {  // ascending class_id: ties keep the lowest
      if (first || score > best) {
        best = score;
        decision = class_id;
        first = false;
      }
    }
  }
};

struct PixelMatch {
  std::uint32_t entry = 0;
  double distance = 0.0;
  double kernel_value = 0.0;
};

struct PixelMatchSet {
  double query_x = 0.0;
  double query_y = 0.0;
  double alpha = 0.0;
  std::vector<PixelMatch> matches;
};

namespace detail {

inline PixelMatchSet match_one(const MemoryStore& store, std::span<const float> unit,
                               double qx, double qy, const LikelihoodParams& params) {
  QueryOptions opts;
  opts.mode = params.mode;
  opts.exclude_image = params.exclude_image;
  KnnResult knn = store.query_knn(unit, params.k, opts);
  PixelMatchSet set;
  set.query_x = qx;
  set.query_y = qy;
  set.alpha = knn.alpha;
  set.matches.reserve(knn.neighbors.size());
  for (const Neighbor& nb : knn.neighbors) {
    set.matches.push_back({nb.index, nb.distance, kernel(nb.distance, knn.alpha, params.epsilon)});
  }
  return set;
}

}  // namespace detail

// K-NN matches with kernel values for every live pixel of the query image.
// Pixel queries may run concurrently; results are stored per pixel and any
// downstream accumulation walks them in fixed pixel order, so the outcome is
// independent of the thread count.
inline std::vector<PixelMatchSet> match_pixels(const ActivationImage& query,
                                               const MemoryStore& store,
                                               const LikelihoodParams& params) {
  struct Job {
    std::vector<float> unit;
    double x, y;
  };
  std::vector<Job> jobs;
  for (int r = 0; r < query.height; ++r) {
    for (int c = 0; c < query.width; ++c) {
      auto unit = unit_pixel(query, r, c);
      if (!unit) continue;
      jobs.push_back({std::move(*unit), query.x_of(c), query.y_of(r)});
    }
  }
  if (jobs.empty()) raise(Errc::empty_query, "query image has no live pixels");

  std::vector<PixelMatchSet> sets(jobs.size());
  const int threads = std::max(1, params.threads);
  if (threads == 1 || jobs.size() < 2) {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      sets[i] = detail::match_one(store, jobs[i].unit, jobs[i].x, jobs[i].y, params);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
          sets[i] = detail::match_one(store, jobs[i].unit, jobs[i].x, jobs[i].y, params);
      });
    }
    for (auto& th : pool) th.join();
  }
  return sets;
}

// Kernel-density class scores: sum of kernel values of same-class neighbors
// over all query pixels, divided by the class's whole-memory entry count.
// Accumulation is 64-bit in fixed (pixel, neighbor rank) order.
inline ClassLikelihoodTable likelihood_from_matches(const std::vector<PixelMatchSet>& sets,
                                                    const MemoryStore& store,
                                                    const LikelihoodParams& params) {
  ClassLikelihoodTable table;
  table.epsilon = params.epsilon;
  table.k = params.k;
  for (const auto& [class_id, count] : store.class_counts()) {
    (void)count;
    table.scores[class_id] = 0.0;
  }
  for (const PixelMatchSet& set : sets) {
    for (const PixelMatch& m : set.matches) {
      table.scores[store.class_of(m.entry)] += m.kernel_value;
    }
  }
  for (auto& [class_id, score] : table.scores) {
    score /= static_cast<double>(store.class_count(class_id));
  }
  table.decide();
  return table;
}

inline ClassLikelihoodTable likelihood(const ActivationImage& query, const MemoryStore& store,
                                       const LikelihoodParams& params = {}) {
  return likelihood_from_matches(match_pixels(query, store, params), store, params);
}

inline std::uint32_t classify(const ActivationImage& query, const MemoryStore& store,
                              const LikelihoodParams& params = {}) {
  return likelihood(query, store, params).decision;
}

// Same pipeline over whole-image descriptors (one vector per image, W*H = 1).
inline ClassLikelihoodTable likelihood_pooled(std::span<const float> descriptor,
                                              const MemoryStore& store,
                                              const LikelihoodParams& params = {}) {
  PixelMatchSet set = detail::match_one(store, descriptor, 0.0, 0.0, params);
  return likelihood_from_matches({set}, store, params);
}

inline std::uint32_t classify_pooled(std::span<const float> descriptor, const MemoryStore& store,
                                     const LikelihoodParams& params = {}) {
  return likelihood_pooled(descriptor, store, params).decision;
}

}  // namespace ahue
