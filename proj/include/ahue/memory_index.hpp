#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/error.hpp"
#include "ahue/rng.hpp"

namespace ahue {

struct InsertStats {
  std::size_t inserted = 0;
  std::size_t skipped_zero = 0;
};

enum class SearchMode { exact, tree };

// Randomized projection forest: each tree splits on a random hyperplane at
// the projection median, down to leaf_size entries. Queries run a best-first
// search over all trees ordered by split margin, then rank the gathered
// candidates exactly. Approximation quality is a recall criterion, not
// equivalence with the exact path.
struct TreeConfig {
  int trees = 32;
  int leaf_size = 32;
  std::uint64_t seed = 0;
  // Distinct candidate entries to gather per query; 0 picks
  // max(512, 8 * k * trees) at query time.
  int search_budget = 0;
};

struct Neighbor {
  std::uint32_t index = 0;
  double distance = 0.0;
};

struct KnnResult {
  std::vector<Neighbor> neighbors;  // non-decreasing (distance, index)
  double alpha = 0.0;               // distance of the rank-1 neighbor
  bool k_capped = false;            // requested K exceeded the searchable set
};

struct QueryOptions {
  std::optional<SearchMode> mode;              // default: tree when a forest exists
  std::optional<std::uint32_t> exclude_image;  // leave-one-out evaluation
  int search_budget = 0;                       // 0 = TreeConfig value / auto
};

namespace detail {

struct TreeNode {
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  float threshold = 0.0f;
  std::vector<float> direction;      // empty for leaves
  std::vector<std::uint32_t> items;  // leaf payload

  bool leaf() const { return direction.empty(); }
};

}  // namespace detail

// Frozen memory of unit-normalized labeled pixel vectors. Build phase is
// exclusive; after freeze() the store is immutable and concurrent queries are
// safe (query paths keep no caches and mutate nothing).
class MemoryStore {
 public:
  explicit MemoryStore(int channels) : channels_(channels) {
    if (channels <= 0) raise(Errc::invalid_dims, "channel count must be positive");
  }

  int channels() const { return channels_; }
  std::size_t size() const { return xs_.size(); }
  bool frozen() const { return frozen_; }
  bool has_forest() const { return !trees_.empty(); }
  const TreeConfig& tree_config() const { return tree_config_; }

  // Appends every live pixel of the image as a unit vector with its centered
  // position; dead (all-zero) pixels are skipped and counted, never
  // normalized.
  InsertStats insert(const ActivationImage& img, std::uint32_t class_id, std::uint32_t image_id) {
    if (frozen_) raise(Errc::frozen_store, "store is frozen; no inserts allowed");
    if (img.channels != channels_)
      raise(Errc::shape_mismatch, "image channels " + std::to_string(img.channels) +
                                      " != store channels " + std::to_string(channels_));
    InsertStats stats;
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        auto unit = unit_pixel(img, r, c);
        if (!unit) {
          ++stats.skipped_zero;
          continue;
        }
        append_entry(*unit, static_cast<float>(img.x_of(c)), static_cast<float>(img.y_of(r)),
                     class_id, image_id);
        ++stats.inserted;
      }
    }
    return stats;
  }

  // Single-vector insert for descriptor stores (one vector per image).
  void insert_vector(std::span<const float> unit_values, float x, float y, std::uint32_t class_id,
                     std::uint32_t image_id) {
    if (frozen_) raise(Errc::frozen_store, "store is frozen; no inserts allowed");
    if (unit_values.size() != static_cast<std::size_t>(channels_))
      raise(Errc::shape_mismatch, "vector dimension does not match store channels");
    check_unit(unit_values);
    append_entry(unit_values, x, y, class_id, image_id);
  }

  void freeze() {
    if (size() == 0) raise(Errc::empty_store, "cannot freeze an empty store");
    frozen_ = true;
  }

  void freeze(const TreeConfig& cfg) {
    if (size() == 0) raise(Errc::empty_store, "cannot freeze an empty store");
    if (cfg.trees <= 0 || cfg.leaf_size <= 0)
      raise(Errc::config_error, "tree count and leaf size must be positive");
    tree_config_ = cfg;
    build_forest();
    frozen_ = true;
  }

  std::size_t class_count(std::uint32_t class_id) const {
    require_frozen();
    auto it = class_counts_.find(class_id);
    return it == class_counts_.end() ? 0 : it->second;
  }

  const std::map<std::uint32_t, std::size_t>& class_counts() const {
    require_frozen();
    return class_counts_;
  }

  KnnResult query_knn(std::span<const float> query, int k, const QueryOptions& opts = {}) const {
    require_frozen();
    if (k < 1) raise(Errc::config_error, "k must be >= 1");
    if (query.size() != static_cast<std::size_t>(channels_))
      raise(Errc::shape_mismatch, "query dimension does not match store channels");
    check_unit(query);
    const SearchMode mode = opts.mode.value_or(has_forest() ? SearchMode::tree : SearchMode::exact);
    if (mode == SearchMode::tree && !has_forest())
      raise(Errc::config_error, "store was frozen without a tree index");

    std::vector<double> q(query.begin(), query.end());
    std::vector<std::pair<double, std::uint32_t>> hits;  // (squared distance, index)
    if (mode == SearchMode::exact) {
      hits = exact_candidates(q, k, opts.exclude_image);
    } else {
      hits = tree_candidates(q, k, opts);
    }

    KnnResult result;
    result.k_capped = hits.size() < static_cast<std::size_t>(k);
    result.neighbors.reserve(hits.size());
    for (const auto& [d2, idx] : hits) result.neighbors.push_back({idx, std::sqrt(d2)});
    result.alpha = result.neighbors.empty() ? 0.0 : result.neighbors.front().distance;
    return result;
  }

  std::span<const float> vector_of(std::size_t i) const {
    return {vectors_.data() + i * channels_, static_cast<std::size_t>(channels_)};
  }
  float x_of(std::size_t i) const { return xs_[i]; }
  float y_of(std::size_t i) const { return ys_[i]; }
  std::uint32_t class_of(std::size_t i) const { return classes_[i]; }
  std::uint32_t image_of(std::size_t i) const { return images_[i]; }

  const std::vector<std::vector<detail::TreeNode>>& forest() const { return trees_; }

  // Reassembles a store from persisted parts (see io.hpp). Entries must
  // already be unit vectors.
  static MemoryStore from_parts(int channels, std::vector<float> vectors, std::vector<float> xs,
                                std::vector<float> ys, std::vector<std::uint32_t> classes,
                                std::vector<std::uint32_t> images,
                                std::vector<std::vector<detail::TreeNode>> trees,
                                TreeConfig tree_config) {
    MemoryStore store(channels);
    store.vectors_ = std::move(vectors);
    store.xs_ = std::move(xs);
    store.ys_ = std::move(ys);
    store.classes_ = std::move(classes);
    store.images_ = std::move(images);
    store.trees_ = std::move(trees);
    store.tree_config_ = tree_config;
    for (std::uint32_t c : store.classes_) ++store.class_counts_[c];
    if (store.size() == 0) raise(Errc::empty_store, "persisted store holds no entries");
    store.frozen_ = true;
    return store;
  }

 private:
  void require_frozen() const {
    if (!frozen_) raise(Errc::not_frozen, "store must be frozen before queries");
  }

  static void check_unit(std::span<const float> v) {
    double n2 = 0.0;
    for (float x : v) n2 += static_cast<double>(x) * x;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
      raise(Errc::bad_query_norm, "vector norm deviates from 1 by more than 1e-6");
  }

  void append_entry(std::span<const float> values, float x, float y, std::uint32_t class_id,
                    std::uint32_t image_id) {
    vectors_.insert(vectors_.end(), values.begin(), values.end());
    xs_.push_back(x);
    ys_.push_back(y);
    classes_.push_back(class_id);
    images_.push_back(image_id);
    ++class_counts_[class_id];
  }

  double squared_distance(std::span<const double> q, std::size_t entry) const {
    const float* e = vectors_.data() + entry * channels_;
    double s = 0.0;
    for (int c = 0; c < channels_; ++c) {
      const double d = q[c] - static_cast<double>(e[c]);
      s += d * d;
    }
    return s;
  }

  // Top-k selection with ties broken toward the lower entry index.
  std::vector<std::pair<double, std::uint32_t>> exact_candidates(
      std::span<const double> q, int k, std::optional<std::uint32_t> exclude_image) const {
    std::priority_queue<std::pair<double, std::uint32_t>> worst_first;
    for (std::size_t i = 0; i < size(); ++i) {
      if (exclude_image && images_[i] == *exclude_image) continue;
      const double d2 = squared_distance(q, i);
      std::pair<double, std::uint32_t> cand{d2, static_cast<std::uint32_t>(i)};
      if (worst_first.size() < static_cast<std::size_t>(k)) {
        worst_first.push(cand);
      } else if (cand < worst_first.top()) {
        worst_first.pop();
        worst_first.push(cand);
      }
    }
    std::vector<std::pair<double, std::uint32_t>> hits;
    hits.resize(worst_first.size());
    for (std::size_t i = hits.size(); i-- > 0;) {
      hits[i] = worst_first.top();
      worst_first.pop();
    }
    return hits;
  }

  std::vector<std::pair<double, std::uint32_t>> tree_candidates(std::span<const double> q, int k,
                                                                const QueryOptions& opts) const {
    int budget = opts.search_budget > 0 ? opts.search_budget : tree_config_.search_budget;
    if (budget <= 0) budget = std::max(512, 8 * k * tree_config_.trees);

    // Best-first over all trees: priority is the smallest split margin seen on
    // the path, so barely-missed subtrees are revisited before distant ones.
    struct Frontier {
      double priority;
      std::uint32_t tree;
      std::uint32_t node;
      bool operator<(const Frontier& o) const { return priority < o.priority; }
    };
    std::priority_queue<Frontier> frontier;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    for (std::uint32_t t = 0; t < trees_.size(); ++t) frontier.push({kInf, t, 0});

    std::vector<std::uint8_t> seen(size(), 0);
    std::vector<std::uint32_t> candidates;
    candidates.reserve(static_cast<std::size_t>(budget));
    while (!frontier.empty() && candidates.size() < static_cast<std::size_t>(budget)) {
      const Frontier f = frontier.top();
      frontier.pop();
      const detail::TreeNode& node = trees_[f.tree][f.node];
      if (node.leaf()) {
        for (std::uint32_t item : node.items) {
          if (seen[item]) continue;
          seen[item] = 1;
          if (opts.exclude_image && images_[item] == *opts.exclude_image) continue;
          candidates.push_back(item);
        }
        continue;
      }
      double proj = 0.0;
      for (int c = 0; c < channels_; ++c) proj += q[c] * static_cast<double>(node.direction[c]);
      const double margin = proj - static_cast<double>(node.threshold);
      frontier.push({std::min(f.priority, -margin), f.tree, node.left});
      frontier.push({std::min(f.priority, margin), f.tree, node.right});
    }

    std::vector<std::pair<double, std::uint32_t>> hits;
    hits.reserve(candidates.size());
    for (std::uint32_t i : candidates) hits.emplace_back(squared_distance(q, i), i);
    std::sort(hits.begin(), hits.end());
    if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
    return hits;
  }

  void build_forest() {
    trees_.assign(tree_config_.trees, {});
    std::vector<std::uint32_t> all(size());
    for (std::size_t i = 0; i < size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    for (int t = 0; t < tree_config_.trees; ++t) {
      std::uint32_t node_seq = 0;
      build_node(trees_[t], all, t, node_seq);
    }
  }

  std::uint32_t build_node(std::vector<detail::TreeNode>& nodes, std::vector<std::uint32_t> items,
                           int tree_index, std::uint32_t& node_seq) {
    const std::uint32_t my_index = static_cast<std::uint32_t>(nodes.size());
    nodes.emplace_back();
    const std::uint32_t my_seq = node_seq++;

    if (items.size() <= static_cast<std::size_t>(tree_config_.leaf_size)) {
      nodes[my_index].items = std::move(items);
      return my_index;
    }

    Rng rng(derive_seed(tree_config_.seed, {0x7472u /* split stream */,
                                            static_cast<std::uint64_t>(tree_index), my_seq}));
    std::vector<float> direction(channels_);
    double norm2 = 0.0;
    for (int c = 0; c < channels_; ++c) {
      direction[c] = static_cast<float>(rng.normal());
      norm2 += static_cast<double>(direction[c]) * direction[c];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(std::max(norm2, 1e-300)));
    for (float& d : direction) d *= inv;

    std::vector<float> projections(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const float* e = vectors_.data() + static_cast<std::size_t>(items[i]) * channels_;
      double p = 0.0;
      for (int c = 0; c < channels_; ++c) p += static_cast<double>(direction[c]) * e[c];
      projections[i] = static_cast<float>(p);
    }
    std::vector<float> sorted = projections;
    std::sort(sorted.begin(), sorted.end());
    const float threshold =
        0.5f * (sorted[(sorted.size() - 1) / 2] + sorted[sorted.size() / 2]);

    std::vector<std::uint32_t> left_items, right_items;
    for (std::size_t i = 0; i < items.size(); ++i) {
      (projections[i] < threshold ? left_items : right_items).push_back(items[i]);
    }
    if (left_items.empty() || right_items.empty()) {
      // Degenerate split (duplicated vectors); stop here.
      nodes[my_index].items = std::move(items);
      return my_index;
    }

    nodes[my_index].direction = std::move(direction);
    nodes[my_index].threshold = threshold;
    const std::uint32_t left = build_node(nodes, std::move(left_items), tree_index, node_seq);
    const std::uint32_t right = build_node(nodes, std::move(right_items), tree_index, node_seq);
    nodes[my_index].left = left;
    nodes[my_index].right = right;
    return my_index;
  }

  int channels_;
  bool frozen_ = false;
  std::vector<float> vectors_;
  std::vector<float> xs_;
  std::vector<float> ys_;
  std::vector<std::uint32_t> classes_;
  std::vector<std::uint32_t> images_;
  std::map<std::uint32_t, std::size_t> class_counts_;
  std::vector<std::vector<detail::TreeNode>> trees_;
  TreeConfig tree_config_;
};

}  // namespace ahue
