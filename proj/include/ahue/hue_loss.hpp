#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ahue/error.hpp"
#include "ahue/rng.hpp"

namespace ahue {

// Angular class labels on the unit circle and the combined one-hot + hue
// loss. Every class gets a label point theta_c = (cos a_c, sin a_c); the hue
// head predicts one unconstrained 2-vector, scored by softmax cross-entropy
// over negative scaled label distances. All math here is 64-bit.

enum class LabelMode { equally_spaced, random_permutation, random_angles };

inline const char* label_mode_name(LabelMode m) {
  switch (m) {
    case LabelMode::equally_spaced: return "equally_spaced";
    case LabelMode::random_permutation: return "random_permutation";
    case LabelMode::random_angles: return "random_angles";
  }
  return "?";
}

struct AngularLabelSet {
  int classes = 0;
  std::vector<std::array<double, 2>> labels;  // unit-circle points, one per class
  LabelMode mode = LabelMode::equally_spaced;
  std::uint64_t seed = 0;
};

// equally_spaced: angle 2*pi*c/M per class. random_permutation keeps that
// angle set but shuffles the class -> angle map (seeded). random_angles draws
// i.i.d. uniform angles (seeded).
inline AngularLabelSet assign_labels(int classes, LabelMode mode, std::uint64_t seed = 0) {
  if (classes < 2) raise(Errc::bad_class_count, "need at least 2 classes for angular labels");
  AngularLabelSet set;
  set.classes = classes;
  set.mode = mode;
  set.seed = seed;
  set.labels.resize(classes);
  std::vector<double> angles(classes);
  for (int c = 0; c < classes; ++c)
    angles[c] = 2.0 * std::numbers::pi * static_cast<double>(c) / classes;
  switch (mode) {
    case LabelMode::equally_spaced:
      break;
    case LabelMode::random_permutation: {
      Rng rng(derive_seed(seed, {0x6c61u /* label stream */}));
      rng.shuffle(angles);
      break;
    }
    case LabelMode::random_angles: {
      Rng rng(derive_seed(seed, {0x6c61u}));
      for (double& a : angles) a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      break;
    }
  }
  for (int c = 0; c < classes; ++c) set.labels[c] = {std::cos(angles[c]), std::sin(angles[c])};
  return set;
}

// Scaled label distance: ||theta_c - prediction|| / (2 M).
inline double dtheta(const AngularLabelSet& labels, std::array<double, 2> prediction, int c) {
  if (c < 0 || c >= labels.classes) raise(Errc::bad_class_count, "class index out of range");
  const double dx = labels.labels[c][0] - prediction[0];
  const double dy = labels.labels[c][1] - prediction[1];
  return std::sqrt(dx * dx + dy * dy) / (2.0 * labels.classes);
}

struct HueLossResult {
  double value = 0.0;
  std::array<double, 2> grad_prediction{0.0, 0.0};
};

namespace detail {

// log(sum_i exp(v_i)) with max-shift stabilization.
inline double log_sum_exp(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace detail

// Hue term of the loss: -log softmax(-dtheta)[true_class], with the analytic
// gradient w.r.t. the prediction pair. At a label-coincident prediction the
// distance is non-differentiable; that term gets subgradient 0. The
// project_to_circle flag (ablation) renormalizes the prediction onto the unit
// circle first and chains through the projection.
inline HueLossResult hue_loss(const AngularLabelSet& labels, std::array<double, 2> prediction,
                              int true_class, bool project_to_circle = false) {
  if (true_class < 0 || true_class >= labels.classes)
    raise(Errc::bad_class_count, "true class out of range");
  const int m = labels.classes;

  std::array<double, 2> p = prediction;
  double pn = 0.0;
  if (project_to_circle) {
    pn = std::sqrt(prediction[0] * prediction[0] + prediction[1] * prediction[1]);
    if (pn >= 1e-12) {
      p = {prediction[0] / pn, prediction[1] / pn};
    } else {
      project_to_circle = false;  // undefined projection at the origin; subgradient 0 path
    }
  }

  std::vector<double> d(m), neg(m);
  for (int c = 0; c < m; ++c) {
    const double dx = labels.labels[c][0] - p[0];
    const double dy = labels.labels[c][1] - p[1];
    d[c] = std::sqrt(dx * dx + dy * dy) / (2.0 * m);
    neg[c] = -d[c];
  }
  const double lse = detail::log_sum_exp(neg);

  HueLossResult out;
  out.value = d[true_class] + lse;
  // dL/d d_k = [k = true] - softmax(-d)_k; d d_k/dp = (p - theta_k) / (2 M ||p - theta_k||).
  std::array<double, 2> grad_p{0.0, 0.0};
  for (int c = 0; c < m; ++c) {
    const double soft = std::exp(neg[c] - lse);
    const double coeff = (c == true_class ? 1.0 : 0.0) - soft;
    const double ex = p[0] - labels.labels[c][0];
    const double ey = p[1] - labels.labels[c][1];
    const double en = std::sqrt(ex * ex + ey * ey);
    if (en < 1e-12) continue;  // subgradient 0 at the kink
    const double scale = coeff / (2.0 * m * en);
    grad_p[0] += scale * ex;
    grad_p[1] += scale * ey;
  }
  if (project_to_circle) {
    // Chain through p = prediction / ||prediction||: J = (I - p p^T) / ||prediction||.
    const double gp = grad_p[0] * p[0] + grad_p[1] * p[1];
    out.grad_prediction[0] = (grad_p[0] - gp * p[0]) / pn;
    out.grad_prediction[1] = (grad_p[1] - gp * p[1]) / pn;
  } else {
    out.grad_prediction = grad_p;
  }
  return out;
}

struct LossBreakdown {
  double one_hot_term = 0.0;
  double hue_term = 0.0;
  double total = 0.0;
  std::vector<double> grad_logits;
  std::array<double, 2> grad_prediction{0.0, 0.0};
};

// Combined loss: softmax cross-entropy on the logits plus the hue term, mixed
// 1:1 by default. hue_weight exists for ablations only; the reported hue_term
// is the weighted contribution so total always equals the sum of the two
// terms.
inline LossBreakdown combined_loss(std::span<const double> logits, const AngularLabelSet& labels,
                                   std::array<double, 2> prediction, int true_class,
                                   double hue_weight = 1.0, bool project_to_circle = false) {
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= logits.size())
    raise(Errc::bad_class_count, "true class out of range");
  if (logits.size() != static_cast<std::size_t>(labels.classes))
    raise(Errc::shape_mismatch, "logit count does not match label set");
  LossBreakdown out;
  const double lse = detail::log_sum_exp(logits);
  out.one_hot_term = lse - logits[true_class];
  out.grad_logits.resize(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out.grad_logits[c] = std::exp(logits[c] - lse) - (static_cast<int>(c) == true_class ? 1.0 : 0.0);
  }
  HueLossResult hue = hue_loss(labels, prediction, true_class, project_to_circle);
  out.hue_term = hue_weight * hue.value;
  out.grad_prediction = {hue_weight * hue.grad_prediction[0], hue_weight * hue.grad_prediction[1]};
  out.total = out.one_hot_term + out.hue_term;
  return out;
}

}  // namespace ahue
