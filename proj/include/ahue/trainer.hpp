#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/error.hpp"
#include "ahue/hue_loss.hpp"
#include "ahue/net.hpp"
#include "ahue/optim.hpp"
#include "ahue/rng.hpp"
#include "ahue/synth.hpp"

namespace ahue {

enum class LossMode { onehot, onehot_hue };

inline const char* loss_mode_name(LossMode m) {
  return m == LossMode::onehot ? "onehot" : "onehot_hue";
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double lr_min = 0.0;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::onehot_hue;
  LabelMode label_mode = LabelMode::random_permutation;
  int folds = 5;  // 1 disables cross-validation (train on everything)
  bool hflip = true;
  int crop_pad = 2;
  double hue_weight = 1.0;
  int hue_hidden = 0;
  bool project_to_circle = false;

  void validate() const {
    if (epochs < 1) raise(Errc::config_error, "epochs must be >= 1");
    if (batch_size < 1) raise(Errc::config_error, "batch size must be >= 1");
    if (folds < 1) raise(Errc::config_error, "folds must be >= 1 (1 disables CV)");
    if (crop_pad < 0) raise(Errc::config_error, "crop pad must be >= 0");
  }
};

struct FoldReport {
  int fold = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::vector<double> epoch_train_loss;
  double train_accuracy = 0.0;
  double train_accuracy_hue_head = 0.0;
  double val_accuracy = 0.0;           // one-hot head on the held-out fold
  double val_accuracy_hue_head = 0.0;  // nearest-label readout of the hue head
};

struct TrainReport {
  int classes = 0;
  std::size_t samples = 0;
  std::size_t parameter_count = 0;
  std::string backbone;
  std::string backbone_note;
  LossMode loss_mode = LossMode::onehot_hue;
  LabelMode label_mode = LabelMode::random_permutation;
  int epochs = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  int folds = 0;
  double hue_weight = 1.0;
  std::vector<FoldReport> fold_reports;
  double mean_val_accuracy = 0.0;
  double sd_val_accuracy = 0.0;
  double max_hue_head_grad = 0.0;  // structural check that the hue head sees gradient
};

// Horizontal flip (mirrors columns).
inline ActivationImage hflip_image(const ActivationImage& img) {
  ActivationImage out = img;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch)
        out.at(r, c, ch) = img.at(r, img.width - 1 - c, ch);
  return out;
}

// Zero-pads by `pad` pixels and crops back to the original size at the given
// offsets (each in [0, 2*pad]).
inline ActivationImage pad_crop_image(const ActivationImage& img, int pad, int off_x, int off_y) {
  if (pad == 0) return img;
  ActivationImage out = ActivationImage::zeros(img.width, img.height, img.channels, img.post_relu);
  for (int r = 0; r < img.height; ++r) {
    const int src_r = r + off_y - pad;
    if (src_r < 0 || src_r >= img.height) continue;
    for (int c = 0; c < img.width; ++c) {
      const int src_c = c + off_x - pad;
      if (src_c < 0 || src_c >= img.width) continue;
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(src_r, src_c, ch);
    }
  }
  return out;
}

// Class-stratified fold assignment: per class, seeded shuffle then round-robin
// deal, so fold sizes per class differ by at most one.
inline std::vector<int> stratified_folds(const std::vector<Sample>& data, int folds,
                                         std::uint64_t seed) {
  std::vector<int> assignment(data.size(), 0);
  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].class_id].push_back(i);
  for (auto& [class_id, members] : by_class) {
    Rng rng(derive_seed(seed, {0x666fu /* folds stream */, class_id}));
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j)
      assignment[members[j]] = static_cast<int>(j % folds);
  }
  return assignment;
}

namespace detail {

inline int argmax_class(std::span<const double> logits) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(logits.size()); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

inline int nearest_label(const AngularLabelSet& labels, std::array<double, 2> prediction) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < labels.classes; ++c) {
    const double dx = labels.labels[c][0] - prediction[0];
    const double dy = labels.labels[c][1] - prediction[1];
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

struct EvalResult {
  double accuracy = 0.0;
  double hue_accuracy = 0.0;
};

inline EvalResult evaluate(const TinyNet& net, const AngularLabelSet& labels,
                           const std::vector<Sample>& data, std::span<const std::size_t> subset) {
  EvalResult res;
  if (subset.empty()) return res;
  std::size_t hits = 0, hue_hits = 0;
  for (std::size_t idx : subset) {
    auto cache = net.forward(data[idx].image);
    if (argmax_class(cache.logits) == static_cast<int>(data[idx].class_id)) ++hits;
    if (nearest_label(labels, cache.hue_prediction) == static_cast<int>(data[idx].class_id))
      ++hue_hits;
  }
  res.accuracy = static_cast<double>(hits) / subset.size();
  res.hue_accuracy = static_cast<double>(hue_hits) / subset.size();
  return res;
}

}  // namespace detail

// Trains one fold; `holdout` may be empty (then validation metrics are 0).
// Deterministic given the seed: fixed iteration order, counter-derived
// augmentation draws, fixed-order batch reduction.
inline FoldReport train_fold(const std::vector<Sample>& data,
                             const std::vector<std::size_t>& train_idx,
                             const std::vector<std::size_t>& val_idx, int fold,
                             const TrainConfig& cfg, const AngularLabelSet& labels, int classes,
                             TinyNet& net, double& max_hue_grad) {
  Adam adam(net.parameter_count(), {.learning_rate = cfg.learning_rate});
  std::vector<double> batch_grads(net.parameter_count());
  std::vector<double> delta(net.parameter_count());

  FoldReport report;
  report.fold = fold;
  report.train_samples = train_idx.size();
  report.val_samples = val_idx.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_learning_rate(cosine_annealed_lr(cfg.learning_rate, cfg.lr_min, epoch, cfg.epochs));
    std::vector<std::size_t> order = train_idx;
    Rng shuffle_rng(derive_seed(cfg.seed, {0x7368u /* shuffle stream */,
                                           static_cast<std::uint64_t>(fold),
                                           static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(batch_grads.begin(), batch_grads.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& sample = data[order[i]];
        Rng aug_rng(derive_seed(cfg.seed, {0x6175u /* augment stream */,
                                           static_cast<std::uint64_t>(fold),
                                           static_cast<std::uint64_t>(epoch),
                                           static_cast<std::uint64_t>(sample.image_id)}));
        ActivationImage img = sample.image;
        if (cfg.hflip && aug_rng.uniform() < 0.5) img = hflip_image(img);
        if (cfg.crop_pad > 0) {
          const int ox = static_cast<int>(aug_rng.uniform_index(2 * cfg.crop_pad + 1));
          const int oy = static_cast<int>(aug_rng.uniform_index(2 * cfg.crop_pad + 1));
          img = pad_crop_image(img, cfg.crop_pad, ox, oy);
        }

        auto cache = net.forward(img);
        LossBreakdown loss =
            combined_loss(cache.logits, labels, cache.hue_prediction,
                          static_cast<int>(sample.class_id), cfg.hue_weight,
                          cfg.project_to_circle);
        if (cfg.loss_mode == LossMode::onehot) {
          loss.total = loss.one_hot_term;
          loss.hue_term = 0.0;
          loss.grad_prediction = {0.0, 0.0};
        }
        if (!std::isfinite(loss.total))
          raise(Errc::not_finite, "loss diverged at fold " + std::to_string(fold) + ", epoch " +
                                      std::to_string(epoch) + ", sample " +
                                      std::to_string(sample.image_id));
        epoch_loss += loss.total;
        ++seen;

        auto grads = net.backward(cache, loss.grad_logits, loss.grad_prediction);
        const double inv = 1.0 / static_cast<double>(end - start);
        for (std::size_t g = 0; g < grads.size(); ++g) batch_grads[g] += inv * grads[g];
        max_hue_grad = std::max(max_hue_grad, net.max_hue_head_grad(grads));
      }
      adam.step(batch_grads, delta);
      net.apply_update(delta);
    }
    report.epoch_train_loss.push_back(seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0);
  }

  auto train_eval = detail::evaluate(net, labels, data, train_idx);
  report.train_accuracy = train_eval.accuracy;
  report.train_accuracy_hue_head = train_eval.hue_accuracy;
  auto val_eval = detail::evaluate(net, labels, data, val_idx);
  report.val_accuracy = val_eval.accuracy;
  report.val_accuracy_hue_head = val_eval.hue_accuracy;
  (void)classes;
  return report;
}

inline TrainReport train(const std::vector<Sample>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) raise(Errc::config_error, "dataset is empty");

  int classes = 0;
  for (const Sample& s : data) classes = std::max(classes, static_cast<int>(s.class_id) + 1);
  if (classes < 2) raise(Errc::config_error, "need at least 2 classes to train");

  const AngularLabelSet labels =
      assign_labels(classes, cfg.label_mode, derive_seed(cfg.seed, {0x6c6273u}));

  TrainReport report;
  report.classes = classes;
  report.samples = data.size();
  report.loss_mode = cfg.loss_mode;
  report.label_mode = cfg.label_mode;
  report.epochs = cfg.epochs;
  report.batch_size = cfg.batch_size;
  report.learning_rate = cfg.learning_rate;
  report.seed = cfg.seed;
  report.folds = cfg.folds;
  report.hue_weight = cfg.hue_weight;

  TinyNetConfig net_cfg;
  net_cfg.in_channels = data.front().image.channels;
  net_cfg.classes = classes;
  net_cfg.hue_hidden = cfg.hue_hidden;

  std::vector<int> fold_of;
  if (cfg.folds > 1) fold_of = stratified_folds(data, cfg.folds, cfg.seed);

  const int fold_count = cfg.folds > 1 ? cfg.folds : 1;
  for (int fold = 0; fold < fold_count; ++fold) {
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (cfg.folds > 1 && fold_of[i] == fold) {
        val_idx.push_back(i);
      } else {
        train_idx.push_back(i);
      }
    }
    TinyNet net(net_cfg, derive_seed(cfg.seed, {0x696eu /* init stream */,
                                                static_cast<std::uint64_t>(fold)}));
    report.parameter_count = net.parameter_count();
    report.fold_reports.push_back(train_fold(data, train_idx, val_idx, fold, cfg, labels, classes,
                                             net, report.max_hue_head_grad));
  }

  report.backbone = "conv3x3x16-pool2-conv3x3x32-pool2-gap32";
  report.backbone_note =
      "desk-scale backbone for exercising the loss; accuracies are not comparable to "
      "large-scale baselines";

  if (cfg.folds > 1) {
    double mean = 0.0;
    for (const auto& f : report.fold_reports) mean += f.val_accuracy;
    mean /= report.fold_reports.size();
    double var = 0.0;
    for (const auto& f : report.fold_reports)
      var += (f.val_accuracy - mean) * (f.val_accuracy - mean);
    var /= report.fold_reports.size();
    report.mean_val_accuracy = mean;
    report.sd_val_accuracy = std::sqrt(var);
  }
  return report;
}

}  // namespace ahue
