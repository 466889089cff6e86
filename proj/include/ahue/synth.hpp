#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "ahue/activation.hpp"
#include "ahue/error.hpp"
#include "ahue/rng.hpp"

namespace ahue {

// Synthetic activation images with planted class structure: every class owns
// a distinct channel mix ("color") and a distinct angular position on a ring
// around the image center. A shared center blob (same color for all classes)
// concentrates energy at the center and acts as a pooled-descriptor
// distractor. Values go through a soft threshold so most background pixels
// are exactly zero, like post-relu dead activations.
struct SynthSpec {
  int classes = 8;
  int width = 16;
  int height = 16;
  int channels = 3;
  int per_class = 100;
  double ring_radius = 4.5;            // class blob center distance from image center (px)
  double blob_sigma = 1.8;             // class blob spread (px)
  double angle_jitter = 0.15;          // per-sample jitter of the planted angle (rad)
  double class_amplitude_min = 0.3;    // per-sample class blob strength, drawn uniformly
  double class_amplitude_max = 1.0;
  double center_amplitude = 3.5;       // shared distractor blob; 0 disables
  double center_amplitude_jitter = 0.3;  // relative per-sample variation
  double center_sigma = 1.9;
  double noise_sigma = 0.08;
  double relu_bias = 0.20;             // threshold subtracted before clamping at 0
  std::vector<double> planted_angles;  // empty = 2*pi*c/classes

  double angle_of(int class_id) const {
    if (!planted_angles.empty()) return planted_angles[class_id];
    return 2.0 * std::numbers::pi * static_cast<double>(class_id) / classes;
  }

  void validate() const {
    if (classes < 1 || per_class < 1) raise(Errc::config_error, "need classes and samples");
    if (width <= 0 || height <= 0 || channels <= 0)
      raise(Errc::config_error, "bad synthetic image dims");
    if (!planted_angles.empty() && planted_angles.size() != static_cast<std::size_t>(classes))
      raise(Errc::config_error, "planted_angles must have one entry per class");
  }
};

struct Sample {
  ActivationImage image;
  std::uint32_t class_id = 0;
  std::uint32_t image_id = 0;
};

// Distinct non-negative unit channel mix per class (a hue-wheel color for
// N = 3, the same construction for other channel counts).
inline std::vector<double> synth_class_color(int class_id, int classes, int channels) {
  const double phi = 2.0 * std::numbers::pi * static_cast<double>(class_id) / classes;
  std::vector<double> color(channels);
  double n2 = 0.0;
  for (int ch = 0; ch < channels; ++ch) {
    const double a = phi - 2.0 * std::numbers::pi * static_cast<double>(ch) / channels;
    color[ch] = 0.25 + 0.75 * 0.5 * (1.0 + std::cos(a));
    n2 += color[ch] * color[ch];
  }
  for (double& c : color) c /= std::sqrt(n2);
  return color;
}

inline std::vector<Sample> synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const double inv_n = 1.0 / std::sqrt(static_cast<double>(spec.channels));
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(spec.classes) * spec.per_class);
  for (int c = 0; c < spec.classes; ++c) {
    const auto color = synth_class_color(c, spec.classes, spec.channels);
    for (int s = 0; s < spec.per_class; ++s) {
      Rng rng(derive_seed(seed, {0x7379u /* synth stream */, static_cast<std::uint64_t>(c),
                                 static_cast<std::uint64_t>(s)}));
      Sample sample;
      sample.class_id = static_cast<std::uint32_t>(c);
      sample.image_id = static_cast<std::uint32_t>(c * spec.per_class + s);
      sample.image = ActivationImage::zeros(spec.width, spec.height, spec.channels, true);

      const double angle = spec.angle_of(c) + rng.normal(0.0, spec.angle_jitter);
      const double cx = spec.ring_radius * std::cos(angle);
      const double cy = spec.ring_radius * std::sin(angle);
      // Per-sample mixture: pooled descriptors collapse the class-blob to
      // center-blob mass ratio, pixel vectors do not see it at all.
      const double class_amp = rng.uniform(spec.class_amplitude_min, spec.class_amplitude_max);
      const double center_amp =
          spec.center_amplitude *
          rng.uniform(1.0 - spec.center_amplitude_jitter, 1.0 + spec.center_amplitude_jitter);
      // The threshold acts on blob intensities before channel mixing, so a
      // pixel is either fully dead or alive in every channel; single-channel
      // survivors would all collapse to the same axis unit vector. Noise is
      // multiplicative per channel, keeping live directions distinct.
      for (int r = 0; r < spec.height; ++r) {
        for (int col = 0; col < spec.width; ++col) {
          const double px = sample.image.x_of(col);
          const double py = sample.image.y_of(r);
          const double dc2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
          const double blob = std::max(
              0.0, class_amp * std::exp(-dc2 / (2.0 * spec.blob_sigma * spec.blob_sigma)) -
                       spec.relu_bias);
          const double center = std::max(
              0.0, center_amp * std::exp(-(px * px + py * py) /
                                         (2.0 * spec.center_sigma * spec.center_sigma)) -
                       spec.relu_bias);
          for (int ch = 0; ch < spec.channels; ++ch) {
            const double gain =
                spec.noise_sigma > 0.0 ? std::max(0.0, 1.0 + rng.normal(0.0, spec.noise_sigma))
                                       : 1.0;
            const double raw = (blob * color[ch] + center * inv_n) * gain;
            sample.image.at(r, col, ch) = static_cast<float>(raw);
          }
        }
      }
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

}  // namespace ahue
