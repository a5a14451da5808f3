#pragma once

#include <cmath>
#include <numeric>
#include <utility>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/data/image.hpp"

namespace lussl {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Stochastic transform family used to build positive pairs.
struct AugmentationPolicy {
  double crop_prob = 0.8;
  Range crop_area{0.5, 1.0};
  double flip_prob = 0.5;
  double noise_prob = 0.5;
  Range noise_sigma{0.0, 0.1};
  double brightness_prob = 0.7;
  Range brightness{0.5, 1.5};
  double contrast_prob = 0.7;
  Range contrast{0.6, 1.0};
  double contrast_first_prob = 0.5;

  /// Every transform disabled.
  static AugmentationPolicy identity() {
    AugmentationPolicy p;
    p.crop_prob = p.flip_prob = p.noise_prob = p.brightness_prob = p.contrast_prob = 0.0;
    return p;
  }

  void validate() const {
    auto prob = [](double v, const char* field) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field, "probability must lie in [0,1]");
    };
    auto range = [](Range r, const char* field) {
      if (!(r.lo <= r.hi)) throw ConfigError(field, "range low must not exceed high");
    };
    prob(crop_prob, "augmentation.crop_prob");
    prob(flip_prob, "augmentation.flip_prob");
    prob(noise_prob, "augmentation.noise_prob");
    prob(brightness_prob, "augmentation.brightness_prob");
    prob(contrast_prob, "augmentation.contrast_prob");
    prob(contrast_first_prob, "augmentation.contrast_first_prob");
    range(crop_area, "augmentation.crop_area");
    range(noise_sigma, "augmentation.noise_sigma");
    range(brightness, "augmentation.brightness");
    range(contrast, "augmentation.contrast");
    if (!(crop_area.lo > 0.0 && crop_area.hi <= 1.0)) throw ConfigError("augmentation.crop_area", "must lie in (0,1]");
    if (noise_sigma.lo < 0.0) throw ConfigError("augmentation.noise_sigma", "must be non-negative");
  }
};

/// What one call to `augment` actually did.
struct AugmentTrace {
  bool cropped = false;
  int crop_side = kFrameSize;
  int crop_top = 0;
  int crop_left = 0;
  bool flipped = false;
  bool noised = false;
  double noise_sigma = 0.0;
  bool brightened = false;
  double brightness = 1.0;
  bool contrasted = false;
  double contrast = 1.0;
  bool contrast_first = false;
};

inline Image crop_resize(const Image& img, int top, int left, int side) {
  Image window(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) window.at(r, c) = img.at(top + r, left + c);
  return resize_bilinear(window, img.height, img.width);
}

inline void flip_columns(Image& img) {
  for (int r = 0; r < img.height; ++r) {
    float* row = img.pixels.data() + static_cast<std::size_t>(r) * img.width;
    std::reverse(row, row + img.width);
  }
}

inline void adjust_brightness(Image& img, double factor) {
  for (float& v : img.pixels) v = clip01(static_cast<float>(factor * v));
}

/// m + c (x - m) with m the image mean; a constant image is a fixed point.
inline void adjust_contrast(Image& img, double factor) {
  const double mean = std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / static_cast<double>(img.pixels.size());
  for (float& v : img.pixels) v = clip01(static_cast<float>(mean + factor * (v - mean)));
}

/// Applies crop -> flip -> noise -> {brightness, contrast}; the last two
/// swap order with probability `contrast_first_prob`. Every transform fires
/// independently. Scalar parameters are drawn whether or not their
/// transform fires; per-pixel noise is drawn only when it fires.
template <RandomStream R>
Image augment(const AugmentationPolicy& policy, const Image& image, R& rng, AugmentTrace* trace = nullptr) {
  AugmentTrace t;
  Image out = image;
  const int size = image.height;

  t.cropped = bernoulli(rng, policy.crop_prob);
  const double area = uniform(rng, policy.crop_area.lo, policy.crop_area.hi);
  const double u_top = uniform01(rng);
  const double u_left = uniform01(rng);
  if (t.cropped) {
    t.crop_side = std::clamp(static_cast<int>(std::lround(std::sqrt(area) * size)), 1, size);
    const int slack = size - t.crop_side;
    t.crop_top = std::min(static_cast<int>(u_top * (slack + 1)), slack);
    t.crop_left = std::min(static_cast<int>(u_left * (slack + 1)), slack);
    if (t.crop_side != size) out = crop_resize(out, t.crop_top, t.crop_left, t.crop_side);
  }

  t.flipped = bernoulli(rng, policy.flip_prob);
  if (t.flipped) flip_columns(out);

  t.noised = bernoulli(rng, policy.noise_prob);
  t.noise_sigma = uniform(rng, policy.noise_sigma.lo, policy.noise_sigma.hi);
  if (t.noised) {
    if (t.noise_sigma > 0.0)
      for (float& v : out.pixels) v = clip01(static_cast<float>(v * (1.0 + t.noise_sigma * normal(rng))));
  }

  t.brightened = bernoulli(rng, policy.brightness_prob);
  t.brightness = uniform(rng, policy.brightness.lo, policy.brightness.hi);
  t.contrasted = bernoulli(rng, policy.contrast_prob);
  t.contrast = uniform(rng, policy.contrast.lo, policy.contrast.hi);
  t.contrast_first = bernoulli(rng, policy.contrast_first_prob);
  if (t.contrast_first && t.contrasted) adjust_contrast(out, t.contrast);
  if (t.brightened) adjust_brightness(out, t.brightness);
  if (!t.contrast_first && t.contrasted) adjust_contrast(out, t.contrast);

  if (trace) *trace = t;
  return out;
}

/// Two independent draws of `augment` on the same source image.
template <RandomStream R>
std::pair<Image, Image> make_pair(const AugmentationPolicy& policy, const Image& image, R& rng,
                                  AugmentTrace* trace_a = nullptr, AugmentTrace* trace_b = nullptr) {
  Image a = augment(policy, image, rng, trace_a);
  Image b = augment(policy, image, rng, trace_b);
  return {std::move(a), std::move(b)};
}

}  // namespace lussl
