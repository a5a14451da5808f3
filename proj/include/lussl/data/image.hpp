#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "lussl/core/error.hpp"

namespace lussl {

/// Side length of every model input frame.
inline constexpr int kFrameSize = 128;
inline constexpr std::size_t kFramePixels = std::size_t{kFrameSize} * kFrameSize;

/// Row-major single-channel image. Row 0 is the shallowest depth.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

  float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  bool empty() const { return pixels.empty(); }
  bool is_frame() const { return height == kFrameSize && width == kFrameSize; }

  friend bool operator==(const Image&, const Image&) = default;
};

inline float clip01(float v) { return std::clamp(v, 0.0f, 1.0f); }

inline void clip01(std::span<float> values) {
  for (float& v : values) v = clip01(v);
}

/// Bilinear resampling on a corner-aligned grid: output pixel (0,0) samples
/// input (0,0) and the last output pixel samples the last input pixel.
inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (src.empty() || src.height < 1 || src.width < 1) throw DataError("resize_bilinear: empty image");
  Image dst(out_h, out_w);
  const double sy = out_h > 1 ? static_cast<double>(src.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(src.width - 1) / (out_w - 1) : 0.0;
  for (int r = 0; r < out_h; ++r) {
    const double fy = r * sy;
    const int y0 = std::min(static_cast<int>(fy), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < out_w; ++c) {
      const double fx = c * sx;
      const int x0 = std::min(static_cast<int>(fx), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const double top = src.at(y0, x0) + wx * (static_cast<double>(src.at(y0, x1)) - src.at(y0, x0));
      const double bot = src.at(y1, x0) + wx * (static_cast<double>(src.at(y1, x1)) - src.at(y1, x0));
      dst.at(r, c) = static_cast<float>(top + wy * (bot - top));
    }
  }
  return dst;
}

/// Resamples any non-empty grayscale image to a 128x128 frame clipped to [0,1].
inline Image preprocess(const Image& raw) {
  if (raw.empty() || raw.height < 1 || raw.width < 1) throw DataError("preprocess: empty image");
  Image out = resize_bilinear(raw, kFrameSize, kFrameSize);
  clip01(out.pixels);
  return out;
}

}  // namespace lussl
