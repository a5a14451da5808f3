#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/data/image.hpp"
#include "lussl/nnet/flops.hpp"
#include "lussl/nnet/layers.hpp"
#include "lussl/nnet/tensor.hpp"

namespace lussl::nn {

struct ExtractorConfig {
  std::vector<int> widths{16, 32, 64, 128};
  int kernel = 3;
  int stride = 2;
  int input_size = kFrameSize;

  int feature_dim() const { return widths.empty() ? 0 : widths.back(); }

  void validate() const {
    if (widths.empty()) throw ConfigError("architecture.widths", "at least one convolution block is required");
    for (int w : widths)
      if (w < 1) throw ConfigError("architecture.widths", "channel widths must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("architecture.kernel", "must be a positive odd number");
    if (stride < 1) throw ConfigError("architecture.stride", "must be positive");
  }

  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

/// Convolutional feature extractor: blocks of conv -> norm -> ReLU followed
/// by global average pooling. Maps N x 1 x 128 x 128 to N x D.
template <typename T>
class FeatureExtractor {
 public:
  struct Block {
    Conv2d<T> conv;
    LayerNorm2d<T> norm;
  };

  struct Trace {
    std::vector<typename Conv2d<T>::Cache> conv;
    std::vector<typename LayerNorm2d<T>::Cache> norm;
    std::vector<Tensor4<T>> relu_out;
  };

  FeatureExtractor() = default;
  explicit FeatureExtractor(ExtractorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int in = 1;
    for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
      const std::string name = "extractor.block" + std::to_string(i);
      blocks_.push_back({Conv2d<T>(name + ".conv", in, cfg_.widths[i], cfg_.kernel, cfg_.stride, cfg_.kernel / 2),
                         LayerNorm2d<T>(name + ".norm", cfg_.widths[i])});
      in = cfg_.widths[i];
    }
  }

  const ExtractorConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.feature_dim(); }

  void init(Rng& rng) {
    for (auto& b : blocks_) b.conv.init(rng);
  }

  /// Evaluation forward pass.
  Matrix<T> forward(const Tensor4<T>& x) const { return run(x, nullptr); }

  /// Training forward pass; records what `backward` needs.
  Matrix<T> forward(const Tensor4<T>& x, Trace& trace) const { return run(x, &trace); }

  /// Accumulates gradients for every parameter from dL/dfeatures.
  void backward(const Trace& trace, const Matrix<T>& dfeatures) {
    const auto& last = trace.relu_out.back();
    Tensor4<T> g = global_average_pool_backward(dfeatures, last.h, last.w);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      relu_backward_inplace<T>(trace.relu_out[i].values(), g.values());
      g = blocks_[i].norm.backward(trace.norm[i], g);
      g = blocks_[i].conv.backward(trace.conv[i], g, i > 0);
    }
  }

  FlopCount flops() const {
    FlopCount f;
    int h = cfg_.input_size, w = cfg_.input_size;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string name = "extractor.block" + std::to_string(i);
      f += blocks_[i].conv.flops(name + ".conv", h, w);
      h = blocks_[i].conv.out_size(h);
      w = blocks_[i].conv.out_size(w);
      const auto elements = static_cast<std::uint64_t>(cfg_.widths[i]) * static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(w);
      f += blocks_[i].norm.flops(name + ".norm", elements);
      f.add(name + ".relu", elements);
      if (i + 1 == blocks_.size()) f.add("extractor.pool", elements);
    }
    return f;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& b : blocks_) {
      for (auto* p : b.conv.params()) out.push_back(p);
      for (auto* p : b.norm.params()) out.push_back(p);
    }
    return out;
  }
  std::vector<const Param<T>*> params() const {
    std::vector<const Param<T>*> out;
    for (const auto& b : blocks_) {
      for (auto* p : b.conv.params()) out.push_back(p);
      for (auto* p : b.norm.params()) out.push_back(p);
    }
    return out;
  }

 private:
  Matrix<T> run(const Tensor4<T>& x, Trace* trace) const {
    if (x.c != 1 || x.h != cfg_.input_size || x.w != cfg_.input_size)
      throw ShapeError("feature extractor expects N x 1 x " + std::to_string(cfg_.input_size) + " x " +
                       std::to_string(cfg_.input_size) + " input, got N x " + std::to_string(x.c) + " x " +
                       std::to_string(x.h) + " x " + std::to_string(x.w));
    if (trace) {
      trace->conv.assign(blocks_.size(), {});
      trace->norm.assign(blocks_.size(), {});
      trace->relu_out.assign(blocks_.size(), {});
    }
    Tensor4<T> a;
    const Tensor4<T>* in = &x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      Tensor4<T> z = blocks_[i].conv.forward(*in, trace ? &trace->conv[i] : nullptr);
      a = blocks_[i].norm.forward(z, trace ? &trace->norm[i] : nullptr);
      relu_inplace<T>(a.data);
      if (trace) trace->relu_out[i] = a;
      in = &a;
    }
    return global_average_pool(a);
  }

  ExtractorConfig cfg_;
  std::vector<Block> blocks_;
};

/// Packs 128x128 frames into an N x 1 x 128 x 128 batch.
template <typename T>
Tensor4<T> make_batch(std::span<const Image* const> images) {
  Tensor4<T> batch(static_cast<int>(images.size()), 1, kFrameSize, kFrameSize);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (!img.is_frame()) throw ShapeError("make_batch: images must be 128x128");
    std::copy(img.pixels.begin(), img.pixels.end(), batch.sample(static_cast<int>(i)));
  }
  return batch;
}

template <typename T>
Tensor4<T> make_batch(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return make_batch<T>(std::span<const Image* const>(ptrs));
}

}  // namespace lussl::nn
