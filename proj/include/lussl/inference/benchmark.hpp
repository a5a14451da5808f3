#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/data/image.hpp"
#include "lussl/inference/tree.hpp"
#include "lussl/nnet/flops.hpp"

namespace lussl::inference {

struct BenchmarkOptions {
  int n = 1000;
  int warmup = 20;
};

struct BenchmarkResult {
  Mode mode = Mode::shared_backbone;
  int n = 0;
  double mean_seconds = 0.0;
  double sd_seconds = 0.0;  ///< sample standard deviation; 0 when n = 1
  nn::FlopCount flops;      ///< per prediction
};

/// Single-threaded serial loop of `n` timed predictions after `warmup`
/// untimed ones, cycling through `images`. Each prediction is timed with
/// the monotonic clock.
inline BenchmarkResult benchmark(const InferencePipeline& pipeline, Mode mode, const std::vector<Image>& images,
                                 const BenchmarkOptions& opt = {}) {
  if (opt.n < 1) throw ConfigError("bench.n", "must be at least 1");
  if (opt.warmup < 0) throw ConfigError("bench.warmup", "must be non-negative");
  if (images.empty()) throw DataError("benchmark: no images");
  BenchmarkResult r;
  r.mode = mode;
  r.n = opt.n;
  r.flops = prediction_flops(pipeline, mode);

  volatile double sink = 0.0;
  for (int i = 0; i < opt.warmup; ++i)
    sink = sink + infer_tree(images[static_cast<std::size_t>(i) % images.size()], pipeline, mode).leaf_probability;

  std::vector<double> samples(static_cast<std::size_t>(opt.n));
  for (int i = 0; i < opt.n; ++i) {
    const Image& img = images[static_cast<std::size_t>(i) % images.size()];
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = infer_tree(img, pipeline, mode);
    samples[static_cast<std::size_t>(i)] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    sink = sink + out.leaf_probability;
  }
  double sum = 0.0;
  for (double s : samples) sum += s;
  r.mean_seconds = sum / opt.n;
  if (opt.n > 1) {
    double sq = 0.0;
    for (double s : samples) sq += (s - r.mean_seconds) * (s - r.mean_seconds);
    r.sd_seconds = std::sqrt(sq / (opt.n - 1));
  }
  return r;
}

}  // namespace lussl::inference
