#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "lussl/core/random.hpp"
#include "lussl/nnet/extractor.hpp"
#include "lussl/nnet/layers.hpp"
#include "lussl/nnet/mlp.hpp"
#include "lussl/ssl/losses.hpp"
#include "lussl/supervised/protocol.hpp"

namespace gradsuite {

using lussl::Rng;
using lussl::nn::Matrix;
using lussl::nn::Param;
using lussl::nn::Tensor4;
using lussl::nn::Vector;

struct Result {
  std::string component;
  int points = 0;
  double worst = 0.0;  ///< largest relative error over points and tensors
};

inline void fill(double* p, std::size_t n, Rng& rng, double scale = 1.0) {
  for (std::size_t i = 0; i < n; ++i) p[i] = scale * lussl::normal(rng);
}

inline std::vector<double> flat(const Matrix<double>& m) { return {m.data(), m.data() + m.size()}; }

inline double compare(const std::function<double()>& loss, double* x, std::size_t n, const std::vector<double>& analytic) {
  return gradcheck::relative_error(analytic, gradcheck::numeric(loss, x, n));
}

/// Linear probe of an output: L = sum(r * y).
inline double probe(const double* y, const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * y[i];
  return s;
}

inline Result check_losses(const char* which, int points, std::uint64_t seed) {
  Result res{which, points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    const int n = 3 + static_cast<int>(lussl::uniform_index(rng, 6));
    const int e = 2 + static_cast<int>(lussl::uniform_index(rng, 7));
    Matrix<double> za(n, e), zb(n, e);
    const double scale = std::string(which) == "vicreg" ? 0.3 : 1.0;
    fill(za.data(), za.size(), rng, scale);
    fill(zb.data(), zb.size(), rng, scale);
    const double tau = lussl::uniform(rng, 0.1, 1.0);
    const double w = lussl::uniform(rng, 0.001, 0.5);
    auto eval = [&]() -> lussl::ssl::PairLoss<double> {
      const std::string s = which;
      if (s == "nt_xent") return lussl::ssl::nt_xent(za, zb, tau);
      if (s == "barlow_twins") return lussl::ssl::barlow_twins(za, zb, w);
      return lussl::ssl::vicreg(za, zb, {25.0, 25.0, 1.0});
    };
    const auto l = eval();
    auto value = [&] { return static_cast<double>(eval().value); };
    res.worst = std::max(res.worst, compare(value, za.data(), za.size(), flat(l.grad_a)));
    res.worst = std::max(res.worst, compare(value, zb.data(), zb.size(), flat(l.grad_b)));
  }
  return res;
}

inline Result check_bce(int points, std::uint64_t seed) {
  Result res{"bce", points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    const int n = 1 + static_cast<int>(lussl::uniform_index(rng, 10));
    Vector<double> logits(n);
    fill(logits.data(), n, rng, 3.0);
    std::vector<int> labels(n);
    for (auto& y : labels) y = lussl::bernoulli(rng, 0.5);
    Vector<double> g;
    lussl::supervised::bce(logits, labels, &g);
    auto value = [&] { return lussl::supervised::bce<double>(logits, labels); };
    res.worst = std::max(res.worst, compare(value, logits.data(), n, {g.data(), g.data() + n}));
  }
  return res;
}

inline Result check_linear(int points, std::uint64_t seed) {
  Result res{"linear", points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    lussl::nn::Linear<double> layer("fc", 5, 3);
    for (auto* p : layer.params()) fill(p->value.data(), p->size(), rng);
    Matrix<double> x(4, 5);
    fill(x.data(), x.size(), rng);
    std::vector<double> r(12);
    fill(r.data(), r.size(), rng);
    Matrix<double> dy(4, 3);
    std::copy(r.begin(), r.end(), dy.data());
    const Matrix<double> dx = layer.backward(x, dy);
    auto value = [&] { return probe(layer.forward(x).data(), r); };
    res.worst = std::max(res.worst, compare(value, x.data(), x.size(), flat(dx)));
    for (auto* p : layer.params())
      res.worst = std::max(res.worst, compare(value, p->value.data(), p->size(), flat(p->grad)));
  }
  return res;
}

inline Result check_conv(int points, std::uint64_t seed) {
  Result res{"conv2d", points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    const int stride = 1 + static_cast<int>(lussl::uniform_index(rng, 2));
    lussl::nn::Conv2d<double> conv("conv", 2, 3, 3, stride, 1);
    for (auto* p : conv.params()) fill(p->value.data(), p->size(), rng, 0.5);
    Tensor4<double> x(2, 2, 6, 5);
    fill(x.data.data(), x.data.size(), rng);
    typename lussl::nn::Conv2d<double>::Cache cache;
    const auto y = conv.forward(x, &cache);
    std::vector<double> r(y.data.size());
    fill(r.data(), r.size(), rng);
    Tensor4<double> dy(y.n, y.c, y.h, y.w);
    dy.data.assign(r.begin(), r.end());
    const auto dx = conv.backward(cache, dy, true);
    auto value = [&] { return probe(conv.forward(x).data.data(), r); };
    res.worst = std::max(res.worst, compare(value, x.data.data(), x.data.size(), {dx.data.begin(), dx.data.end()}));
    for (auto* p : conv.params())
      res.worst = std::max(res.worst, compare(value, p->value.data(), p->size(), flat(p->grad)));
  }
  return res;
}

inline Result check_layernorm(int points, std::uint64_t seed) {
  Result res{"layernorm2d", points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    lussl::nn::LayerNorm2d<double> norm("norm", 3);
    for (auto* p : norm.params()) fill(p->value.data(), p->size(), rng);
    Tensor4<double> x(2, 3, 4, 3);
    fill(x.data.data(), x.data.size(), rng);
    typename lussl::nn::LayerNorm2d<double>::Cache cache;
    const auto y = norm.forward(x, &cache);
    std::vector<double> r(y.data.size());
    fill(r.data(), r.size(), rng);
    Tensor4<double> dy(y.n, y.c, y.h, y.w);
    dy.data.assign(r.begin(), r.end());
    const auto dx = norm.backward(cache, dy);
    auto value = [&] { return probe(norm.forward(x).data.data(), r); };
    res.worst = std::max(res.worst, compare(value, x.data.data(), x.data.size(), {dx.data.begin(), dx.data.end()}));
    for (auto* p : norm.params())
      res.worst = std::max(res.worst, compare(value, p->value.data(), p->size(), flat(p->grad)));
  }
  return res;
}

inline Result check_relu(int points, std::uint64_t seed) {
  Result res{"relu", points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    std::vector<double> x(20);
    // keep inputs away from the kink at 0
    for (auto& v : x) v = (lussl::bernoulli(rng, 0.5) ? 1.0 : -1.0) * lussl::uniform(rng, 0.01, 2.0);
    std::vector<double> r(x.size());
    fill(r.data(), r.size(), rng);
    auto forward = [&] {
      std::vector<double> y = x;
      lussl::nn::relu_inplace<double>(y);
      return y;
    };
    const auto y = forward();
    std::vector<double> g = r;
    lussl::nn::relu_backward_inplace<double>(std::span<const double>(y), std::span<double>(g));
    auto value = [&] { return probe(forward().data(), r); };
    res.worst = std::max(res.worst, compare(value, x.data(), x.size(), g));
  }
  return res;
}

inline Result check_pool(int points, std::uint64_t seed) {
  Result res{"global_average_pool", points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    Tensor4<double> x(3, 2, 4, 5);
    fill(x.data.data(), x.data.size(), rng);
    std::vector<double> r(6);
    fill(r.data(), r.size(), rng);
    Matrix<double> dy(3, 2);
    std::copy(r.begin(), r.end(), dy.data());
    const auto dx = lussl::nn::global_average_pool_backward(dy, 4, 5);
    auto value = [&] { return probe(lussl::nn::global_average_pool(x).data(), r); };
    res.worst = std::max(res.worst, compare(value, x.data.data(), x.data.size(), {dx.data.begin(), dx.data.end()}));
  }
  return res;
}

inline Result check_head(lussl::nn::HeadKind kind, int points, std::uint64_t seed) {
  Result res{std::string("head_") + std::string(lussl::nn::head_kind_name(kind)), points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    lussl::nn::Head<double> head("head", kind, 6);
    head.init(rng);
    Matrix<double> f(5, 6);
    fill(f.data(), f.size(), rng);
    Vector<double> r(5);
    fill(r.data(), 5, rng);
    typename lussl::nn::Head<double>::Trace trace;
    head.forward(f, trace);
    const Matrix<double> df = head.backward(trace, r);
    std::vector<double> rv(r.data(), r.data() + 5);
    auto value = [&] { return probe(head.forward(f).data(), rv); };
    res.worst = std::max(res.worst, compare(value, f.data(), f.size(), flat(df)));
    for (auto* p : head.params())
      res.worst = std::max(res.worst, compare(value, p->value.data(), p->size(), flat(p->grad)));
  }
  return res;
}

inline Result check_projector(int points, std::uint64_t seed) {
  Result res{"projector_mlp", points, 0.0};
  Rng rng(seed);
  for (int k = 0; k < points; ++k) {
    lussl::nn::Mlp<double> mlp("proj", 6, 5, 4);
    mlp.init(rng);
    Matrix<double> x(3, 6);
    fill(x.data(), x.size(), rng);
    std::vector<double> r(12);
    fill(r.data(), r.size(), rng);
    Matrix<double> dy(3, 4);
    std::copy(r.begin(), r.end(), dy.data());
    typename lussl::nn::Mlp<double>::Trace trace;
    mlp.forward(x, trace);
    const Matrix<double> dx = mlp.backward(trace, dy);
    auto value = [&] { return probe(mlp.forward(x).data(), r); };
    res.worst = std::max(res.worst, compare(value, x.data(), x.size(), flat(dx)));
    for (auto* p : mlp.params())
      res.worst = std::max(res.worst, compare(value, p->value.data(), p->size(), flat(p->grad)));
  }
  return res;
}

/// End to end through conv/norm/relu blocks and pooling on small inputs.
inline Result check_extractor(int points, std::uint64_t seed) {
  Result res{"feature_extractor", points, 0.0};
  Rng rng(seed);
  lussl::nn::ExtractorConfig cfg;
  cfg.widths = {3, 4};
  cfg.input_size = 8;
  for (int k = 0; k < points; ++k) {
    lussl::nn::FeatureExtractor<double> ex(cfg);
    ex.init(rng);
    for (auto* p : ex.params())
      if (p->name.find("norm") != std::string::npos) fill(p->value.data(), p->size(), rng, 0.5);
    Tensor4<double> x(2, 1, 8, 8);
    fill(x.data.data(), x.data.size(), rng);
    std::vector<double> r(8);
    fill(r.data(), r.size(), rng);
    Matrix<double> df(2, 4);
    std::copy(r.begin(), r.end(), df.data());
    typename lussl::nn::FeatureExtractor<double>::Trace trace;
    ex.forward(x, trace);
    ex.backward(trace, df);
    auto value = [&] { return probe(ex.forward(x).data(), r); };
    for (auto* p : ex.params())
      res.worst = std::max(res.worst, compare(value, p->value.data(), p->size(), flat(p->grad)));
  }
  return res;
}

inline std::vector<Result> run_all(int points = 20, std::uint64_t seed = 2024) {
  return {check_losses("nt_xent", points, seed + 1),
          check_losses("barlow_twins", points, seed + 2),
          check_losses("vicreg", points, seed + 3),
          check_bce(points, seed + 4),
          check_linear(points, seed + 5),
          check_conv(points, seed + 6),
          check_layernorm(points, seed + 7),
          check_relu(points, seed + 8),
          check_pool(points, seed + 9),
          check_head(lussl::nn::HeadKind::linear, points, seed + 10),
          check_head(lussl::nn::HeadKind::mlp32, points, seed + 11),
          check_projector(points, seed + 12),
          check_extractor(points, seed + 13)};
}

}  // namespace gradsuite
