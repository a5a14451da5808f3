#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/nnet/flops.hpp"
#include "lussl/nnet/tensor.hpp"

namespace lussl::nn {

/// Fills weights and biases from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_fan_in_uniform(Param<T>& weight, Param<T>& bias, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = static_cast<T>(uniform(rng, -bound, bound));
  for (Eigen::Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = static_cast<T>(uniform(rng, -bound, bound));
}

/// y = x W^T + b over a batch of row vectors.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out)
      : weight_(name + ".weight", out, in), bias_(name + ".bias", 1, out) {}

  int in_features() const { return static_cast<int>(weight_.value.cols()); }
  int out_features() const { return static_cast<int>(weight_.value.rows()); }

  void init(Rng& rng) { init_fan_in_uniform(weight_, bias_, in_features(), rng); }

  Matrix<T> forward(const Matrix<T>& x) const {
    if (x.cols() != in_features())
      throw ShapeError(weight_.name + ": expected input width " + std::to_string(in_features()) + ", got " +
                       std::to_string(x.cols()));
    Matrix<T> y = x * weight_.value.transpose();
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy) {
    weight_.grad.noalias() += dy.transpose() * x;
    bias_.grad.row(0) += dy.colwise().sum();
    return dy * weight_.value;
  }

  FlopCount flops(const std::string& name) const {
    FlopCount f;
    f.add(name, 2ULL * static_cast<std::uint64_t>(in_features()) * out_features() + static_cast<std::uint64_t>(out_features()));
    return f;
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  const Param<T>& weight() const { return weight_; }
  const Param<T>& bias() const { return bias_; }
  std::vector<Param<T>*> params() { return {&weight_, &bias_}; }
  std::vector<const Param<T>*> params() const { return {&weight_, &bias_}; }

 private:
  Param<T> weight_;
  Param<T> bias_;
};

/// Square-kernel 2-D convolution lowered to im2col + GEMM per sample.
template <typename T>
class Conv2d {
 public:
  struct Cache {
    std::vector<Matrix<T>> columns;  // one (C_in k k) x (H_out W_out) matrix per sample
    int in_h = 0, in_w = 0;
  };

  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel = 3, int stride = 2, int pad = 1)
      : weight_(name + ".weight", out_channels, in_channels * kernel * kernel),
        bias_(name + ".bias", 1, out_channels),
        in_c_(in_channels),
        k_(kernel),
        stride_(stride),
        pad_(pad) {}

  int in_channels() const { return in_c_; }
  int out_channels() const { return static_cast<int>(weight_.value.rows()); }
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  void init(Rng& rng) { init_fan_in_uniform(weight_, bias_, in_c_ * k_ * k_, rng); }

  Tensor4<T> forward(const Tensor4<T>& x, Cache* cache = nullptr) const {
    if (x.c != in_c_)
      throw ShapeError(weight_.name + ": expected " + std::to_string(in_c_) + " input channels, got " + std::to_string(x.c));
    const int ho = out_size(x.h), wo = out_size(x.w);
    Tensor4<T> y(x.n, out_channels(), ho, wo);
    Matrix<T> col;
    if (cache) {
      cache->columns.resize(static_cast<std::size_t>(x.n));
      cache->in_h = x.h;
      cache->in_w = x.w;
    }
    for (int i = 0; i < x.n; ++i) {
      Matrix<T>& c = cache ? cache->columns[static_cast<std::size_t>(i)] : col;
      im2col(x.sample(i), x.h, x.w, ho, wo, c);
      MatrixMap<T> out(y.sample(i), out_channels(), ho * wo);
      out.noalias() = weight_.value * c;
      out.colwise() += bias_.value.row(0).transpose();
    }
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx when `want_input_grad`.
  Tensor4<T> backward(const Cache& cache, const Tensor4<T>& dy, bool want_input_grad = true) {
    Tensor4<T> dx;
    if (want_input_grad) dx = Tensor4<T>(dy.n, in_c_, cache.in_h, cache.in_w);
    Matrix<T> dcol;
    for (int i = 0; i < dy.n; ++i) {
      ConstMatrixMap<T> g(dy.sample(i), out_channels(), dy.h * dy.w);
      const Matrix<T>& c = cache.columns[static_cast<std::size_t>(i)];
      weight_.grad.noalias() += g * c.transpose();
      bias_.grad.row(0) += g.rowwise().sum().transpose();
      if (want_input_grad) {
        dcol.noalias() = weight_.value.transpose() * g;
        col2im(dcol, cache.in_h, cache.in_w, dy.h, dy.w, dx.sample(i));
      }
    }
    return dx;
  }

  FlopCount flops(const std::string& name, int in_h, int in_w) const {
    const auto hw = static_cast<std::uint64_t>(out_size(in_h)) * static_cast<std::uint64_t>(out_size(in_w));
    FlopCount f;
    f.add(name, 2ULL * k_ * k_ * static_cast<std::uint64_t>(in_c_) * out_channels() * hw +
                    static_cast<std::uint64_t>(out_channels()) * hw);
    return f;
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  std::vector<Param<T>*> params() { return {&weight_, &bias_}; }
  std::vector<const Param<T>*> params() const { return {&weight_, &bias_}; }

 private:
  void im2col(const T* x, int h, int w, int ho, int wo, Matrix<T>& col) const {
    col.resize(in_c_ * k_ * k_, ho * wo);
    for (int ci = 0; ci < in_c_; ++ci) {
      const T* plane = x + static_cast<std::size_t>(ci) * h * w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col.row((ci * k_ + ky) * k_ + kx).data();
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            T* dst = row + oy * wo;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + wo, T(0));
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const Matrix<T>& col, int h, int w, int ho, int wo, T* dx) const {
    std::fill(dx, dx + static_cast<std::size_t>(in_c_) * h * w, T(0));
    for (int ci = 0; ci < in_c_; ++ci) {
      T* plane = dx + static_cast<std::size_t>(ci) * h * w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = col.row((ci * k_ + ky) * k_ + kx).data();
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            T* dst = plane + static_cast<std::size_t>(iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
            }
          }
        }
      }
    }
  }

  Param<T> weight_;
  Param<T> bias_;
  int in_c_ = 1, k_ = 3, stride_ = 2, pad_ = 1;
};

/// Per-sample normalisation over (C, H, W) with a per-channel affine map
/// (group normalisation with a single group). Training and evaluation
/// behave identically, so batch composition never changes a sample's output.
template <typename T>
class LayerNorm2d {
 public:
  struct Cache {
    Tensor4<T> normalized;
    std::vector<T> inv_std;
  };

  static constexpr double kEps = 1e-5;

  LayerNorm2d() = default;
  LayerNorm2d(std::string name, int channels) : gamma_(name + ".gamma", 1, channels), beta_(name + ".beta", 1, channels) {
    gamma_.value.setOnes();
  }

  int channels() const { return static_cast<int>(gamma_.value.cols()); }

  Tensor4<T> forward(const Tensor4<T>& x, Cache* cache = nullptr) const {
    if (x.c != channels()) throw ShapeError(gamma_.name + ": channel mismatch");
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    if (cache) {
      cache->normalized = Tensor4<T>(x.n, x.c, x.h, x.w);
      cache->inv_std.assign(static_cast<std::size_t>(x.n), T(0));
    }
    const std::size_t m = x.sample_size();
    const std::size_t plane = x.plane();
    for (int i = 0; i < x.n; ++i) {
      const T* xs = x.sample(i);
      double mean = 0.0;
      for (std::size_t j = 0; j < m; ++j) mean += xs[j];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t j = 0; j < m; ++j) var += (xs[j] - mean) * (xs[j] - mean);
      var /= static_cast<double>(m);
      const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
      T* ys = y.sample(i);
      T* ns = cache ? cache->normalized.sample(i) : nullptr;
      for (int ch = 0; ch < x.c; ++ch) {
        const T g = gamma_.value(0, ch), b = beta_.value(0, ch);
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t j = static_cast<std::size_t>(ch) * plane + p;
          const T xhat = static_cast<T>(xs[j] - mean) * inv;
          if (ns) ns[j] = xhat;
          ys[j] = g * xhat + b;
        }
      }
      if (cache) cache->inv_std[static_cast<std::size_t>(i)] = inv;
    }
    return y;
  }

  Tensor4<T> backward(const Cache& cache, const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
    const std::size_t m = dy.sample_size();
    const std::size_t plane = dy.plane();
    for (int i = 0; i < dy.n; ++i) {
      const T* g = dy.sample(i);
      const T* xhat = cache.normalized.sample(i);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int ch = 0; ch < dy.c; ++ch) {
        const T gam = gamma_.value(0, ch);
        T dgamma = 0, dbeta = 0;
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t j = static_cast<std::size_t>(ch) * plane + p;
          dgamma += g[j] * xhat[j];
          dbeta += g[j];
          const double d = static_cast<double>(g[j]) * gam;
          sum_dxhat += d;
          sum_dxhat_xhat += d * xhat[j];
        }
        gamma_.grad(0, ch) += dgamma;
        beta_.grad(0, ch) += dbeta;
      }
      const double inv = cache.inv_std[static_cast<std::size_t>(i)];
      const double mean_d = sum_dxhat / static_cast<double>(m);
      const double mean_dx = sum_dxhat_xhat / static_cast<double>(m);
      T* out = dx.sample(i);
      for (int ch = 0; ch < dy.c; ++ch) {
        const double gam = gamma_.value(0, ch);
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t j = static_cast<std::size_t>(ch) * plane + p;
          out[j] = static_cast<T>(inv * (g[j] * gam - mean_d - xhat[j] * mean_dx));
        }
      }
    }
    return dx;
  }

  FlopCount flops(const std::string& name, std::uint64_t elements) const {
    FlopCount f;
    f.add(name, elements);
    return f;
  }

  std::vector<Param<T>*> params() { return {&gamma_, &beta_}; }
  std::vector<const Param<T>*> params() const { return {&gamma_, &beta_}; }

 private:
  Param<T> gamma_;
  Param<T> beta_;
};

template <typename T, typename Container>
void relu_inplace(Container& values) {
  for (auto& v : values) v = v > T(0) ? v : T(0);
}

/// Zeroes gradient entries where the forward output was clamped.
template <typename T>
void relu_backward_inplace(std::span<const T> output, std::span<T> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(output[i] > T(0))) grad[i] = T(0);
}

template <typename T>
Matrix<T> global_average_pool(const Tensor4<T>& x) {
  Matrix<T> out(x.n, x.c);
  const std::size_t plane = x.plane();
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* p = x.sample(i) + static_cast<std::size_t>(ch) * plane;
      double s = 0.0;
      for (std::size_t j = 0; j < plane; ++j) s += p[j];
      out(i, ch) = static_cast<T>(s / static_cast<double>(plane));
    }
  return out;
}

template <typename T>
Tensor4<T> global_average_pool_backward(const Matrix<T>& dy, int h, int w) {
  Tensor4<T> dx(static_cast<int>(dy.rows()), static_cast<int>(dy.cols()), h, w);
  const std::size_t plane = dx.plane();
  const T scale = T(1) / static_cast<T>(plane);
  for (int i = 0; i < dx.n; ++i)
    for (int ch = 0; ch < dx.c; ++ch) {
      T* p = dx.sample(i) + static_cast<std::size_t>(ch) * plane;
      std::fill(p, p + plane, dy(i, ch) * scale);
    }
  return dx;
}

}  // namespace lussl::nn
