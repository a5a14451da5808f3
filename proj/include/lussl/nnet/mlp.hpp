#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/nnet/flops.hpp"
#include "lussl/nnet/layers.hpp"

namespace lussl::nn {

/// Dense -> ReLU -> dense, or a single dense layer when there is no hidden width.
template <typename T>
class Mlp {
 public:
  struct Trace {
    Matrix<T> input;
    Matrix<T> hidden;  // post-activation
  };

  Mlp() = default;
  Mlp(const std::string& name, int in, std::optional<int> hidden, int out) {
    if (hidden) {
      first_ = Linear<T>(name + ".fc1", in, *hidden);
      second_ = Linear<T>(name + ".fc2", *hidden, out);
    } else {
      first_ = Linear<T>(name + ".fc", in, out);
    }
  }

  bool has_hidden() const { return second_.has_value(); }
  int in_features() const { return first_.in_features(); }
  int out_features() const { return second_ ? second_->out_features() : first_.out_features(); }

  void init(Rng& rng) {
    first_.init(rng);
    if (second_) second_->init(rng);
  }

  Matrix<T> forward(const Matrix<T>& x) const {
    if (!second_) return first_.forward(x);
    Matrix<T> h = first_.forward(x).cwiseMax(T(0));
    return second_->forward(h);
  }

  Matrix<T> forward(const Matrix<T>& x, Trace& trace) const {
    trace.input = x;
    if (!second_) return first_.forward(x);
    trace.hidden = first_.forward(x).cwiseMax(T(0));
    return second_->forward(trace.hidden);
  }

  Matrix<T> backward(const Trace& trace, const Matrix<T>& dy) {
    if (!second_) return first_.backward(trace.input, dy);
    Matrix<T> dh = second_->backward(trace.hidden, dy);
    dh = dh.cwiseProduct((trace.hidden.array() > T(0)).template cast<T>().matrix());
    return first_.backward(trace.input, dh);
  }

  FlopCount flops(const std::string& name) const {
    FlopCount f = first_.flops(name + (second_ ? ".fc1" : ".fc"));
    if (second_) {
      f.add(name + ".relu", static_cast<std::uint64_t>(first_.out_features()));
      f += second_->flops(name + ".fc2");
    }
    return f;
  }

  Linear<T>& first() { return first_; }
  Linear<T>* second() { return second_ ? &*second_ : nullptr; }

  std::vector<Param<T>*> params() {
    auto out = first_.params();
    if (second_)
      for (auto* p : second_->params()) out.push_back(p);
    return out;
  }
  std::vector<const Param<T>*> params() const {
    auto out = first_.params();
    if (second_)
      for (auto* p : second_->params()) out.push_back(p);
    return out;
  }

 private:
  Linear<T> first_;
  std::optional<Linear<T>> second_;
};

/// Hidden width of the nonlinear head.
inline constexpr int kMlpHeadHidden = 32;

enum class HeadKind { linear, mlp32 };

inline std::string_view head_kind_name(HeadKind k) { return k == HeadKind::linear ? "linear" : "mlp32"; }

inline HeadKind parse_head_kind(std::string_view s) {
  if (s == "linear") return HeadKind::linear;
  if (s == "mlp32") return HeadKind::mlp32;
  throw ConfigError("head", "unknown head kind '" + std::string(s) + "' (expected linear|mlp32)");
}

/// Task classifier producing one logit per feature row.
template <typename T>
class Head {
 public:
  using Trace = typename Mlp<T>::Trace;

  Head() = default;
  Head(const std::string& name, HeadKind kind, int feature_dim)
      : kind_(kind), net_(name, feature_dim, kind == HeadKind::mlp32 ? std::optional<int>(kMlpHeadHidden) : std::nullopt, 1) {}

  HeadKind kind() const { return kind_; }
  int in_features() const { return net_.in_features(); }
  void init(Rng& rng) { net_.init(rng); }

  Vector<T> forward(const Matrix<T>& features) const { return net_.forward(features).col(0); }
  Vector<T> forward(const Matrix<T>& features, Trace& trace) const { return net_.forward(features, trace).col(0); }

  /// dlogits has one entry per row; returns dL/dfeatures.
  Matrix<T> backward(const Trace& trace, const Vector<T>& dlogits) {
    Matrix<T> dy = dlogits;
    return net_.backward(trace, dy);
  }

  FlopCount flops(const std::string& name) const { return net_.flops(name); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : net_.params()) n += p->size();
    return n;
  }

  Mlp<T>& net() { return net_; }
  std::vector<Param<T>*> params() { return net_.params(); }
  std::vector<const Param<T>*> params() const { return net_.params(); }

 private:
  HeadKind kind_ = HeadKind::linear;
  Mlp<T> net_;
};

}  // namespace lussl::nn
