#pragma once

#include <cmath>
#include <vector>

#include "lussl/nnet/tensor.hpp"

namespace lussl::nn {

/// Adaptive-moment optimiser over named parameter groups, each with its own
/// learning rate supplied at step time.
template <typename T>
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(std::vector<std::vector<Param<T>*>> groups, Options opt = {}) : opt_(opt) {
    for (auto& g : groups) {
      Group group;
      for (auto* p : g) group.slots.push_back({p, Matrix<T>::Zero(p->value.rows(), p->value.cols()),
                                               Matrix<T>::Zero(p->value.rows(), p->value.cols())});
      groups_.push_back(std::move(group));
    }
  }

  std::size_t group_count() const { return groups_.size(); }

  /// One update; `lrs[g]` is the learning rate of group g.
  void step(const std::vector<double>& lrs) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const double lr = lrs.at(g);
      for (auto& s : groups_[g].slots) {
        T* w = s.param->value.data();
        const T* grad = s.param->grad.data();
        T* m = s.m.data();
        T* v = s.v.data();
        for (Eigen::Index i = 0; i < s.param->value.size(); ++i) {
          m[i] = static_cast<T>(opt_.beta1 * m[i] + (1.0 - opt_.beta1) * grad[i]);
          v[i] = static_cast<T>(opt_.beta2 * v[i] + (1.0 - opt_.beta2) * grad[i] * grad[i]);
          const double mhat = m[i] / c1;
          const double vhat = v[i] / c2;
          w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + opt_.eps));
        }
      }
    }
  }

 private:
  struct Slot {
    Param<T>* param;
    Matrix<T> m;
    Matrix<T> v;
  };
  struct Group {
    std::vector<Slot> slots;
  };

  Options opt_;
  std::vector<Group> groups_;
  long t_ = 0;
};

}  // namespace lussl::nn
