#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "lussl/core/error.hpp"
#include "lussl/nnet/tensor.hpp"

namespace lussl::ssl {

using nn::Matrix;
using nn::Vector;

/// Loss value with gradients with respect to both embedding batches.
template <typename T>
struct PairLoss {
  T value = 0;
  Matrix<T> grad_a;
  Matrix<T> grad_b;
};

/// Stabiliser added inside every standard deviation.
inline constexpr double kStdEps = 1e-6;

namespace detail {

template <typename T>
void check_pair(const Matrix<T>& za, const Matrix<T>& zb, const char* who) {
  if (za.rows() != zb.rows() || za.cols() != zb.cols())
    throw ShapeError(std::string(who) + ": branch shapes differ");
  if (za.rows() < 2) throw ShapeError(std::string(who) + ": need at least 2 pairs");
}

}  // namespace detail

/// Normalised temperature-scaled cross-entropy over the 2N views of a batch.
/// Each view's positive is its partner; the other 2N-2 views are negatives.
/// The loss is the mean over all 2N anchors, so both directions contribute.
template <typename T>
PairLoss<T> nt_xent(const Matrix<T>& za, const Matrix<T>& zb, double temperature) {
  detail::check_pair(za, zb, "nt_xent");
  if (!(temperature > 0.0)) throw ConfigError("ssl.temperature", "must be positive");
  const Eigen::Index n = za.rows(), m = 2 * n, e = za.cols();

  Matrix<T> z(m, e);
  z.topRows(n) = za;
  z.bottomRows(n) = zb;
  Vector<T> norms = z.rowwise().norm();
  for (Eigen::Index i = 0; i < m; ++i)
    if (!(norms(i) > T(0))) throw NumericError("nt_xent: embedding row " + std::to_string(i) + " has zero norm");
  Matrix<T> u = norms.cwiseInverse().asDiagonal() * z;

  const T inv_tau = static_cast<T>(1.0 / temperature);
  Matrix<T> s = (u * u.transpose()) * inv_tau;
  Matrix<T> g = Matrix<T>::Zero(m, m);  // dL/ds
  double loss = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index pos = i < n ? i + n : i - n;
    T row_max = -std::numeric_limits<T>::infinity();
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) row_max = std::max(row_max, s(i, j));
    double denom = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) denom += std::exp(static_cast<double>(s(i, j) - row_max));
    loss += -static_cast<double>(s(i, pos)) + static_cast<double>(row_max) + std::log(denom);
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) g(i, j) = static_cast<T>(std::exp(static_cast<double>(s(i, j) - row_max)) / denom / m);
    g(i, pos) -= static_cast<T>(1.0 / m);
  }

  // s = u u^T / tau  =>  du = (g + g^T) u / tau
  Matrix<T> du = (g + g.transpose()) * u * inv_tau;
  // u = z / |z|  =>  dz = (du - u <u, du>) / |z|
  Matrix<T> dz(m, e);
  for (Eigen::Index i = 0; i < m; ++i) {
    const T proj = u.row(i).dot(du.row(i));
    dz.row(i) = (du.row(i) - proj * u.row(i)) / norms(i);
  }
  return {static_cast<T>(loss / m), dz.topRows(n), dz.bottomRows(n)};
}

namespace detail {

/// Column standardisation with biased variance, as a batch-norm layer does.
template <typename T>
struct Standardized {
  Matrix<T> values;
  Vector<T> inv_std;
};

template <typename T>
Standardized<T> standardize(const Matrix<T>& x, const char* who) {
  const auto n = static_cast<double>(x.rows());
  Standardized<T> out{Matrix<T>(x.rows(), x.cols()), Vector<T>(x.cols())};
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    const double mean = x.col(d).template cast<double>().mean();
    const double var = (x.col(d).template cast<double>().array() - mean).square().sum() / n;
    if (var < 1e-12)
      throw NumericError(std::string(who) + ": embedding dimension " + std::to_string(d) + " is constant over the batch");
    const double inv = 1.0 / std::sqrt(var + kStdEps);
    out.inv_std(d) = static_cast<T>(inv);
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.values(i, d) = static_cast<T>((x(i, d) - mean) * inv);
  }
  return out;
}

template <typename T>
Matrix<T> standardize_backward(const Standardized<T>& s, const Matrix<T>& dxhat) {
  const auto n = static_cast<T>(s.values.rows());
  Matrix<T> dx(dxhat.rows(), dxhat.cols());
  for (Eigen::Index d = 0; d < dxhat.cols(); ++d) {
    const T mean_g = dxhat.col(d).mean();
    const T mean_gx = dxhat.col(d).dot(s.values.col(d)) / n;
    dx.col(d) = s.inv_std(d) * (dxhat.col(d).array() - mean_g - s.values.col(d).array() * mean_gx).matrix();
  }
  return dx;
}

}  // namespace detail

/// Redundancy reduction: sum_i (1 - C_ii)^2 + w sum_{i != j} C_ij^2 where C
/// is the cross-correlation of the batch-standardised branches.
template <typename T>
PairLoss<T> barlow_twins(const Matrix<T>& za, const Matrix<T>& zb, double offdiag_weight) {
  detail::check_pair(za, zb, "barlow_twins");
  if (!(offdiag_weight >= 0.0)) throw ConfigError("ssl.bt_offdiag_weight", "must be non-negative");
  const auto sa = detail::standardize(za, "barlow_twins");
  const auto sb = detail::standardize(zb, "barlow_twins");
  const T n = static_cast<T>(za.rows());
  Matrix<T> c = sa.values.transpose() * sb.values / n;

  Matrix<T> dc(c.rows(), c.cols());
  double loss = 0.0;
  const T w = static_cast<T>(offdiag_weight);
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      if (i == j) {
        loss += static_cast<double>((1 - c(i, i)) * (1 - c(i, i)));
        dc(i, j) = -2 * (1 - c(i, i));
      } else {
        loss += static_cast<double>(w * c(i, j) * c(i, j));
        dc(i, j) = 2 * w * c(i, j);
      }
    }
  Matrix<T> dha = sb.values * dc.transpose() / n;
  Matrix<T> dhb = sa.values * dc / n;
  return {static_cast<T>(loss), detail::standardize_backward(sa, dha), detail::standardize_backward(sb, dhb)};
}

struct VicregWeights {
  double invariance = 25.0;
  double variance = 25.0;
  double covariance = 1.0;
};

template <typename T>
struct VicregTerms {
  T invariance = 0, variance = 0, covariance = 0;
};

/// Invariance (mean squared error), variance (mean hinge on per-dimension
/// std, averaged over branches) and covariance (sum of squared off-diagonal
/// covariances / E, summed over branches).
template <typename T>
PairLoss<T> vicreg(const Matrix<T>& za, const Matrix<T>& zb, const VicregWeights& w, VicregTerms<T>* terms = nullptr) {
  detail::check_pair(za, zb, "vicreg");
  if (w.invariance < 0 || w.variance < 0 || w.covariance < 0)
    throw ConfigError("ssl.vicreg_weights", "must be non-negative");
  const Eigen::Index n = za.rows(), e = za.cols();
  PairLoss<T> out{0, Matrix<T>::Zero(n, e), Matrix<T>::Zero(n, e)};

  const Matrix<T> diff = za - zb;
  const T inv = diff.squaredNorm() / static_cast<T>(n * e);
  out.grad_a += diff * static_cast<T>(w.invariance * 2.0 / static_cast<double>(n * e));
  out.grad_b -= diff * static_cast<T>(w.invariance * 2.0 / static_cast<double>(n * e));

  T var_term = 0, cov_term = 0;
  auto branch = [&](const Matrix<T>& z, Matrix<T>& grad) {
    const Matrix<T> centered = z.rowwise() - z.colwise().mean();
    const Matrix<T> cov = centered.transpose() * centered / static_cast<T>(n - 1);
    T hinge = 0;
    Matrix<T> dcentered = Matrix<T>::Zero(n, e);
    for (Eigen::Index d = 0; d < e; ++d) {
      const T sd = std::sqrt(cov(d, d) + static_cast<T>(kStdEps));
      if (sd < T(1)) {
        hinge += 1 - sd;
        // d(-sd)/dz_id = -(z_id - mean_d) / ((n-1) sd), scaled by 1/(2E)
        dcentered.col(d) += centered.col(d) * static_cast<T>(-w.variance / (2.0 * e * (n - 1)) / sd);
      }
    }
    var_term += hinge / static_cast<T>(2 * e);
    T off = 0;
    Matrix<T> dcov = Matrix<T>::Zero(e, e);
    for (Eigen::Index i = 0; i < e; ++i)
      for (Eigen::Index j = 0; j < e; ++j)
        if (i != j) {
          off += cov(i, j) * cov(i, j);
          dcov(i, j) = 2 * cov(i, j) / static_cast<T>(e);
        }
    cov_term += off / static_cast<T>(e);
    // cov = X^T X / (n-1), dcov symmetric  =>  dX = 2 X dcov / (n-1)
    dcentered += centered * dcov * static_cast<T>(2.0 * w.covariance / static_cast<double>(n - 1));
    grad += dcentered.rowwise() - dcentered.colwise().mean();
  };
  branch(za, out.grad_a);
  branch(zb, out.grad_b);

  out.value = static_cast<T>(w.invariance) * inv + static_cast<T>(w.variance) * var_term +
              static_cast<T>(w.covariance) * cov_term;
  if (terms) *terms = {inv, var_term, cov_term};
  return out;
}

}  // namespace lussl::ssl
