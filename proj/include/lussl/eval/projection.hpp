#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/nnet/tensor.hpp"

namespace lussl::eval {

using nn::Matrix;

enum class ProjectionMethod { pca, tsne };

inline ProjectionMethod parse_projection(std::string_view s) {
  if (s == "pca") return ProjectionMethod::pca;
  if (s == "tsne") return ProjectionMethod::tsne;
  throw ConfigError("projection", "unknown method '" + std::string(s) + "' (expected pca|tsne)");
}

/// Top-2 principal component scores. Each component's sign is fixed so its
/// largest-magnitude loading is positive.
inline Matrix<double> pca_2d(const Matrix<double>& x) {
  if (x.rows() < 3) throw DataError("project_2d: need at least 3 points");
  const Matrix<double> centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - k);  // eigenvalues ascend
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(k) = v;
  }
  return centered * basis;
}

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

namespace detail {

/// Row-conditional affinities with a per-row precision found by bisection
/// so each row's entropy matches log(perplexity).
inline Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& d2, double perplexity) {
  const Eigen::Index n = d2.rows();
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = std::exp(-beta * d2(i, j));
        p(i, j) = w;
        sum += w;
        weighted += w * d2(i, j);
      }
      if (sum <= 0.0) sum = 1e-300;
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (Eigen::Index j = 0; j < n; ++j) p(i, j) /= sum;
      if (std::abs(entropy - target) < 1e-5) break;
      if (entropy > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  return p;
}

}  // namespace detail

/// Exact O(N^2) t-SNE with early exaggeration, momentum and adaptive gains.
/// The perplexity is capped at (N-1)/3 for small inputs.
inline Matrix<double> tsne_2d(const Matrix<double>& x, const TsneOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  if (n < 3) throw DataError("project_2d: need at least 3 points");
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();
  const double perplexity = std::min(opt.perplexity, static_cast<double>(n - 1) / 3.0);
  Eigen::MatrixXd p = detail::conditional_affinities(d2, std::max(perplexity, 1.0));
  p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);

  Rng rng(derive_seed(opt.seed, 0x75e));
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) y(i, k) = 1e-4 * normal(rng);
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd q(n, n), grad(n, 2);

  for (int it = 0; it < opt.iterations; ++it) {
    const double exaggeration = it < opt.exaggeration_iterations ? opt.early_exaggeration : 1.0;
    const double momentum = it < opt.exaggeration_iterations ? 0.5 : 0.8;
    double qsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      q(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double w = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        q(i, j) = q(j, i) = w;
        qsum += 2.0 * w;
      }
    }
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double mult = (exaggeration * p(i, j) - q(i, j) / qsum) * q(i, j);
        grad.row(i) += 4.0 * mult * (y.row(i) - y.row(j));
      }
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0) == (velocity(i, k) > 0);
        gains(i, k) = std::max(0.01, same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2);
        velocity(i, k) = momentum * velocity(i, k) - opt.learning_rate * gains(i, k) * grad(i, k);
        y(i, k) += velocity(i, k);
      }
    y = y.rowwise() - y.colwise().mean();
  }
  return y;
}

inline Matrix<double> project_2d(const Matrix<double>& features, ProjectionMethod method, const TsneOptions& opt = {}) {
  return method == ProjectionMethod::pca ? pca_2d(features) : tsne_2d(features, opt);
}

}  // namespace lussl::eval
