#pragma once

// Explicit-loop reference implementations, written straight from the
// textbook definitions. They share no code with the library.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double nt_xent(const Rows& za, const Rows& zb, double tau) {
  const std::size_t n = za.size();
  Rows z = za;
  z.insert(z.end(), zb.begin(), zb.end());
  const std::size_t m = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t pos = i < n ? i + n : i - n;
    auto sim = [&](std::size_t k) { return dot(z[i], z[k]) / std::sqrt(dot(z[i], z[i]) * dot(z[k], z[k])) / tau; };
    double denom = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      if (k != i) denom += std::exp(sim(k));
    total += -std::log(std::exp(sim(pos)) / denom);
  }
  return total / static_cast<double>(m);
}

inline std::vector<double> column_mean(const Rows& z) {
  std::vector<double> mu(z[0].size(), 0.0);
  for (const auto& r : z)
    for (std::size_t d = 0; d < r.size(); ++d) mu[d] += r[d] / static_cast<double>(z.size());
  return mu;
}

inline double barlow_twins(const Rows& za, const Rows& zb, double offdiag, double eps = 1e-6) {
  const std::size_t n = za.size(), e = za[0].size();
  auto standardized = [&](const Rows& z) {
    const auto mu = column_mean(z);
    Rows out = z;
    for (std::size_t d = 0; d < e; ++d) {
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (z[i][d] - mu[d]) * (z[i][d] - mu[d]);
      var /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) out[i][d] = (z[i][d] - mu[d]) / std::sqrt(var + eps);
    }
    return out;
  };
  const Rows a = standardized(za), b = standardized(zb);
  double loss = 0.0;
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < e; ++j) {
      double c = 0.0;
      for (std::size_t k = 0; k < n; ++k) c += a[k][i] * b[k][j];
      c /= static_cast<double>(n);
      loss += i == j ? (1.0 - c) * (1.0 - c) : offdiag * c * c;
    }
  return loss;
}

inline double vicreg(const Rows& za, const Rows& zb, double lam, double mu_w, double nu, double eps = 1e-6) {
  const std::size_t n = za.size(), e = za[0].size();
  double inv = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < e; ++d) inv += (za[i][d] - zb[i][d]) * (za[i][d] - zb[i][d]);
  inv /= static_cast<double>(n * e);
  double var = 0.0, cov = 0.0;
  for (const Rows* z : {&za, &zb}) {
    const auto mu = column_mean(*z);
    for (std::size_t p = 0; p < e; ++p)
      for (std::size_t q = 0; q < e; ++q) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += ((*z)[i][p] - mu[p]) * ((*z)[i][q] - mu[q]);
        c /= static_cast<double>(n - 1);
        if (p == q)
          var += std::max(0.0, 1.0 - std::sqrt(c + eps)) / static_cast<double>(2 * e);
        else
          cov += c * c / static_cast<double>(e);
      }
  }
  return lam * inv + mu_w * var + nu * cov;
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting half.
inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return good / pairs;
}

inline double bce(const std::vector<double>& logits, const std::vector<int>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    s += -(y[i] * std::log(p) + (1 - y[i]) * std::log(1.0 - p));
  }
  return s / static_cast<double>(logits.size());
}

inline double geometric_mean(const std::vector<double>& v) {
  double p = 1.0;
  for (double x : v) p *= x;
  return std::pow(p, 1.0 / static_cast<double>(v.size()));
}

}  // namespace oracle
