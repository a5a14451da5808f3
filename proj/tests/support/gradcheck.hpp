#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace gradcheck {

inline constexpr double kStep = 1e-4;

/// Central differences of `f` with respect to every entry of `x`.
inline std::vector<double> numeric(const std::function<double()>& f, double* x, std::size_t n, double h = kStep) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / (||a|| + ||b||); 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  return denom < 1e-14 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace gradcheck
