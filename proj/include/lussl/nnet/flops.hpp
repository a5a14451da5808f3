#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lussl::nn {

/// Floating point operation tally with a per-layer breakdown.
///
/// Counting rule:
///   convolution  2 k^2 C_in C_out H_out W_out, plus one add per output for the bias
///   dense        2 in out, plus one add per output for the bias
///   norm, nonlinearity, pooling  one operation per input element
struct FlopCount {
  std::uint64_t total = 0;
  std::vector<std::pair<std::string, std::uint64_t>> breakdown;

  void add(std::string layer, std::uint64_t ops) {
    total += ops;
    breakdown.emplace_back(std::move(layer), ops);
  }

  FlopCount& operator+=(const FlopCount& other) {
    total += other.total;
    breakdown.insert(breakdown.end(), other.breakdown.begin(), other.breakdown.end());
    return *this;
  }

  friend FlopCount operator+(FlopCount a, const FlopCount& b) { return a += b; }
};

}  // namespace lussl::nn
