#pragma once

#include <cmath>

#include "lussl/core/error.hpp"

namespace lussl {

/// Per-epoch multiplicative learning-rate decay.
inline constexpr double kEpochDecayExponent = 0.02;

/// Learning rate for 0-indexed `epoch`: initial * exp(-0.02 epoch).
inline double lr_at(double initial, int epoch) {
  if (!(initial > 0.0)) throw ConfigError("lr", "initial learning rate must be positive");
  return initial * std::exp(-kEpochDecayExponent * epoch);
}

}  // namespace lussl
