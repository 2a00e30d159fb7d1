#pragma once

// Deterministic parameter initialisation: uniform in [-1/sqrt(fan_in),
// +1/sqrt(fan_in)], drawn in double and cast to the working scalar.

#include <cmath>
#include <random>

#include "cerank/tensor.hpp"

namespace cerank {

template <typename S>
void init_uniform(Tensor<S>& t, std::int64_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.value()) v = static_cast<S>(dist(rng));
}

}  // namespace cerank
