#pragma once

#include <cstdint>
#include <random>

#include "lst/tensor.hpp"

namespace lst {

/// Deterministic generator for initialization and data streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double stddev);
  double uniform();
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive

  /// Child generator whose stream depends only on (this stream, tag).
  Rng fork(std::uint64_t tag);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

Tensor random_normal(Shape shape, DType dtype, double stddev, Rng& rng);

}  // namespace lst
