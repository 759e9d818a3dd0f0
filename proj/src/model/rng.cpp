#include "lst/rng.hpp"

#include <cmath>

namespace lst {

// Box-Muller on the raw engine output: std::normal_distribution is not
// specified bit-for-bit, and checkpoints should not depend on the libstdc++
// version.
double Rng::normal(double stddev) {
  const double u1 = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(engine_() % span);
}

Rng Rng::fork(std::uint64_t tag) {
  const std::uint64_t base = engine_();
  return Rng(base ^ (tag * 0x9E3779B97F4A7C15ULL));
}

Tensor random_normal(Shape shape, DType dtype, double stddev, Rng& rng) {
  Tensor t(std::move(shape), dtype);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(stddev));
  return t;
}

}  // namespace lst
