#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "lst/parameter.hpp"

namespace lst {

/// Who created the tape node that retained a tensor.
enum class Owner : std::uint8_t { Backbone = 0, Side, Ladder, Inserted, Head, Other };
inline constexpr std::size_t kOwnerCount = 6;
const char* owner_name(Owner o);

/// Why a tensor was kept alive for the backward pass.
enum class SaveReason : std::uint8_t { InputActivation = 0, Derivative, Other };
const char* reason_name(SaveReason r);

/// Byte counts of a training step, by category and by owner.
///
/// Retained tensors are split into input activations ({a}), derivatives
/// ({sigma'}), ladder taps (full-width backbone activations kept as the
/// inputs of trainable downsamplers) and other (integer ids).  Ladder-owned
/// input activations are reported as ladder taps, not input activations.
struct MemoryReport {
  std::int64_t parameters = 0;
  std::int64_t gradients = 0;
  std::int64_t optimizer_state = 0;
  std::int64_t retained_input_activations = 0;
  std::int64_t retained_derivatives = 0;
  std::int64_t ladder_taps = 0;
  std::int64_t retained_other = 0;

  /// Retained bytes per owner (all reasons).
  std::array<std::int64_t, kOwnerCount> retained_by_owner{};
  /// Retained derivative bytes per owner.
  std::array<std::int64_t, kOwnerCount> derivatives_by_owner{};

  std::int64_t retained_total() const {
    return retained_input_activations + retained_derivatives + ladder_taps + retained_other;
  }
  std::int64_t total() const { return parameters + gradients + optimizer_state + retained_total(); }
  std::int64_t owner(Owner o) const { return retained_by_owner[static_cast<std::size_t>(o)]; }
  std::int64_t owner_derivatives(Owner o) const {
    return derivatives_by_owner[static_cast<std::size_t>(o)];
  }
};

/// Fills the parameter, gradient and optimizer categories from a parameter
/// census. Optimizer state is two moment buffers per trainable element.
void add_parameter_census(MemoryReport& report, const ParamList& params);

/// Aligned human-readable table.
std::string format_table(const MemoryReport& report);
/// One line of space-separated key=value pairs.
std::string format_records(const MemoryReport& report);

}  // namespace lst
