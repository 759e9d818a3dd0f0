#include "lst/parameter.hpp"

#include <iomanip>
#include <sstream>

#include "lst/memory_report.hpp"

namespace lst {

Parameter::Parameter(std::string name, Tensor value, bool trainable)
    : state_(std::make_shared<State>(State{std::move(name), std::move(value), trainable})) {}

Parameter Parameter::deep_copy() const {
  return Parameter(state_->name, state_->value.clone(), state_->trainable);
}

std::int64_t count_elements(const ParamList& params, bool trainable_only) {
  std::int64_t n = 0;
  for (const auto& p : params) {
    if (!trainable_only || p.trainable()) n += p.value().numel();
  }
  return n;
}

const char* owner_name(Owner o) {
  switch (o) {
    case Owner::Backbone:
      return "backbone";
    case Owner::Side:
      return "side";
    case Owner::Ladder:
      return "ladder";
    case Owner::Inserted:
      return "inserted";
    case Owner::Head:
      return "head";
    case Owner::Other:
      return "other";
  }
  return "?";
}

const char* reason_name(SaveReason r) {
  switch (r) {
    case SaveReason::InputActivation:
      return "input-activation";
    case SaveReason::Derivative:
      return "derivative";
    case SaveReason::Other:
      return "other";
  }
  return "?";
}

void add_parameter_census(MemoryReport& report, const ParamList& params) {
  for (const auto& p : params) {
    const auto bytes = static_cast<std::int64_t>(p.value().nbytes());
    report.parameters += bytes;
    if (p.trainable()) {
      report.gradients += bytes;
      report.optimizer_state += 2 * bytes;
    }
  }
}

std::string format_table(const MemoryReport& r) {
  std::ostringstream os;
  auto row = [&](const std::string& label, std::int64_t bytes) {
    os << std::left << std::setw(28) << label << std::right << std::setw(14) << bytes << '\n';
  };
  row("parameters", r.parameters);
  row("gradients", r.gradients);
  row("optimizer-state", r.optimizer_state);
  row("retained-input-activations", r.retained_input_activations);
  row("retained-derivatives", r.retained_derivatives);
  row("ladder-taps", r.ladder_taps);
  row("retained-other", r.retained_other);
  row("retained-total", r.retained_total());
  row("total", r.total());
  for (std::size_t i = 0; i < kOwnerCount; ++i) {
    row(std::string("  owner.") + owner_name(static_cast<Owner>(i)), r.retained_by_owner[i]);
  }
  return os.str();
}

std::string format_records(const MemoryReport& r) {
  std::ostringstream os;
  os << "parameters=" << r.parameters << " gradients=" << r.gradients
     << " optimizer_state=" << r.optimizer_state
     << " retained_input_activations=" << r.retained_input_activations
     << " retained_derivatives=" << r.retained_derivatives << " ladder_taps=" << r.ladder_taps
     << " retained_other=" << r.retained_other << " retained_total=" << r.retained_total()
     << " total=" << r.total();
  for (std::size_t i = 0; i < kOwnerCount; ++i) {
    os << " owner_" << owner_name(static_cast<Owner>(i)) << '=' << r.retained_by_owner[i];
  }
  return os.str();
}

}  // namespace lst
