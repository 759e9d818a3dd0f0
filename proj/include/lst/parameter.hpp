#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lst/tensor.hpp"

namespace lst {

/// A named, persistent tensor. Copies are handles to the same state, so a
/// module struct and a parameter list can refer to one buffer.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool trainable = true);

  bool defined() const { return state_ != nullptr; }
  const std::string& name() const { return state_->name; }
  const Tensor& value() const { return state_->value; }
  Tensor& value() { return state_->value; }
  bool trainable() const { return state_->trainable; }
  void set_trainable(bool on) { state_->trainable = on; }
  void rename(std::string name) { state_->name = std::move(name); }
  const void* key() const { return state_.get(); }

  /// Fresh state with a deep-copied tensor.
  Parameter deep_copy() const;

 private:
  struct State {
    std::string name;
    Tensor value;
    bool trainable;
  };
  std::shared_ptr<State> state_;
};

using ParamList = std::vector<Parameter>;
using GradMap = std::map<std::string, Tensor>;

std::int64_t count_elements(const ParamList& params, bool trainable_only = false);

}  // namespace lst
