#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lst/memory_report.hpp"
#include "lst/parameter.hpp"
#include "lst/tensor.hpp"

namespace lst {

class Tape;

/// A tensor flowing through the forward pass. Vars without a tape node are
/// constants and never receive gradients.
struct Var {
  Tensor value;
  Tape* tape = nullptr;
  int node = -1;
  bool requires_grad = false;
  bool is_param = false;

  const Shape& shape() const { return value.shape(); }
  DType dtype() const { return value.dtype(); }

  static Var constant(Tensor t) { return Var{std::move(t)}; }
  /// Same values, cut off from gradient flow.
  Var detach() const { return Var{value}; }
};

struct SavedRecord {
  std::uint64_t tensor_id = 0;
  std::size_t bytes = 0;
  SaveReason reason = SaveReason::Other;
  /// The storage was already retained by an earlier record; not counted again.
  bool aliased = false;
};

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

struct TapeNode {
  std::string op;
  std::vector<int> inputs;  // -1 for constants
  std::vector<bool> input_requires_grad;
  std::vector<SavedRecord> saved;
  /// Tensors the backward function may read. Parameter values sit here too
  /// but carry no SavedRecord: they are persistent, not retained.
  std::vector<Tensor> slots;
  bool requires_grad = false;
  Owner owner = Owner::Other;
  BackwardFn backward;
  Parameter param;  // set for parameter leaves
};

class BackwardContext {
 public:
  BackwardContext(const TapeNode& node, const Tensor& grad_out,
                  std::vector<std::optional<Tensor>>& grads)
      : node_(node), grad_out_(grad_out), grads_(grads) {}

  const Tensor& grad_output() const { return grad_out_; }
  const Tensor& slot(int i) const { return node_.slots.at(static_cast<std::size_t>(i)); }
  bool needs_grad(int input) const {
    return node_.input_requires_grad.at(static_cast<std::size_t>(input));
  }
  /// Adds grad into the gradient of input `input` (no-op if it needs none).
  void accumulate(int input, Tensor grad);

 private:
  const TapeNode& node_;
  const Tensor& grad_out_;
  std::vector<std::optional<Tensor>>& grads_;
};

/// Reverse-mode record of one forward pass. Not thread-safe; use one tape
/// per step and per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf for a parameter; repeated calls for the same parameter return the
  /// same node so shared (tied) weights accumulate into one gradient.
  Var param(const Parameter& p);

  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Owner owner() const { return owner_; }
  void set_owner(Owner o) { owner_ = o; }

  /// Gradients for every trainable parameter reachable from loss.
  GradMap backward(const Var& loss);

  /// Retained-for-backward bytes grouped by reason and owner.
  MemoryReport retained_bytes() const;
  std::int64_t saved_record_bytes() const;

  const std::vector<TapeNode>& nodes() const { return nodes_; }

 private:
  friend class NodeBuilder;

  std::vector<TapeNode> nodes_;
  std::unordered_map<const void*, int> param_nodes_;
  std::unordered_set<std::uint64_t> retained_ids_;
  bool grad_enabled_ = true;
  Owner owner_ = Owner::Other;
};

/// Sets the tape's owner for the lifetime of the scope.
class OwnerScope {
 public:
  OwnerScope(Tape& tape, Owner o) : tape_(tape), prev_(tape.owner()) { tape.set_owner(o); }
  ~OwnerScope() { tape_.set_owner(prev_); }
  OwnerScope(const OwnerScope&) = delete;
  OwnerScope& operator=(const OwnerScope&) = delete;

 private:
  Tape& tape_;
  Owner prev_;
};

/// Used by op implementations to register a node, declare the tensors the
/// backward pass needs, and attach the backward function.
class NodeBuilder {
 public:
  NodeBuilder(const char* op, std::initializer_list<const Var*> inputs);
  NodeBuilder(const char* op, const std::vector<const Var*>& inputs);

  bool requires_grad() const { return requires_grad_; }
  bool input_requires_grad(std::size_t i) const { return input_rg_.at(i); }

  /// Retains t for backward and records its bytes under reason.
  int save(const Tensor& t, SaveReason reason);
  /// Like save(), but parameter values are kept without a byte record.
  int save_var(const Var& v, SaveReason reason);
  void set_backward(BackwardFn fn) { backward_ = std::move(fn); }

  Var finish(Tensor out);

 private:
  void init(const char* op, const std::vector<const Var*>& inputs);

  Tape* tape_ = nullptr;
  std::string op_;
  std::vector<int> input_nodes_;
  std::vector<bool> input_rg_;
  bool requires_grad_ = false;
  std::vector<Tensor> slots_;
  std::vector<SavedRecord> records_;
  BackwardFn backward_;
};

}  // namespace lst
