#include "lst/tape.hpp"

#include <cmath>

#include "lst/kernels.hpp"

namespace lst {

void BackwardContext::accumulate(int input, Tensor grad) {
  const auto idx = static_cast<std::size_t>(input);
  if (!node_.input_requires_grad.at(idx)) return;
  const int target = node_.inputs[idx];
  auto& slot = grads_.at(static_cast<std::size_t>(target));
  if (!slot) {
    slot = std::move(grad);
  } else {
    kernels::add_inplace(*slot, grad);
  }
}

Var Tape::param(const Parameter& p) {
  if (!p.defined()) throw ContractError("tape.param: undefined parameter");
  if (auto it = param_nodes_.find(p.key()); it != param_nodes_.end()) {
    const auto& node = nodes_[static_cast<std::size_t>(it->second)];
    return Var{p.value(), this, it->second, node.requires_grad, true};
  }
  TapeNode node;
  node.op = "param";
  node.requires_grad = grad_enabled_ && p.trainable();
  node.owner = owner_;
  node.param = p;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(p.key(), id);
  return Var{p.value(), this, id, nodes_.back().requires_grad, true};
}

GradMap Tape::backward(const Var& loss) {
  if (loss.tape != this || loss.node < 0) {
    throw ContractError("backward: loss is not on this tape");
  }
  if (loss.value.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  GradMap out;
  if (!loss.requires_grad) return out;

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.node)] = Tensor::full(loss.shape(), loss.dtype(), 1.0);

  for (int n = loss.node; n >= 0; --n) {
    auto& g = grads[static_cast<std::size_t>(n)];
    if (!g) continue;
    const TapeNode& node = nodes_[static_cast<std::size_t>(n)];
    if (!node.requires_grad) continue;
    if (node.param.defined()) {
      out[node.param.name()] = std::move(*g);
    } else if (node.backward) {
      BackwardContext ctx(node, *g, grads);
      node.backward(ctx);
    }
    g.reset();
  }
  return out;
}

MemoryReport Tape::retained_bytes() const {
  MemoryReport r;
  for (const auto& node : nodes_) {
    for (const auto& rec : node.saved) {
      if (rec.aliased) continue;
      const auto bytes = static_cast<std::int64_t>(rec.bytes);
      const auto owner = static_cast<std::size_t>(node.owner);
      r.retained_by_owner[owner] += bytes;
      switch (rec.reason) {
        case SaveReason::InputActivation:
          if (node.owner == Owner::Ladder) {
            r.ladder_taps += bytes;
          } else {
            r.retained_input_activations += bytes;
          }
          break;
        case SaveReason::Derivative:
          r.retained_derivatives += bytes;
          r.derivatives_by_owner[owner] += bytes;
          break;
        case SaveReason::Other:
          r.retained_other += bytes;
          break;
      }
    }
  }
  return r;
}

std::int64_t Tape::saved_record_bytes() const {
  std::int64_t total = 0;
  for (const auto& node : nodes_) {
    for (const auto& rec : node.saved) {
      if (!rec.aliased) total += static_cast<std::int64_t>(rec.bytes);
    }
  }
  return total;
}

NodeBuilder::NodeBuilder(const char* op, std::initializer_list<const Var*> inputs) {
  init(op, std::vector<const Var*>(inputs));
}

NodeBuilder::NodeBuilder(const char* op, const std::vector<const Var*>& inputs) {
  init(op, inputs);
}

void NodeBuilder::init(const char* op, const std::vector<const Var*>& inputs) {
  op_ = op;
  for (const Var* v : inputs) {
    if (v->tape) {
      if (tape_ && tape_ != v->tape) throw ContractError(std::string(op) + ": inputs from two tapes");
      tape_ = v->tape;
    }
  }
  const bool enabled = tape_ && tape_->grad_enabled();
  for (const Var* v : inputs) {
    input_nodes_.push_back(v->node);
    const bool rg = enabled && v->requires_grad && v->node >= 0;
    input_rg_.push_back(rg);
    requires_grad_ = requires_grad_ || rg;
  }
}

int NodeBuilder::save(const Tensor& t, SaveReason reason) {
  slots_.push_back(t);
  records_.push_back(SavedRecord{t.storage_id(), t.nbytes(), reason, false});
  return static_cast<int>(slots_.size()) - 1;
}

int NodeBuilder::save_var(const Var& v, SaveReason reason) {
  if (v.is_param) {
    slots_.push_back(v.value);
    return static_cast<int>(slots_.size()) - 1;
  }
  return save(v.value, reason);
}

Var NodeBuilder::finish(Tensor out) {
  if (!tape_) return Var::constant(std::move(out));
  TapeNode node;
  node.op = std::move(op_);
  node.inputs = std::move(input_nodes_);
  node.input_requires_grad = std::move(input_rg_);
  node.requires_grad = requires_grad_;
  node.owner = tape_->owner_;
  if (requires_grad_) {
    for (auto& rec : records_) {
      rec.aliased = !tape_->retained_ids_.insert(rec.tensor_id).second;
    }
    node.saved = std::move(records_);
    node.slots = std::move(slots_);
    node.backward = std::move(backward_);
  }
  const int id = static_cast<int>(tape_->nodes_.size());
  tape_->nodes_.push_back(std::move(node));
  return Var{std::move(out), tape_, id, requires_grad_, false};
}

}  // namespace lst
