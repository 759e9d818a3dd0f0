#pragma once

#include <span>
#include <vector>

#include "lst/tape.hpp"

// Differentiable forward ops. Each op registers a node on the tape of its
// inputs and retains only what its vector-Jacobian product needs, and only
// when some input requires a gradient.
namespace lst::ops {

enum class Reduction { Mean, Sum };

/// a[..., m, k] x b[k, n] (b shared) or batched a[..., m, k] x b[..., k, n].
/// With transpose_b, b is read as [..., n, k].
Var matmul(const Var& a, const Var& b, bool transpose_b = false);

/// Elementwise with broadcasting of b over leading axes of a (b's shape must
/// be a suffix of a's shape, or b must hold a single element).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);

Var concat(std::span<const Var> xs, int axis);
Var slice(const Var& x, int axis, std::int64_t start, std::int64_t length);
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, std::vector<int> perm);

/// table[V, d] gathered at int32 ids[...] -> [..., d].
Var embedding(const Var& table, const Tensor& ids);

/// Softmax over the last axis. With causal, entries whose last-axis index
/// exceeds their second-to-last-axis index are masked out.
Var softmax(const Var& x, bool causal = false);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
Var relu(const Var& x);
/// tanh approximation.
Var gelu(const Var& x);
Var sigmoid(const Var& x);

/// Cross entropy of logits[..., V] against int32 targets[...].
Var cross_entropy(const Var& logits, const Tensor& targets, Reduction reduction = Reduction::Mean);
Var mse_loss(const Var& pred, const Tensor& target);
Var sum(const Var& x);

/// x W^T + b, with W stored [d_out, d_in].
Var linear(const Var& x, const Var& weight, const Var* bias);

}  // namespace lst::ops
