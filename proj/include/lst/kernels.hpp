#pragma once

#include "lst/tensor.hpp"

// Raw numeric kernels with no autograd. Shapes are checked by the callers in
// ops.cpp; these only assert what they rely on.
namespace lst::kernels {

/// a += b (same shape and dtype).
void add_inplace(Tensor& a, const Tensor& b);

/// Batched product op(a) * op(b) over the last two axes. `b` may be rank 2 and
/// is then shared across all leading axes of `a` (requires !trans_a).
Tensor bmm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b);

/// Sums `t` over leading axes so the result has shape `to` (a suffix of t's
/// shape, or {1} for a full reduction).
Tensor reduce_to(const Tensor& t, const Shape& to);

/// Generic axis permutation (copying).
Tensor permute(const Tensor& t, const std::vector<int>& perm);

}  // namespace lst::kernels
