#include "lst/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lst/kernels.hpp"

namespace lst::ops {

namespace {

void require_floating(const char* op, const Var& v) {
  if (!v.value.defined()) throw ContractError(std::string(op) + ": undefined input");
  if (!is_floating(v.dtype())) throw ContractError(std::string(op) + ": expected floating input");
}

void require_same_dtype(const char* op, const Var& a, const Var& b) {
  require_floating(op, a);
  require_floating(op, b);
  if (a.dtype() != b.dtype()) {
    throw ContractError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                        dtype_name(b.dtype()));
  }
}

/// Number of trailing elements b covers when broadcast against a.
std::int64_t broadcast_inner(const char* op, const Shape& a, const Shape& b) {
  if (numel(b) == 1) return 1;
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                         shape_str(a) + " (trailing axes must match)");
  }
  return numel(b);
}

template <class T, class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape(), x.dtype());
  auto src = x.data<T>();
  auto dst = out.data<T>();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

Tensor mul_tensors(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape(), a.dtype());
  const auto inner = b.numel();
  dispatch_floating(a.dtype(), [&]<class T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto z = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * y[i % static_cast<std::size_t>(inner)];
  });
  return out;
}

Tensor scaled(const Tensor& t, double factor) {
  Tensor out(t.shape(), t.dtype());
  dispatch_floating(t.dtype(), [&]<class T>() {
    auto x = t.data<T>();
    auto z = out.data<T>();
    const T f = static_cast<T>(factor);
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * f;
  });
  return out;
}

int norm_axis(const char* op, int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return axis;
}

}  // namespace

Var matmul(const Var& a, const Var& b, bool transpose_b) {
  require_same_dtype("matmul", a, b);
  if (a.value.rank() < 2 || b.value.rank() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const auto k = a.value.dim(-1);
  const auto kb = transpose_b ? b.value.dim(-1) : b.value.dim(-2);
  if (k != kb) {
    throw DimensionError("matmul: contraction axis mismatch, lhs axis -1 = " + std::to_string(k) +
                         ", rhs axis " + (transpose_b ? "-1" : "-2") + " = " + std::to_string(kb));
  }
  const bool shared_rhs = b.value.rank() == 2;
  if (!shared_rhs && (b.value.rank() != a.value.rank() ||
                      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))) {
    throw DimensionError("matmul: batch axes differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor out = kernels::bmm(a.value, false, b.value, transpose_b);

  NodeBuilder nb("matmul", {&a, &b});
  if (nb.requires_grad()) {
    const int slot_b = nb.input_requires_grad(0) ? nb.save_var(b, SaveReason::InputActivation) : -1;
    const int slot_a = nb.input_requires_grad(1) ? nb.save_var(a, SaveReason::InputActivation) : -1;
    const Shape a_shape = a.shape();
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      if (ctx.needs_grad(0)) {
        ctx.accumulate(0, kernels::bmm(g, false, ctx.slot(slot_b), !transpose_b));
      }
      if (ctx.needs_grad(1)) {
        const Tensor& av = ctx.slot(slot_a);
        if (shared_rhs) {
          const auto rows = av.numel() / a_shape.back();
          Tensor a2 = av.reshape({rows, a_shape.back()});
          Tensor g2 = g.reshape({rows, g.dim(-1)});
          ctx.accumulate(1, transpose_b ? kernels::bmm(g2, true, a2, false)
                                        : kernels::bmm(a2, true, g2, false));
        } else {
          ctx.accumulate(1, transpose_b ? kernels::bmm(g, true, av, false)
                                        : kernels::bmm(av, true, g, false));
        }
      }
    });
  }
  return nb.finish(std::move(out));
}

namespace {

Var add_sub(const char* op, const Var& a, const Var& b, double sign) {
  require_same_dtype(op, a, b);
  const auto inner = broadcast_inner(op, a.shape(), b.shape());
  Tensor out(a.shape(), a.dtype());
  dispatch_floating(a.dtype(), [&]<class T>() {
    auto x = a.value.data<T>();
    auto y = b.value.data<T>();
    auto z = out.data<T>();
    const auto n = static_cast<std::size_t>(inner);
    const T s = static_cast<T>(sign);
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] + s * y[i % n];
  });
  NodeBuilder nb(op, {&a, &b});
  if (nb.requires_grad()) {
    const Shape b_shape = b.shape();
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      if (ctx.needs_grad(0)) ctx.accumulate(0, g.clone());
      if (ctx.needs_grad(1)) {
        Tensor gb = kernels::reduce_to(g, b_shape);
        ctx.accumulate(1, sign < 0 ? scaled(gb, -1.0) : std::move(gb));
      }
    });
  }
  return nb.finish(std::move(out));
}

}  // namespace

Var add(const Var& a, const Var& b) { return add_sub("add", a, b, 1.0); }
Var sub(const Var& a, const Var& b) { return add_sub("sub", a, b, -1.0); }

Var mul(const Var& a, const Var& b) {
  require_same_dtype("mul", a, b);
  broadcast_inner("mul", a.shape(), b.shape());
  Tensor out = mul_tensors(a.value, b.value);
  NodeBuilder nb("mul", {&a, &b});
  if (nb.requires_grad()) {
    const int slot_b = nb.input_requires_grad(0) ? nb.save_var(b, SaveReason::InputActivation) : -1;
    const int slot_a = nb.input_requires_grad(1) ? nb.save_var(a, SaveReason::InputActivation) : -1;
    const Shape b_shape = b.shape();
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      if (ctx.needs_grad(0)) ctx.accumulate(0, mul_tensors(g, ctx.slot(slot_b)));
      if (ctx.needs_grad(1)) {
        ctx.accumulate(1, kernels::reduce_to(mul_tensors(g, ctx.slot(slot_a)), b_shape));
      }
    });
  }
  return nb.finish(std::move(out));
}

Var scale(const Var& x, double factor) {
  require_floating("scale", x);
  NodeBuilder nb("scale", {&x});
  if (nb.requires_grad()) {
    nb.set_backward([=](BackwardContext& ctx) { ctx.accumulate(0, scaled(ctx.grad_output(), factor)); });
  }
  return nb.finish(scaled(x.value, factor));
}

Var concat(std::span<const Var> xs, int axis) {
  if (xs.empty()) throw ContractError("concat: no inputs");
  require_floating("concat", xs[0]);
  const int rank = xs[0].value.rank();
  axis = norm_axis("concat", axis, rank);
  Shape out_shape = xs[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<std::int64_t> sizes;
  for (const auto& x : xs) {
    require_same_dtype("concat", xs[0], x);
    if (x.value.rank() != rank) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != axis && x.value.dim(i) != xs[0].value.dim(i)) {
        throw DimensionError("concat: axis " + std::to_string(i) + " differs: " +
                             shape_str(x.shape()) + " vs " + shape_str(xs[0].shape()));
      }
    }
    sizes.push_back(x.value.dim(axis));
    out_shape[static_cast<std::size_t>(axis)] += x.value.dim(axis);
  }
  std::int64_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[static_cast<std::size_t>(i)];
  std::int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
  const auto total = out_shape[static_cast<std::size_t>(axis)];

  Tensor out(out_shape, xs[0].dtype());
  dispatch_floating(out.dtype(), [&]<class T>() {
    auto dst = out.data<T>();
    std::int64_t offset = 0;
    for (std::size_t p = 0; p < xs.size(); ++p) {
      auto src = xs[p].value.data<T>();
      const auto chunk = sizes[p] * inner;
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(src.data() + o * chunk, chunk, dst.data() + o * total * inner + offset);
      }
      offset += chunk;
    }
  });

  std::vector<const Var*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  NodeBuilder nb("concat", ptrs);
  if (nb.requires_grad()) {
    const Shape shape_copy = out_shape;
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      std::int64_t offset = 0;
      for (std::size_t p = 0; p < sizes.size(); ++p) {
        const auto chunk = sizes[p] * inner;
        if (ctx.needs_grad(static_cast<int>(p))) {
          Shape ps = shape_copy;
          ps[static_cast<std::size_t>(axis)] = sizes[p];
          Tensor gp(ps, g.dtype());
          dispatch_floating(g.dtype(), [&]<class T>() {
            auto src = g.data<T>();
            auto dst = gp.data<T>();
            for (std::int64_t o = 0; o < outer; ++o) {
              std::copy_n(src.data() + o * total * inner + offset, chunk, dst.data() + o * chunk);
            }
          });
          ctx.accumulate(static_cast<int>(p), std::move(gp));
        }
        offset += chunk;
      }
    });
  }
  return nb.finish(std::move(out));
}

Var slice(const Var& x, int axis, std::int64_t start, std::int64_t length) {
  require_floating("slice", x);
  const int rank = x.value.rank();
  axis = norm_axis("slice", axis, rank);
  const auto extent = x.value.dim(axis);
  if (start < 0 || length < 0 || start + length > extent) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") exceeds axis " + std::to_string(axis) +
                         " of size " + std::to_string(extent));
  }
  std::int64_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= x.value.dim(i);
  const auto outer = x.value.numel() / (extent * inner);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  Tensor out(out_shape, x.dtype());
  dispatch_floating(x.dtype(), [&]<class T>() {
    auto src = x.value.data<T>();
    auto dst = out.data<T>();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + (o * extent + start) * inner, length * inner,
                  dst.data() + o * length * inner);
    }
  });
  NodeBuilder nb("slice", {&x});
  if (nb.requires_grad()) {
    const Shape in_shape = x.shape();
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      Tensor gx(in_shape, g.dtype());
      dispatch_floating(g.dtype(), [&]<class T>() {
        auto src = g.data<T>();
        auto dst = gx.data<T>();
        for (std::int64_t o = 0; o < outer; ++o) {
          std::copy_n(src.data() + o * length * inner, length * inner,
                      dst.data() + (o * extent + start) * inner);
        }
      });
      ctx.accumulate(0, std::move(gx));
    });
  }
  return nb.finish(std::move(out));
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value.reshape(std::move(shape));
  NodeBuilder nb("reshape", {&x});
  if (nb.requires_grad()) {
    const Shape in_shape = x.shape();
    nb.set_backward([=](BackwardContext& ctx) { ctx.accumulate(0, ctx.grad_output().clone().reshape(in_shape)); });
  }
  return nb.finish(std::move(out));
}

Var permute(const Var& x, std::vector<int> perm) {
  require_floating("permute", x);
  Tensor out = kernels::permute(x.value, perm);
  NodeBuilder nb("permute", {&x});
  if (nb.requires_grad()) {
    std::vector<int> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    nb.set_backward([=](BackwardContext& ctx) { ctx.accumulate(0, kernels::permute(ctx.grad_output(), inverse)); });
  }
  return nb.finish(std::move(out));
}

Var embedding(const Var& table, const Tensor& ids) {
  require_floating("embedding", table);
  if (ids.dtype() != DType::Int32) throw ContractError("embedding: ids must be int32");
  if (table.value.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  const auto vocab = table.value.dim(0);
  const auto width = table.value.dim(1);
  auto id_span = ids.data<std::int32_t>();
  for (auto id : id_span) {
    if (id < 0 || id >= vocab) {
      throw InputError("embedding: token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
  }
  Shape out_shape = ids.shape();
  out_shape.push_back(width);
  Tensor out(out_shape, table.dtype());
  dispatch_floating(table.dtype(), [&]<class T>() {
    auto src = table.value.data<T>();
    auto dst = out.data<T>();
    for (std::size_t i = 0; i < id_span.size(); ++i) {
      std::copy_n(src.data() + id_span[i] * width, width, dst.data() + static_cast<std::int64_t>(i) * width);
    }
  });
  NodeBuilder nb("embedding", {&table});
  if (nb.requires_grad()) {
    const int slot_ids = nb.save(ids, SaveReason::Other);
    const Shape table_shape = table.shape();
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      auto idv = ctx.slot(slot_ids).data<std::int32_t>();
      Tensor gt(table_shape, g.dtype());
      dispatch_floating(g.dtype(), [&]<class T>() {
        auto src = g.data<T>();
        auto dst = gt.data<T>();
        for (std::size_t i = 0; i < idv.size(); ++i) {
          T* row = dst.data() + idv[i] * width;
          const T* gr = src.data() + static_cast<std::int64_t>(i) * width;
          for (std::int64_t j = 0; j < width; ++j) row[j] += gr[j];
        }
      });
      ctx.accumulate(0, std::move(gt));
    });
  }
  return nb.finish(std::move(out));
}

Var softmax(const Var& x, bool causal) {
  require_floating("softmax", x);
  const auto cols = x.value.dim(-1);
  const auto rows_per_block = causal ? x.value.dim(-2) : 1;
  if (causal && rows_per_block != cols) {
    throw DimensionError("softmax: causal mask needs square trailing axes, got " + shape_str(x.shape()));
  }
  Tensor out(x.shape(), x.dtype());
  dispatch_floating(x.dtype(), [&]<class T>() {
    auto src = x.value.data<T>();
    auto dst = out.data<T>();
    const auto rows = x.value.numel() / cols;
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* in = src.data() + r * cols;
      T* o = dst.data() + r * cols;
      const auto valid = causal ? (r % rows_per_block) + 1 : cols;
      T mx = in[0];
      for (std::int64_t j = 1; j < valid; ++j) mx = std::max(mx, in[j]);
      T s = 0;
      for (std::int64_t j = 0; j < valid; ++j) {
        o[j] = std::exp(in[j] - mx);
        s += o[j];
      }
      for (std::int64_t j = 0; j < valid; ++j) o[j] /= s;
      for (std::int64_t j = valid; j < cols; ++j) o[j] = 0;
    }
  });
  NodeBuilder nb("softmax", {&x});
  if (nb.requires_grad()) {
    const int slot_y = nb.save(out, SaveReason::Derivative);
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      const Tensor& y = ctx.slot(slot_y);
      Tensor gx(g.shape(), g.dtype());
      dispatch_floating(g.dtype(), [&]<class T>() {
        auto gs = g.data<T>();
        auto ys = y.data<T>();
        auto dx = gx.data<T>();
        const auto rows = g.numel() / cols;
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* gr = gs.data() + r * cols;
          const T* yr = ys.data() + r * cols;
          T dot = 0;
          for (std::int64_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
          T* d = dx.data() + r * cols;
          for (std::int64_t j = 0; j < cols; ++j) d[j] = yr[j] * (gr[j] - dot);
        }
      });
      ctx.accumulate(0, std::move(gx));
    });
  }
  return nb.finish(std::move(out));
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_same_dtype("layer_norm", x, gamma);
  require_same_dtype("layer_norm", x, beta);
  const auto width = x.value.dim(-1);
  if (gamma.shape() != Shape{width} || beta.shape() != Shape{width}) {
    throw DimensionError("layer_norm: scale/offset shape " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " vs last axis " + std::to_string(width));
  }
  const auto rows = x.value.numel() / width;
  Tensor xhat(x.shape(), x.dtype());
  Tensor rstd({rows}, x.dtype());
  Tensor out(x.shape(), x.dtype());
  dispatch_floating(x.dtype(), [&]<class T>() {
    auto src = x.value.data<T>();
    auto xh = xhat.data<T>();
    auto rs = rstd.data<T>();
    auto o = out.data<T>();
    auto gm = gamma.value.data<T>();
    auto bt = beta.value.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* in = src.data() + r * width;
      T mean = 0;
      for (std::int64_t j = 0; j < width; ++j) mean += in[j];
      mean /= static_cast<T>(width);
      T var = 0;
      for (std::int64_t j = 0; j < width; ++j) var += (in[j] - mean) * (in[j] - mean);
      var /= static_cast<T>(width);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
      rs[static_cast<std::size_t>(r)] = inv;
      for (std::int64_t j = 0; j < width; ++j) {
        const T h = (in[j] - mean) * inv;
        xh[static_cast<std::size_t>(r * width + j)] = h;
        o[static_cast<std::size_t>(r * width + j)] = h * gm[static_cast<std::size_t>(j)] + bt[static_cast<std::size_t>(j)];
      }
    }
  });
  NodeBuilder nb("layer_norm", {&x, &gamma, &beta});
  if (nb.requires_grad()) {
    const bool need_x = nb.input_requires_grad(0);
    const bool need_gamma = nb.input_requires_grad(1);
    int slot_xhat = -1, slot_rstd = -1, slot_gamma = -1;
    if (need_x || need_gamma) {
      slot_xhat = nb.save(xhat, need_x ? SaveReason::Derivative : SaveReason::InputActivation);
    }
    if (need_x) {
      slot_rstd = nb.save(rstd, SaveReason::Derivative);
      slot_gamma = nb.save_var(gamma, SaveReason::InputActivation);
    }
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& g = ctx.grad_output();
      if (ctx.needs_grad(2)) ctx.accumulate(2, kernels::reduce_to(g, {width}));
      if (ctx.needs_grad(1)) {
        ctx.accumulate(1, kernels::reduce_to(mul_tensors(g, ctx.slot(slot_xhat)), {width}));
      }
      if (!ctx.needs_grad(0)) return;
      Tensor gx(g.shape(), g.dtype());
      dispatch_floating(g.dtype(), [&]<class T>() {
        auto gs = g.data<T>();
        auto xh = ctx.slot(slot_xhat).data<T>();
        auto rs = ctx.slot(slot_rstd).data<T>();
        auto gm = ctx.slot(slot_gamma).data<T>();
        auto dx = gx.data<T>();
        for (std::int64_t r = 0; r < rows; ++r) {
          T mean_gy = 0, mean_gyx = 0;
          for (std::int64_t j = 0; j < width; ++j) {
            const auto i = static_cast<std::size_t>(r * width + j);
            const T gy = gs[i] * gm[static_cast<std::size_t>(j)];
            mean_gy += gy;
            mean_gyx += gy * xh[i];
          }
          mean_gy /= static_cast<T>(width);
          mean_gyx /= static_cast<T>(width);
          for (std::int64_t j = 0; j < width; ++j) {
            const auto i = static_cast<std::size_t>(r * width + j);
            const T gy = gs[i] * gm[static_cast<std::size_t>(j)];
            dx[i] = rs[static_cast<std::size_t>(r)] * (gy - mean_gy - xh[i] * mean_gyx);
          }
        }
      });
      ctx.accumulate(0, std::move(gx));
    });
  }
  return nb.finish(std::move(out));
}

namespace {

/// Elementwise nonlinearity whose derivative is materialized in the forward
/// pass and retained as a derivative tensor.
template <class F, class DF>
Var pointwise(const char* op, const Var& x, F f, DF df) {
  require_floating(op, x);
  Tensor out = dispatch_floating(x.dtype(), [&]<class T>() { return map_unary<T>(x.value, f); });
  NodeBuilder nb(op, {&x});
  if (nb.requires_grad()) {
    Tensor deriv = dispatch_floating(x.dtype(), [&]<class T>() { return map_unary<T>(x.value, df); });
    const int slot = nb.save(deriv, SaveReason::Derivative);
    nb.set_backward([=](BackwardContext& ctx) { ctx.accumulate(0, mul_tensors(ctx.grad_output(), ctx.slot(slot))); });
  }
  return nb.finish(std::move(out));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var relu(const Var& x) {
  return pointwise(
      "relu", x, [](auto v) { return v > 0 ? v : decltype(v)(0); },
      [](auto v) { return v > 0 ? decltype(v)(1) : decltype(v)(0); });
}

Var gelu(const Var& x) {
  return pointwise(
      "gelu", x,
      [](auto v) {
        using T = decltype(v);
        const T t = std::tanh(T(kGeluC) * (v + T(kGeluA) * v * v * v));
        return T(0.5) * v * (T(1) + t);
      },
      [](auto v) {
        using T = decltype(v);
        const T t = std::tanh(T(kGeluC) * (v + T(kGeluA) * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * T(kGeluC) * (T(1) + T(3 * kGeluA) * v * v);
      });
}

Var sigmoid(const Var& x) {
  auto sig = [](auto v) {
    using T = decltype(v);
    return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  };
  return pointwise("sigmoid", x, sig, [sig](auto v) {
    const auto s = sig(v);
    return s * (decltype(v)(1) - s);
  });
}

Var cross_entropy(const Var& logits, const Tensor& targets, Reduction reduction) {
  require_floating("cross_entropy", logits);
  if (targets.dtype() != DType::Int32) throw ContractError("cross_entropy: targets must be int32");
  const auto classes = logits.value.dim(-1);
  const auto rows = logits.value.numel() / classes;
  if (targets.numel() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.numel()) + " targets for " +
                         std::to_string(rows) + " logit rows of " + shape_str(logits.shape()));
  }
  auto tg = targets.data<std::int32_t>();
  for (auto t : tg) {
    if (t < 0 || t >= classes) throw InputError("cross_entropy: target " + std::to_string(t) + " out of range");
  }
  Tensor probs(logits.shape(), logits.dtype());
  double loss = 0.0;
  dispatch_floating(logits.dtype(), [&]<class T>() {
    auto src = logits.value.data<T>();
    auto p = probs.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* in = src.data() + r * classes;
      T* pr = p.data() + r * classes;
      T mx = in[0];
      for (std::int64_t j = 1; j < classes; ++j) mx = std::max(mx, in[j]);
      T s = 0;
      for (std::int64_t j = 0; j < classes; ++j) {
        pr[j] = std::exp(in[j] - mx);
        s += pr[j];
      }
      for (std::int64_t j = 0; j < classes; ++j) pr[j] /= s;
      const auto t = tg[static_cast<std::size_t>(r)];
      loss += static_cast<double>(std::log(s) + mx - in[t]);
    }
  });
  if (reduction == Reduction::Mean) loss /= static_cast<double>(rows);
  if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
  Tensor out = Tensor::scalar(loss, logits.dtype());

  NodeBuilder nb("cross_entropy", {&logits});
  if (nb.requires_grad()) {
    const int slot_p = nb.save(probs, SaveReason::Derivative);
    const int slot_t = nb.save(targets, SaveReason::Other);
    const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(rows) : 1.0;
    nb.set_backward([=](BackwardContext& ctx) {
      const Tensor& p = ctx.slot(slot_p);
      auto tv = ctx.slot(slot_t).data<std::int32_t>();
      const double g0 = ctx.grad_output().at(0) * norm;
      Tensor gx(p.shape(), p.dtype());
      dispatch_floating(p.dtype(), [&]<class T>() {
        auto ps = p.data<T>();
        auto dx = gx.data<T>();
        const T g = static_cast<T>(g0);
        for (std::size_t i = 0; i < ps.size(); ++i) dx[i] = ps[i] * g;
        for (std::int64_t r = 0; r < rows; ++r) dx[static_cast<std::size_t>(r * classes + tv[static_cast<std::size_t>(r)])] -= g;
      });
      ctx.accumulate(0, std::move(gx));
    });
  }
  return nb.finish(std::move(out));
}

Var mse_loss(const Var& pred, const Tensor& target) {
  require_floating("mse_loss", pred);
  if (pred.shape() != target.shape() || pred.dtype() != target.dtype()) {
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  Tensor diff(pred.shape(), pred.dtype());
  double loss = 0.0;
  dispatch_floating(pred.dtype(), [&]<class T>() {
    auto p = pred.value.data<T>();
    auto t = target.data<T>();
    auto d = diff.data<T>();
    for (std::size_t i = 0; i < p.size(); ++i) {
      d[i] = p[i] - t[i];
      loss += static_cast<double>(d[i]) * static_cast<double>(d[i]);
    }
  });
  const auto n = static_cast<double>(pred.value.numel());
  loss /= n;
  if (!std::isfinite(loss)) throw NumericError("mse_loss: non-finite loss");
  NodeBuilder nb("mse_loss", {&pred});
  if (nb.requires_grad()) {
    const int slot = nb.save(diff, SaveReason::Derivative);
    nb.set_backward([=](BackwardContext& ctx) {
      ctx.accumulate(0, scaled(ctx.slot(slot), 2.0 * ctx.grad_output().at(0) / n));
    });
  }
  return nb.finish(Tensor::scalar(loss, pred.dtype()));
}

Var sum(const Var& x) {
  require_floating("sum", x);
  Tensor out = kernels::reduce_to(x.value, {1});
  NodeBuilder nb("sum", {&x});
  if (nb.requires_grad()) {
    const Shape in_shape = x.shape();
    nb.set_backward([=](BackwardContext& ctx) {
      ctx.accumulate(0, Tensor::full(in_shape, ctx.grad_output().dtype(), ctx.grad_output().at(0)));
    });
  }
  return nb.finish(std::move(out));
}

Var linear(const Var& x, const Var& weight, const Var* bias) {
  Var y = matmul(x, weight, true);
  return bias ? add(y, *bias) : y;
}

}  // namespace lst::ops
