#include "lst/kernels.hpp"

#include <Eigen/Core>

namespace lst::kernels {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MMap = Eigen::Map<RowMat<T>>;

template <class T>
void gemm(const T* a, std::int64_t ar, std::int64_t ac, bool ta, const T* b, std::int64_t br,
          std::int64_t bc, bool tb, T* c) {
  CMap<T> A(a, ar, ac);
  CMap<T> B(b, br, bc);
  const auto m = ta ? ac : ar;
  const auto n = tb ? br : bc;
  MMap<T> C(c, m, n);
  if (!ta && !tb) {
    C.noalias() = A * B;
  } else if (!ta && tb) {
    C.noalias() = A * B.transpose();
  } else if (ta && !tb) {
    C.noalias() = A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B.transpose();
  }
}

}  // namespace

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) {
    throw DimensionError("add_inplace: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  dispatch_floating(a.dtype(), [&]<class T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  });
}

Tensor bmm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  if (a.rank() < 2 || b.rank() < 2) throw DimensionError("bmm: operands need rank >= 2");
  const auto ar = a.dim(-2), ac = a.dim(-1);
  const auto br = b.dim(-2), bc = b.dim(-1);
  const auto m = ta ? ac : ar;
  const auto k = ta ? ar : ac;
  const auto kb = tb ? bc : br;
  const auto n = tb ? br : bc;
  if (k != kb) {
    throw DimensionError("bmm: inner dims " + std::to_string(k) + " vs " + std::to_string(kb));
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape, a.dtype());
  const std::int64_t batch = a.numel() / (ar * ac);

  dispatch_floating(a.dtype(), [&]<class T>() {
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* pc = out.data<T>().data();
    if (b.rank() == 2 && a.rank() > 2) {
      if (ta) throw DimensionError("bmm: shared rhs requires untransposed lhs");
      gemm<T>(pa, batch * ar, ac, false, pb, br, bc, tb, pc);
      return;
    }
    if (b.rank() != a.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw DimensionError("bmm: batch dims differ " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
    }
    for (std::int64_t i = 0; i < batch; ++i) {
      gemm<T>(pa + i * ar * ac, ar, ac, ta, pb + i * br * bc, br, bc, tb, pc + i * m * n);
    }
  });
  return out;
}

Tensor reduce_to(const Tensor& t, const Shape& to) {
  Tensor out(to, t.dtype());
  const auto inner = numel(to);
  dispatch_floating(t.dtype(), [&]<class T>() {
    auto src = t.data<T>();
    auto dst = out.data<T>();
    if (inner == 1) {
      T s = 0;
      for (auto v : src) s += v;
      dst[0] = s;
      return;
    }
    const auto outer = t.numel() / inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      const T* row = src.data() + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[static_cast<std::size_t>(i)] += row[i];
    }
  });
  return out;
}

Tensor permute(const Tensor& t, const std::vector<int>& perm) {
  const int r = t.rank();
  if (static_cast<int>(perm.size()) != r) throw DimensionError("permute: rank mismatch");
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = t.dim(perm[static_cast<std::size_t>(i)]);
  Tensor out(out_shape, t.dtype());

  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(i + 1)] * t.dim(i + 1);
  }
  std::vector<std::int64_t> src_stride(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    src_stride[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }

  dispatch_floating(t.dtype(), [&]<class T>() {
    auto src = t.data<T>();
    auto dst = out.data<T>();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
    std::int64_t offset = 0;
    const auto n = out.numel();
    const auto last = static_cast<std::size_t>(r - 1);
    const auto last_dim = out_shape[last];
    const auto last_stride = src_stride[last];
    for (std::int64_t flat = 0; flat < n; flat += last_dim) {
      for (std::int64_t j = 0; j < last_dim; ++j) {
        dst[static_cast<std::size_t>(flat + j)] = src[static_cast<std::size_t>(offset + j * last_stride)];
      }
      for (int ax = r - 2; ax >= 0; --ax) {
        const auto a = static_cast<std::size_t>(ax);
        ++idx[a];
        offset += src_stride[a];
        if (idx[a] < out_shape[a]) break;
        offset -= src_stride[a] * idx[a];
        idx[a] = 0;
      }
    }
  });
  return out;
}

}  // namespace lst::kernels
