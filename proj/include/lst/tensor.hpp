#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lst/errors.hpp"

namespace lst {

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1, Int32 = 2 };

std::size_t dtype_width(DType dt);
const char* dtype_name(DType dt);
bool is_floating(DType dt);

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense, contiguous, row-major tensor. Copies share storage; use clone() for
/// a deep copy. Every storage carries a process-unique id so that retained
/// memory can be deduplicated when the same buffer is saved twice.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, DType dtype);

  static Tensor zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }
  static Tensor full(Shape shape, DType dtype, double value);
  static Tensor from_values(Shape shape, DType dtype, std::span<const double> values);
  static Tensor from_ids(Shape shape, std::span<const std::int32_t> ids);
  static Tensor scalar(double value, DType dtype) { return full({1}, dtype, value); }

  const Shape& shape() const { return shape_; }
  DType dtype() const { return dtype_; }
  std::int64_t numel() const { return lst::numel(shape_); }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t nbytes() const { return static_cast<std::size_t>(numel()) * dtype_width(dtype_); }
  bool defined() const { return storage_ != nullptr; }
  std::uint64_t storage_id() const;

  template <class T>
  std::span<T> data();
  template <class T>
  std::span<const T> data() const;

  /// Element access as double, regardless of dtype. Slow; for tests and I/O.
  double at(std::int64_t flat_index) const;
  void set(std::int64_t flat_index, double value);
  std::vector<double> to_vector() const;

  /// Same storage, new shape (numel must match).
  Tensor reshape(Shape shape) const;
  Tensor clone() const;
  Tensor to(DType dtype) const;

  bool bit_equal(const Tensor& other) const;

 private:
  struct Storage {
    std::variant<std::vector<float>, std::vector<double>, std::vector<std::int32_t>> buf;
    std::uint64_t id;
  };

  Shape shape_;
  DType dtype_ = DType::Float32;
  std::shared_ptr<Storage> storage_;
};

template <class T>
std::span<T> Tensor::data() {
  if (!storage_) throw ContractError("data() on undefined tensor");
  auto* vec = std::get_if<std::vector<T>>(&storage_->buf);
  if (!vec) throw ContractError("tensor dtype mismatch in data<T>()");
  return {vec->data(), vec->size()};
}

template <class T>
std::span<const T> Tensor::data() const {
  if (!storage_) throw ContractError("data() on undefined tensor");
  const auto* vec = std::get_if<std::vector<T>>(&storage_->buf);
  if (!vec) throw ContractError("tensor dtype mismatch in data<T>()");
  return {vec->data(), vec->size()};
}

/// Calls fn.template operator()<T>() with T = float or double matching dt.
template <class Fn>
decltype(auto) dispatch_floating(DType dt, Fn&& fn) {
  switch (dt) {
    case DType::Float32:
      return fn.template operator()<float>();
    case DType::Float64:
      return fn.template operator()<double>();
    default:
      throw ContractError("expected a floating-point tensor");
  }
}

}  // namespace lst
