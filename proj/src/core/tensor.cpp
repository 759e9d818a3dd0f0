#include "lst/tensor.hpp"

#include <atomic>
#include <cstring>
#include <sstream>

namespace lst {

namespace {
std::atomic<std::uint64_t> next_storage_id{1};
}

std::size_t dtype_width(DType dt) {
  switch (dt) {
    case DType::Float32:
      return 4;
    case DType::Float64:
      return 8;
    case DType::Int32:
      return 4;
  }
  return 0;
}

const char* dtype_name(DType dt) {
  switch (dt) {
    case DType::Float32:
      return "float32";
    case DType::Float64:
      return "float64";
    case DType::Int32:
      return "int32";
  }
  return "?";
}

bool is_floating(DType dt) { return dt == DType::Float32 || dt == DType::Float64; }

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  for (auto d : shape_) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape_));
  }
  const auto n = static_cast<std::size_t>(lst::numel(shape_));
  storage_ = std::make_shared<Storage>();
  storage_->id = next_storage_id.fetch_add(1, std::memory_order_relaxed);
  switch (dtype) {
    case DType::Float32:
      storage_->buf = std::vector<float>(n, 0.0f);
      break;
    case DType::Float64:
      storage_->buf = std::vector<double>(n, 0.0);
      break;
    case DType::Int32:
      storage_->buf = std::vector<std::int32_t>(n, 0);
      break;
  }
}

Tensor Tensor::full(Shape shape, DType dtype, double value) {
  Tensor t(std::move(shape), dtype);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, value);
  return t;
}

Tensor Tensor::from_values(Shape shape, DType dtype, std::span<const double> values) {
  Tensor t(std::move(shape), dtype);
  if (static_cast<std::int64_t>(values.size()) != t.numel()) {
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(t.shape()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) t.set(static_cast<std::int64_t>(i), values[i]);
  return t;
}

Tensor Tensor::from_ids(Shape shape, std::span<const std::int32_t> ids) {
  Tensor t(std::move(shape), DType::Int32);
  if (static_cast<std::int64_t>(ids.size()) != t.numel()) {
    throw DimensionError("from_ids: size mismatch for shape " + shape_str(t.shape()));
  }
  std::memcpy(t.data<std::int32_t>().data(), ids.data(), ids.size() * sizeof(std::int32_t));
  return t;
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

std::uint64_t Tensor::storage_id() const { return storage_ ? storage_->id : 0; }

double Tensor::at(std::int64_t i) const {
  switch (dtype_) {
    case DType::Float32:
      return data<float>()[static_cast<std::size_t>(i)];
    case DType::Float64:
      return data<double>()[static_cast<std::size_t>(i)];
    case DType::Int32:
      return data<std::int32_t>()[static_cast<std::size_t>(i)];
  }
  return 0.0;
}

void Tensor::set(std::int64_t i, double value) {
  switch (dtype_) {
    case DType::Float32:
      data<float>()[static_cast<std::size_t>(i)] = static_cast<float>(value);
      break;
    case DType::Float64:
      data<double>()[static_cast<std::size_t>(i)] = value;
      break;
    case DType::Int32:
      data<std::int32_t>()[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(value);
      break;
  }
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(numel()));
  for (std::int64_t i = 0; i < numel(); ++i) out[static_cast<std::size_t>(i)] = at(i);
  return out;
}

Tensor Tensor::reshape(Shape shape) const {
  if (lst::numel(shape) != numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::clone() const {
  Tensor t(shape_, dtype_);
  if (storage_) {
    t.storage_->buf = storage_->buf;
  }
  return t;
}

Tensor Tensor::to(DType dtype) const {
  if (dtype == dtype_) return clone();
  Tensor t(shape_, dtype);
  for (std::int64_t i = 0; i < numel(); ++i) t.set(i, at(i));
  return t;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
  if (!storage_ || !other.storage_) return storage_ == other.storage_;
  return std::visit(
      [&](const auto& a) {
        using V = std::decay_t<decltype(a)>;
        const auto& b = std::get<V>(other.storage_->buf);
        return a.size() == b.size() &&
               std::memcmp(a.data(), b.data(), a.size() * sizeof(typename V::value_type)) == 0;
      },
      storage_->buf);
}

}  // namespace lst
