#include "lst/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace lst {

namespace {

constexpr char kMagic[8] = {'L', 'S', 'T', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError("checkpoint: truncated file");
  return v;
}

const char* raw_bytes(const Tensor& t) {
  switch (t.dtype()) {
    case DType::Float32:
      return reinterpret_cast<const char*>(t.data<float>().data());
    case DType::Float64:
      return reinterpret_cast<const char*>(t.data<double>().data());
    case DType::Int32:
      return reinterpret_cast<const char*>(t.data<std::int32_t>().data());
  }
  return nullptr;
}

char* raw_bytes(Tensor& t) { return const_cast<char*>(raw_bytes(static_cast<const Tensor&>(t))); }

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ParamList& params) {
  TensorMap m;
  for (const auto& p : params) {
    if (!m.emplace(p.name(), p.value()).second) {
      throw WiringError("checkpoint: duplicate parameter name " + p.name());
    }
  }
  write_checkpoint(path, m);
}

void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::int64_t>(os, d);
    os.write(raw_bytes(t), static_cast<std::streamsize>(t.nbytes()));
  }
  if (!os) throw InputError("checkpoint: write failed for " + path.string());
}

TensorMap read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InputError("checkpoint: bad magic in " + path.string());
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(is);
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto dt = get<std::uint8_t>(is);
    if (dt > 2) throw InputError("checkpoint: bad dtype tag for " + name);
    const auto rank = get<std::uint32_t>(is);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::int64_t>(is));
    Tensor t(shape, static_cast<DType>(dt));
    is.read(raw_bytes(t), static_cast<std::streamsize>(t.nbytes()));
    if (!is) throw InputError("checkpoint: truncated values for " + name);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void load_into(const TensorMap& tensors, const ParamList& params, bool strict) {
  std::set<std::string> used;
  for (auto p : params) {
    auto it = tensors.find(p.name());
    if (it == tensors.end()) throw WiringError("checkpoint: missing parameter " + p.name());
    const Tensor& src = it->second;
    if (src.shape() != p.value().shape() || src.dtype() != p.value().dtype()) {
      throw WiringError("checkpoint: parameter " + p.name() + " has shape " + shape_str(src.shape()) + " " +
                        dtype_name(src.dtype()) + ", model expects " + shape_str(p.value().shape()) + " " +
                        dtype_name(p.value().dtype()));
    }
    std::memcpy(raw_bytes(p.value()), raw_bytes(src), src.nbytes());
    used.insert(p.name());
  }
  if (strict && used.size() != tensors.size()) {
    for (const auto& [name, t] : tensors) {
      if (!used.count(name)) throw WiringError("checkpoint: unexpected parameter " + name);
    }
  }
}

}  // namespace lst
