#pragma once

#include <cstdint>
#include <string>

#include "lst/tensor.hpp"

namespace lst {

enum class Architecture { Encoder, EncoderDecoder };

const char* architecture_name(Architecture a);
Architecture parse_architecture(const std::string& s);

/// Shape of the backbone transformer.
struct ModelConfig {
  int layers = 6;  // per stack
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int vocab = 32;
  int max_seq = 32;
  Architecture arch = Architecture::EncoderDecoder;
  std::uint64_t seed = 0;
  DType dtype = DType::Float32;
  double ln_eps = 1e-6;

  int head_dim() const { return d_model / heads; }
  bool has_decoder() const { return arch == Architecture::EncoderDecoder; }

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
};

}  // namespace lst
