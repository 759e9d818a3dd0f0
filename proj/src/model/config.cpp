#include "lst/config.hpp"

namespace lst {

const char* architecture_name(Architecture a) {
  return a == Architecture::Encoder ? "encoder" : "encoder-decoder";
}

Architecture parse_architecture(const std::string& s) {
  if (s == "encoder") return Architecture::Encoder;
  if (s == "encoder-decoder" || s == "encdec") return Architecture::EncoderDecoder;
  throw ConfigError("unknown architecture '" + s + "'");
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model: layers must be >= 1");
  if (heads < 1 || d_model < 1) throw ConfigError("model: d_model and heads must be positive");
  if (d_model % heads != 0) {
    throw ConfigError("model: d_model " + std::to_string(d_model) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (vocab < 2) throw ConfigError("model: vocab must be >= 2");
  if (d_ff < 1 || max_seq < 1) throw ConfigError("model: d_ff and max_seq must be positive");
  if (!is_floating(dtype)) throw ConfigError("model: dtype must be float32 or float64");
}

}  // namespace lst
