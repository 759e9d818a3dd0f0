#pragma once

#include <string>
#include <vector>

#include "lst/methods.hpp"

namespace lst {

struct Workload {
  std::int64_t batch = 32;
  std::int64_t src_len = 24;  // encoder input, before any prompt
  std::int64_t tgt_len = 24;  // decoder input / output; ignored for encoder-only models
};

struct EstimateOptions {
  /// Count only the feed-forward sublayers: the input of each of the two
  /// matrices as {a} and the nonlinearity's derivative as {sigma'}. Attention,
  /// layer norms, embeddings and the loss are left out.
  bool paper_mode = false;
};

/// Closed-form memory of one training step from shapes alone. Retained bytes
/// follow the same save rules as the tape, so in the default mode estimate
/// and measurement coincide up to the rules this model encodes.
MemoryReport estimate(const MethodConfig& method, const ModelConfig& model, const Workload& work,
                      EstimateOptions opts = {});
MemoryReport estimate(const MethodConfig& method, const ModelConfig& model, std::int64_t batch, std::int64_t seq,
                      EstimateOptions opts = {});

/// Parameter census from shapes: {total elements, trainable elements}.
std::pair<std::int64_t, std::int64_t> estimate_parameter_counts(const MethodConfig& method, const ModelConfig& model);

struct CategoryCheck {
  std::string category;
  std::int64_t estimate = 0;
  std::int64_t empirical = 0;
  double rel_error = 0.0;
  /// Empirical zero with a nonzero estimate.
  bool mismatch = false;
};

/// |estimate - empirical| / empirical for every retained category and owner.
std::vector<CategoryCheck> validate(const MemoryReport& estimate, const MemoryReport& empirical);

}  // namespace lst
