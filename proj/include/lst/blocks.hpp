#pragma once

#include <string>
#include <vector>

#include "lst/ops.hpp"
#include "lst/rng.hpp"

// Transformer building blocks shared by the backbone, the side network and
// the inserted PETL modules.
namespace lst {

struct LinearParams {
  Parameter weight;  // [d_out, d_in]
  Parameter bias;    // [d_out]

  std::int64_t d_out() const { return weight.value().dim(0); }
  std::int64_t d_in() const { return weight.value().dim(1); }
  void collect(ParamList& out) const;
};

struct LayerNormParams {
  Parameter gamma;  // named "<prefix>.weight"
  Parameter beta;   // named "<prefix>.bias"
  void collect(ParamList& out) const;
};

struct AttentionParams {
  LinearParams q, k, v, o;
  int heads = 1;
  void collect(ParamList& out) const;
};

struct FeedForwardParams {
  LinearParams in, out;
  void collect(ParamList& out) const;
};

/// Pre-layer-norm transformer layer: self-attention, optional cross-attention,
/// feed-forward; each sublayer wrapped as x + f(LN(x)).
struct BlockParams {
  LayerNormParams ln_self;
  AttentionParams self_attn;
  bool has_cross = false;
  LayerNormParams ln_cross;
  AttentionParams cross_attn;
  LayerNormParams ln_ff;
  FeedForwardParams ff;
  void collect(ParamList& out) const;
};

/// Bottleneck adapter d -> h -> d with ReLU, added residually to its input.
struct AdapterParams {
  LinearParams down, up;
  void collect(ParamList& out) const;
};

/// Low-rank update W + B A with A [k, d_in] and B [d_out, k].
struct LoraParams {
  Parameter a, b;
  void collect(ParamList& out) const;
};

struct AttentionInsertions {
  const LoraParams* lora_q = nullptr;
  const LoraParams* lora_v = nullptr;
};

struct BlockInsertions {
  const AdapterParams* after_self = nullptr;
  const AdapterParams* after_cross = nullptr;
  const AdapterParams* after_ff = nullptr;
  AttentionInsertions self, cross;
};

// Initializers. Weights are N(0, 1/d_in); biases and layer-norm offsets are
// zero; layer-norm scales are one.
LinearParams make_linear(const std::string& name, std::int64_t d_out, std::int64_t d_in, DType dt, Rng& rng,
                         bool zero_weight = false);
LayerNormParams make_layer_norm(const std::string& name, std::int64_t width, DType dt);
AttentionParams make_attention(const std::string& name, std::int64_t d_model, std::int64_t d_attn, int heads,
                               DType dt, Rng& rng);
BlockParams make_block(const std::string& name, std::int64_t d_model, std::int64_t d_attn, std::int64_t d_ff,
                       int heads, bool cross, DType dt, Rng& rng);

// Forward passes.
Var linear_forward(Tape& tape, const LinearParams& p, const Var& x);
Var layer_norm_forward(Tape& tape, const LayerNormParams& p, const Var& x, double eps);
Var attention_forward(Tape& tape, const AttentionParams& p, const Var& x_q, const Var& x_kv, bool causal,
                      const AttentionInsertions* ins);
Var adapter_forward(Tape& tape, const AdapterParams& p, const Var& x);
Var lora_delta(Tape& tape, const LoraParams& p, const Var& x);
Var block_forward(Tape& tape, const BlockParams& p, const Var& x, const Var* memory, bool causal, double eps,
                  const BlockInsertions* ins);

}  // namespace lst
