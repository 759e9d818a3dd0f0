#pragma once

#include <vector>

#include "lst/blocks.hpp"
#include "lst/config.hpp"

namespace lst {

/// Frozen-or-trainable transformer: tied token embedding / LM head, learned
/// absolute positions per stack, pre-LN layers, final layer norm per stack.
struct BackboneParams {
  ModelConfig config;
  Parameter tok_emb;  // [V, d]; the LM head is its transpose
  Parameter enc_pos;  // [S, d]
  Parameter dec_pos;  // [S, d], encoder-decoder only
  std::vector<BlockParams> enc, dec;
  LayerNormParams enc_final, dec_final;

  ParamList parameters() const;
  BackboneParams deep_copy() const;
  void set_trainable(bool on) const;
};

/// One batch of token ids. Encoder-only tasks leave dec_in undefined.
struct Batch {
  Tensor src;      // int32 [B, S_src]
  Tensor dec_in;   // int32 [B, S_tgt]
  Tensor targets;  // int32 [B, S_out]
  std::int64_t size() const { return src.dim(0); }
  /// Rows [start, start + count) of every defined tensor.
  Batch rows(std::int64_t start, std::int64_t count) const;
};

/// Backbone activations exposed to ladders: index 0 is the post-embedding
/// hidden state, index i the output of layer i. Detached from the tape.
struct Taps {
  std::vector<Var> encoder;
  std::vector<Var> decoder;
};

/// Hooks for PETL methods that live inside the backbone.
struct Insertions {
  std::vector<BlockInsertions> enc, dec;  // empty, or one per layer
  const Parameter* prompt = nullptr;      // [P, d], prepended to the encoder input
};

struct ForwardOptions {
  bool logits = true;
  /// Stop after the embeddings (only tap 0 of each stack is produced).
  bool embeddings_only = false;
};

struct BackboneOutput {
  Var logits;  // [B, S_out, V]
  Taps taps;
};

BackboneParams init_backbone(const ModelConfig& config, std::uint64_t seed);

BackboneOutput backbone_forward(Tape& tape, const BackboneParams& params, const Batch& batch,
                                const Insertions* ins = nullptr, ForwardOptions opts = {});

/// h [B, S, d] -> logits [B, S, V] through the tied embedding.
Var lm_head(Tape& tape, const BackboneParams& params, const Var& h);

}  // namespace lst
