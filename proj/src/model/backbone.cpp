#include "lst/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace lst {

namespace {

Tensor take_rows(const Tensor& t, std::int64_t start, std::int64_t count) {
  if (!t.defined()) return t;
  if (start < 0 || count < 0 || start + count > t.dim(0)) {
    throw InputError("Batch::rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for batch of " + std::to_string(t.dim(0)));
  }
  Shape shape = t.shape();
  shape[0] = count;
  const auto row = t.numel() / t.dim(0);
  Tensor out(shape, DType::Int32);
  auto src = t.data<std::int32_t>().subspan(static_cast<std::size_t>(start * row), static_cast<std::size_t>(count * row));
  std::copy(src.begin(), src.end(), out.data<std::int32_t>().begin());
  return out;
}

}  // namespace

Batch Batch::rows(std::int64_t start, std::int64_t count) const {
  return {take_rows(src, start, count), take_rows(dec_in, start, count), take_rows(targets, start, count)};
}

ParamList BackboneParams::parameters() const {
  ParamList out;
  out.push_back(tok_emb);
  out.push_back(enc_pos);
  for (const auto& b : enc) b.collect(out);
  enc_final.collect(out);
  if (config.has_decoder()) {
    out.push_back(dec_pos);
    for (const auto& b : dec) b.collect(out);
    dec_final.collect(out);
  }
  return out;
}

namespace {

LinearParams copy_linear(const LinearParams& p) { return {p.weight.deep_copy(), p.bias.deep_copy()}; }
LayerNormParams copy_ln(const LayerNormParams& p) { return {p.gamma.deep_copy(), p.beta.deep_copy()}; }
AttentionParams copy_attn(const AttentionParams& p) {
  return {copy_linear(p.q), copy_linear(p.k), copy_linear(p.v), copy_linear(p.o), p.heads};
}
BlockParams copy_block(const BlockParams& b) {
  BlockParams c;
  c.ln_self = copy_ln(b.ln_self);
  c.self_attn = copy_attn(b.self_attn);
  c.has_cross = b.has_cross;
  if (b.has_cross) {
    c.ln_cross = copy_ln(b.ln_cross);
    c.cross_attn = copy_attn(b.cross_attn);
  }
  c.ln_ff = copy_ln(b.ln_ff);
  c.ff = {copy_linear(b.ff.in), copy_linear(b.ff.out)};
  return c;
}

}  // namespace

BackboneParams BackboneParams::deep_copy() const {
  BackboneParams c;
  c.config = config;
  c.tok_emb = tok_emb.deep_copy();
  c.enc_pos = enc_pos.deep_copy();
  for (const auto& b : enc) c.enc.push_back(copy_block(b));
  c.enc_final = copy_ln(enc_final);
  if (config.has_decoder()) {
    c.dec_pos = dec_pos.deep_copy();
    for (const auto& b : dec) c.dec.push_back(copy_block(b));
    c.dec_final = copy_ln(dec_final);
  }
  return c;
}

void BackboneParams::set_trainable(bool on) const {
  for (auto p : parameters()) p.set_trainable(on);
}

BackboneParams init_backbone(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto dt = config.dtype;
  const auto d = config.d_model;
  BackboneParams p;
  p.config = config;
  p.config.seed = seed;
  p.tok_emb = Parameter("backbone.tok_emb", random_normal({config.vocab, d}, dt, 1.0 / std::sqrt(d), rng));
  p.enc_pos = Parameter("backbone.enc.pos", random_normal({config.max_seq, d}, dt, 1.0 / std::sqrt(d), rng));
  for (int i = 0; i < config.layers; ++i) {
    p.enc.push_back(make_block("backbone.enc." + std::to_string(i + 1), d, d, config.d_ff, config.heads, false,
                               dt, rng));
  }
  p.enc_final = make_layer_norm("backbone.enc.final_ln", d, dt);
  if (config.has_decoder()) {
    p.dec_pos = Parameter("backbone.dec.pos", random_normal({config.max_seq, d}, dt, 1.0 / std::sqrt(d), rng));
    for (int i = 0; i < config.layers; ++i) {
      p.dec.push_back(make_block("backbone.dec." + std::to_string(i + 1), d, d, config.d_ff, config.heads, true,
                                 dt, rng));
    }
    p.dec_final = make_layer_norm("backbone.dec.final_ln", d, dt);
  }
  return p;
}

namespace {

Var embed(Tape& tape, const BackboneParams& p, const Parameter& pos, const Tensor& ids, const Parameter* prompt) {
  const auto batch = ids.dim(0);
  Var x = ops::embedding(tape.param(p.tok_emb), ids);
  if (prompt) {
    OwnerScope scope(tape, Owner::Inserted);
    Var pv = tape.param(*prompt);
    const auto plen = pv.value.dim(0);
    Var row = ops::reshape(pv, {1, plen, pv.value.dim(1)});
    std::vector<Var> parts(static_cast<std::size_t>(batch), row);
    Var prefix = ops::concat(parts, 0);
    std::vector<Var> both{prefix, x};
    x = ops::concat(both, 1);
  }
  const auto total = x.value.dim(1);
  if (total > p.config.max_seq) {
    throw InputError("sequence length " + std::to_string(total) + " exceeds max_seq " +
                     std::to_string(p.config.max_seq));
  }
  return ops::add(x, ops::slice(tape.param(pos), 0, 0, total));
}

}  // namespace

Var lm_head(Tape& tape, const BackboneParams& params, const Var& h) {
  OwnerScope scope(tape, Owner::Head);
  return ops::matmul(h, tape.param(params.tok_emb), true);
}

BackboneOutput backbone_forward(Tape& tape, const BackboneParams& p, const Batch& batch, const Insertions* ins,
                                ForwardOptions opts) {
  const auto& cfg = p.config;
  if (batch.src.dtype() != DType::Int32 || batch.src.rank() != 2) {
    throw InputError("backbone_forward: src must be int32 [B, S]");
  }
  if (cfg.has_decoder() && !batch.dec_in.defined()) {
    throw InputError("backbone_forward: encoder-decoder model needs decoder inputs");
  }
  if (ins && !ins->enc.empty() && ins->enc.size() != p.enc.size()) {
    throw WiringError("backbone_forward: insertion count does not match encoder layers");
  }
  if (ins && !ins->dec.empty() && ins->dec.size() != p.dec.size()) {
    throw WiringError("backbone_forward: insertion count does not match decoder layers");
  }

  BackboneOutput out;
  Var enc_memory;
  std::int64_t prompt_len = 0;
  {
    OwnerScope scope(tape, Owner::Backbone);
    const Parameter* prompt = ins ? ins->prompt : nullptr;
    if (prompt) prompt_len = prompt->value().dim(0);
    Var x = embed(tape, p, p.enc_pos, batch.src, prompt);
    out.taps.encoder.push_back(x.detach());
    if (!opts.embeddings_only) {
      for (std::size_t i = 0; i < p.enc.size(); ++i) {
        const BlockInsertions* bi = (ins && !ins->enc.empty()) ? &ins->enc[i] : nullptr;
        x = block_forward(tape, p.enc[i], x, nullptr, false, cfg.ln_eps, bi);
        out.taps.encoder.push_back(x.detach());
      }
    }
    if (opts.embeddings_only && !cfg.has_decoder()) return out;
    if (!opts.embeddings_only) enc_memory = layer_norm_forward(tape, p.enc_final, x, cfg.ln_eps);

    if (!cfg.has_decoder()) {
      if (!opts.logits) return out;
      Var h = enc_memory;
      if (prompt_len > 0) h = ops::slice(h, 1, prompt_len, h.value.dim(1) - prompt_len);
      out.logits = lm_head(tape, p, h);
      return out;
    }

    Var y = embed(tape, p, p.dec_pos, batch.dec_in, nullptr);
    out.taps.decoder.push_back(y.detach());
    if (opts.embeddings_only) return out;
    for (std::size_t i = 0; i < p.dec.size(); ++i) {
      const BlockInsertions* bi = (ins && !ins->dec.empty()) ? &ins->dec[i] : nullptr;
      y = block_forward(tape, p.dec[i], y, &enc_memory, true, cfg.ln_eps, bi);
      out.taps.decoder.push_back(y.detach());
    }
    if (!opts.logits) return out;
    y = layer_norm_forward(tape, p.dec_final, y, cfg.ln_eps);
    out.logits = lm_head(tape, p, y);
  }
  return out;
}

}  // namespace lst
