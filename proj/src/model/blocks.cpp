#include "lst/blocks.hpp"

#include <cmath>

namespace lst {

void LinearParams::collect(ParamList& out) const {
  out.push_back(weight);
  out.push_back(bias);
}

void LayerNormParams::collect(ParamList& out) const {
  out.push_back(gamma);
  out.push_back(beta);
}

void AttentionParams::collect(ParamList& out) const {
  q.collect(out);
  k.collect(out);
  v.collect(out);
  o.collect(out);
}

void FeedForwardParams::collect(ParamList& out) const {
  in.collect(out);
  this->out.collect(out);
}

void BlockParams::collect(ParamList& out) const {
  ln_self.collect(out);
  self_attn.collect(out);
  if (has_cross) {
    ln_cross.collect(out);
    cross_attn.collect(out);
  }
  ln_ff.collect(out);
  ff.collect(out);
}

void AdapterParams::collect(ParamList& out) const {
  down.collect(out);
  up.collect(out);
}

void LoraParams::collect(ParamList& out) const {
  out.push_back(a);
  out.push_back(b);
}

LinearParams make_linear(const std::string& name, std::int64_t d_out, std::int64_t d_in, DType dt, Rng& rng,
                         bool zero_weight) {
  LinearParams p;
  Tensor w = zero_weight ? Tensor::zeros({d_out, d_in}, dt)
                         : random_normal({d_out, d_in}, dt, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  p.weight = Parameter(name + ".weight", std::move(w));
  p.bias = Parameter(name + ".bias", Tensor::zeros({d_out}, dt));
  return p;
}

LayerNormParams make_layer_norm(const std::string& name, std::int64_t width, DType dt) {
  return {Parameter(name + ".weight", Tensor::full({width}, dt, 1.0)),
          Parameter(name + ".bias", Tensor::zeros({width}, dt))};
}

AttentionParams make_attention(const std::string& name, std::int64_t d_model, std::int64_t d_attn, int heads,
                               DType dt, Rng& rng) {
  AttentionParams p;
  p.q = make_linear(name + ".q", d_attn, d_model, dt, rng);
  p.k = make_linear(name + ".k", d_attn, d_model, dt, rng);
  p.v = make_linear(name + ".v", d_attn, d_model, dt, rng);
  p.o = make_linear(name + ".o", d_model, d_attn, dt, rng);
  p.heads = heads;
  return p;
}

BlockParams make_block(const std::string& name, std::int64_t d_model, std::int64_t d_attn, std::int64_t d_ff,
                       int heads, bool cross, DType dt, Rng& rng) {
  BlockParams b;
  b.ln_self = make_layer_norm(name + ".ln_self", d_model, dt);
  b.self_attn = make_attention(name + ".self_attn", d_model, d_attn, heads, dt, rng);
  b.has_cross = cross;
  if (cross) {
    b.ln_cross = make_layer_norm(name + ".ln_cross", d_model, dt);
    b.cross_attn = make_attention(name + ".cross_attn", d_model, d_attn, heads, dt, rng);
  }
  b.ln_ff = make_layer_norm(name + ".ln_ff", d_model, dt);
  b.ff.in = make_linear(name + ".ff.in", d_ff, d_model, dt, rng);
  b.ff.out = make_linear(name + ".ff.out", d_model, d_ff, dt, rng);
  return b;
}

Var linear_forward(Tape& tape, const LinearParams& p, const Var& x) {
  Var w = tape.param(p.weight);
  Var b = tape.param(p.bias);
  return ops::linear(x, w, &b);
}

Var layer_norm_forward(Tape& tape, const LayerNormParams& p, const Var& x, double eps) {
  return ops::layer_norm(x, tape.param(p.gamma), tape.param(p.beta), eps);
}

Var lora_delta(Tape& tape, const LoraParams& p, const Var& x) {
  OwnerScope scope(tape, Owner::Inserted);
  Var low = ops::matmul(x, tape.param(p.a), true);
  return ops::matmul(low, tape.param(p.b), true);
}

namespace {

Var projection(Tape& tape, const LinearParams& p, const Var& x, const LoraParams* lora) {
  Var y = ops::matmul(x, tape.param(p.weight), true);
  if (lora) y = ops::add(y, lora_delta(tape, *lora, x));
  return ops::add(y, tape.param(p.bias));
}

/// [B, S, H*dh] -> [B, H, S, dh]
Var split_heads(const Var& x, int heads) {
  const auto b = x.value.dim(0), s = x.value.dim(1), w = x.value.dim(2);
  return ops::permute(ops::reshape(x, {b, s, heads, w / heads}), {0, 2, 1, 3});
}

/// [B, H, S, dh] -> [B, S, H*dh]
Var merge_heads(const Var& x) {
  const auto b = x.value.dim(0), h = x.value.dim(1), s = x.value.dim(2), dh = x.value.dim(3);
  return ops::reshape(ops::permute(x, {0, 2, 1, 3}), {b, s, h * dh});
}

}  // namespace

Var attention_forward(Tape& tape, const AttentionParams& p, const Var& x_q, const Var& x_kv, bool causal,
                      const AttentionInsertions* ins) {
  const LoraParams* lq = ins ? ins->lora_q : nullptr;
  const LoraParams* lv = ins ? ins->lora_v : nullptr;
  Var q = split_heads(projection(tape, p.q, x_q, lq), p.heads);
  Var k = split_heads(projection(tape, p.k, x_kv, nullptr), p.heads);
  Var v = split_heads(projection(tape, p.v, x_kv, lv), p.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.value.dim(3)));
  Var scores = ops::scale(ops::matmul(q, k, true), inv_sqrt);
  Var probs = ops::softmax(scores, causal);
  Var ctx = merge_heads(ops::matmul(probs, v));
  return linear_forward(tape, p.o, ctx);
}

Var adapter_forward(Tape& tape, const AdapterParams& p, const Var& x) {
  OwnerScope scope(tape, Owner::Inserted);
  Var h = ops::relu(linear_forward(tape, p.down, x));
  return ops::add(x, linear_forward(tape, p.up, h));
}

Var block_forward(Tape& tape, const BlockParams& p, const Var& x, const Var* memory, bool causal, double eps,
                  const BlockInsertions* ins) {
  Var h = layer_norm_forward(tape, p.ln_self, x, eps);
  Var a = attention_forward(tape, p.self_attn, h, h, causal, ins ? &ins->self : nullptr);
  if (ins && ins->after_self) a = adapter_forward(tape, *ins->after_self, a);
  Var out = ops::add(x, a);

  if (p.has_cross) {
    if (!memory) throw WiringError("block: cross-attention layer without encoder memory");
    h = layer_norm_forward(tape, p.ln_cross, out, eps);
    a = attention_forward(tape, p.cross_attn, h, *memory, false, ins ? &ins->cross : nullptr);
    if (ins && ins->after_cross) a = adapter_forward(tape, *ins->after_cross, a);
    out = ops::add(out, a);
  }

  h = layer_norm_forward(tape, p.ln_ff, out, eps);
  Var f = linear_forward(tape, p.ff.out, ops::gelu(linear_forward(tape, p.ff.in, h)));
  if (ins && ins->after_ff) f = adapter_forward(tape, *ins->after_ff, f);
  return ops::add(out, f);
}

}  // namespace lst
