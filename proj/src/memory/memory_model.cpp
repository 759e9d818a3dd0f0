#include "lst/memory_model.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace lst {

namespace {

// ---------------------------------------------------------------------------
// Which backbone parameters a method trains.

struct Flags {
  Method method;
  int frozen;  // freeze_prefix count
  int layers;

  bool layer_frozen(bool dec, int i) const { return (dec ? layers + i : i) <= frozen; }
  bool any(std::initializer_list<Method> ms) const {
    for (auto m : ms) {
      if (m == method) return true;
    }
    return false;
  }
  bool weight(bool dec, int i) const { return method == Method::Full && !layer_frozen(dec, i); }
  bool bias(bool dec, int i) const { return any({Method::Full, Method::Bitfit}) && !layer_frozen(dec, i); }
  bool ln_gamma(bool dec, int i) const { return any({Method::Full, Method::Adapter}) && !layer_frozen(dec, i); }
  bool ln_beta(bool dec, int i) const {
    return any({Method::Full, Method::Adapter, Method::Bitfit}) && !layer_frozen(dec, i);
  }
  bool modules(bool dec, int i) const { return any({Method::Adapter, Method::Lora}) && !layer_frozen(dec, i); }
  bool final_frozen(bool dec) const { return dec ? frozen == 2 * layers : frozen >= layers; }
  bool final_gamma(bool dec) const { return any({Method::Full, Method::Adapter}) && !final_frozen(dec); }
  bool final_beta(bool dec) const {
    return any({Method::Full, Method::Adapter, Method::Bitfit}) && !final_frozen(dec);
  }
  bool embedding() const { return method == Method::Full && frozen == 0; }
  bool position(bool dec) const { return method == Method::Full && (dec ? frozen <= layers : frozen == 0); }
};

// ---------------------------------------------------------------------------
// Shape-level replay of the forward pass.

struct Sym {
  std::int64_t n = 0;  // elements
  bool grad = false;
  std::uint64_t id = 0;
  bool param = false;
};

class Replay {
 public:
  explicit Replay(std::size_t width) : width_(width) {}

  Owner owner = Owner::Other;
  MemoryReport report;

  Sym act(std::int64_t n, bool grad) { return {n, grad, ++next_, false}; }
  Sym param(std::int64_t n, bool trainable) { return {n, trainable, 0, true}; }
  Sym constant(std::int64_t n) { return act(n, false); }

  void save(const Sym& s, SaveReason reason, std::size_t elem_bytes = 0) {
    if (!s.param) record(s, reason, elem_bytes);
  }

  Sym matmul(const Sym& a, const Sym& b, std::int64_t out_n) {
    Sym out = act(out_n, a.grad || b.grad);
    if (out.grad) {
      if (a.grad) save(b, SaveReason::InputActivation);
      if (b.grad) save(a, SaveReason::InputActivation);
    }
    return out;
  }
  Sym add(const Sym& a, const Sym& b) { return act(std::max(a.n, b.n), a.grad || b.grad); }
  Sym mul(const Sym& a, const Sym& b) {
    Sym out = act(std::max(a.n, b.n), a.grad || b.grad);
    if (out.grad) {
      if (a.grad) save(b, SaveReason::InputActivation);
      if (b.grad) save(a, SaveReason::InputActivation);
    }
    return out;
  }
  Sym pointwise(const Sym& x) {
    Sym out = act(x.n, x.grad);
    if (out.grad) save(act(x.n, false), SaveReason::Derivative);
    return out;
  }
  Sym softmax(const Sym& x) {
    Sym out = act(x.n, x.grad);
    if (out.grad) save(out, SaveReason::Derivative);
    return out;
  }
  Sym layer_norm(const Sym& x, std::int64_t width, const Sym& gamma, const Sym& beta) {
    Sym out = act(x.n, x.grad || gamma.grad || beta.grad);
    if (out.grad) {
      if (x.grad || gamma.grad) save(act(x.n, false), x.grad ? SaveReason::Derivative : SaveReason::InputActivation);
      if (x.grad) save(act(x.n / width, false), SaveReason::Derivative);
    }
    return out;
  }
  Sym embedding(const Sym& table, const Sym& ids, std::int64_t out_n) {
    Sym out = act(out_n, table.grad);
    if (out.grad) save(ids, SaveReason::Other, 4);
    return out;
  }

 private:
  void record(const Sym& s, SaveReason reason, std::size_t elem_bytes) {
    if (!seen_.insert(s.id).second) return;
    const auto bytes = s.n * static_cast<std::int64_t>(elem_bytes ? elem_bytes : width_);
    report.retained_by_owner[static_cast<std::size_t>(owner)] += bytes;
    switch (reason) {
      case SaveReason::InputActivation:
        (owner == Owner::Ladder ? report.ladder_taps : report.retained_input_activations) += bytes;
        break;
      case SaveReason::Derivative:
        report.retained_derivatives += bytes;
        report.derivatives_by_owner[static_cast<std::size_t>(owner)] += bytes;
        break;
      case SaveReason::Other:
        report.retained_other += bytes;
        break;
    }
  }

  std::size_t width_;
  std::uint64_t next_ = 0;
  std::unordered_set<std::uint64_t> seen_;
};

class Scope {
 public:
  Scope(Replay& r, Owner o) : r_(r), prev_(r.owner) { r.owner = o; }
  ~Scope() { r_.owner = prev_; }

 private:
  Replay& r_;
  Owner prev_;
};

struct LinearFlags {
  bool weight = false;
  bool bias = false;
};

/// Per-layer view used while replaying one transformer block.
struct BlockSpec {
  std::int64_t d = 0, d_attn = 0, d_ff = 0;
  int heads = 1;
  bool cross = false;
  LinearFlags lin;      // all matrices of the block
  bool gamma = false;   // layer-norm scales
  bool beta = false;    // layer-norm offsets
  int adapter_dim = 0;  // 0: no adapters
  int lora_rank = 0;    // 0: no LoRA
};

struct Dims {
  std::int64_t rows;  // batch * sequence positions
  std::int64_t batch;
  std::int64_t seq;
};

Sym linear(Replay& r, const Sym& x, std::int64_t d_out, std::int64_t d_in, LinearFlags f, std::int64_t rows) {
  Sym y = r.matmul(x, r.param(d_out * d_in, f.weight), rows * d_out);
  return r.add(y, r.param(d_out, f.bias));
}

Sym projection(Replay& r, const Sym& x, std::int64_t d_out, std::int64_t d_in, LinearFlags f, int lora_rank,
               std::int64_t rows) {
  Sym y = r.matmul(x, r.param(d_out * d_in, f.weight), rows * d_out);
  if (lora_rank > 0) {
    Scope s(r, Owner::Inserted);
    Sym low = r.matmul(x, r.param(lora_rank * d_in, true), rows * lora_rank);
    Sym delta = r.matmul(low, r.param(d_out * lora_rank, true), rows * d_out);
    y = r.add(y, delta);
  }
  return r.add(y, r.param(d_out, f.bias));
}

Sym attention(Replay& r, const BlockSpec& b, const Sym& xq, const Sym& xkv, const Dims& q, const Dims& kv) {
  const int lora = b.lora_rank;
  Sym qp = projection(r, xq, b.d_attn, b.d, b.lin, lora, q.rows);
  Sym kp = projection(r, xkv, b.d_attn, b.d, b.lin, 0, kv.rows);
  Sym vp = projection(r, xkv, b.d_attn, b.d, b.lin, lora, kv.rows);
  // split_heads: reshape (shared storage) then permute (fresh storage)
  qp = r.act(qp.n, qp.grad);
  kp = r.act(kp.n, kp.grad);
  vp = r.act(vp.n, vp.grad);
  const auto score_n = q.batch * b.heads * q.seq * kv.seq;
  Sym scores = r.matmul(qp, kp, score_n);
  scores = r.act(scores.n, scores.grad);  // scale
  Sym probs = r.softmax(scores);
  Sym ctx = r.matmul(probs, vp, q.rows * b.d_attn);
  ctx = r.act(ctx.n, ctx.grad);  // merge_heads permute
  return linear(r, ctx, b.d, b.d_attn, b.lin, q.rows);
}

Sym adapter(Replay& r, const Sym& x, std::int64_t d, int h, std::int64_t rows) {
  Scope s(r, Owner::Inserted);
  Sym z = r.pointwise(linear(r, x, h, d, {true, true}, rows));
  return r.add(x, linear(r, z, d, h, {true, true}, rows));
}

Sym block(Replay& r, const BlockSpec& b, const Sym& x, const Sym* memory, const Dims& dx, const Dims& dm) {
  const Sym g = r.param(b.d, b.gamma);
  const Sym be = r.param(b.d, b.beta);
  Sym h = r.layer_norm(x, b.d, g, be);
  Sym a = attention(r, b, h, h, dx, dx);
  if (b.adapter_dim > 0) a = adapter(r, a, b.d, b.adapter_dim, dx.rows);
  Sym out = r.add(x, a);
  if (b.cross) {
    h = r.layer_norm(out, b.d, g, be);
    a = attention(r, b, h, *memory, dx, dm);
    if (b.adapter_dim > 0) a = adapter(r, a, b.d, b.adapter_dim, dx.rows);
    out = r.add(out, a);
  }
  h = r.layer_norm(out, b.d, g, be);
  Sym f = r.pointwise(linear(r, h, b.d_ff, b.d, b.lin, dx.rows));
  f = linear(r, f, b.d, b.d_ff, b.lin, dx.rows);
  if (b.adapter_dim > 0) f = adapter(r, f, b.d, b.adapter_dim, dx.rows);
  return r.add(out, f);
}

BlockSpec backbone_block(const ModelConfig& mc, const MethodConfig& meth, const Flags& fl, bool dec, int i) {
  BlockSpec b;
  b.d = mc.d_model;
  b.d_attn = mc.d_model;
  b.d_ff = mc.d_ff;
  b.heads = mc.heads;
  b.cross = dec;
  b.lin = {fl.weight(dec, i), fl.bias(dec, i)};
  b.gamma = fl.ln_gamma(dec, i);
  b.beta = fl.ln_beta(dec, i);
  if (fl.modules(dec, i)) {
    if (meth.method == Method::Adapter) b.adapter_dim = meth.adapter_dim;
    if (meth.method == Method::Lora) b.lora_rank = meth.lora_rank;
  }
  return b;
}

Sym embed(Replay& r, const ModelConfig& mc, const Sym& ids, const Dims& dims, bool emb_train, bool pos_train,
          std::int64_t prompt_len) {
  const auto d = mc.d_model;
  const Sym table = r.param(static_cast<std::int64_t>(mc.vocab) * d, emb_train);
  Sym x = r.embedding(table, ids, dims.batch * dims.seq * d);
  std::int64_t total = dims.seq;
  if (prompt_len > 0) {
    Scope s(r, Owner::Inserted);
    total += prompt_len;
    x = r.act(dims.batch * total * d, true);  // concat with the trainable prompt
  }
  Sym pos = r.act(total * d, pos_train);  // slice of the position table
  return r.add(x, pos);
}

struct Ctx {
  const ModelConfig& mc;
  const MethodConfig& meth;
  Flags fl;
  Workload work;
};

/// Loss on logits of `rows` positions.
void head_and_loss(Replay& r, const Ctx& c, const Sym& h, std::int64_t rows) {
  Sym logits;
  {
    Scope s(r, Owner::Head);
    logits = r.matmul(h, r.param(static_cast<std::int64_t>(c.mc.vocab) * c.mc.d_model, c.fl.embedding()),
                      rows * c.mc.vocab);
  }
  if (logits.grad) {
    Scope s(r, Owner::Other);
    r.save(r.act(logits.n, false), SaveReason::Derivative);
    r.save(r.constant(rows), SaveReason::Other, 4);
  }
}

void replay_baseline(Replay& r, const Ctx& c) {
  const auto& mc = c.mc;
  const bool prompt = c.meth.method == Method::Prompt;
  const std::int64_t plen = prompt ? c.meth.prompt_len : 0;
  const auto B = c.work.batch;
  Dims enc{B * (c.work.src_len + plen), B, c.work.src_len + plen};
  Dims enc_ids{B * c.work.src_len, B, c.work.src_len};
  Dims dec{B * c.work.tgt_len, B, c.work.tgt_len};

  Scope s(r, Owner::Backbone);
  Sym x = embed(r, mc, r.constant(enc_ids.rows), enc_ids, c.fl.embedding(), c.fl.position(false), plen);
  for (int i = 1; i <= mc.layers; ++i) x = block(r, backbone_block(mc, c.meth, c.fl, false, i), x, nullptr, enc, enc);
  Sym memory = r.layer_norm(x, mc.d_model, r.param(mc.d_model, c.fl.final_gamma(false)),
                            r.param(mc.d_model, c.fl.final_beta(false)));
  if (!mc.has_decoder()) {
    Sym h = memory;
    if (plen > 0) h = r.act(enc_ids.rows * mc.d_model, h.grad);  // slice off the prompt
    head_and_loss(r, c, h, enc_ids.rows);
    return;
  }
  Sym y = embed(r, mc, r.constant(dec.rows), dec, c.fl.embedding(), c.fl.position(true), 0);
  for (int i = 1; i <= mc.layers; ++i) y = block(r, backbone_block(mc, c.meth, c.fl, true, i), y, &memory, dec, enc);
  y = r.layer_norm(y, mc.d_model, r.param(mc.d_model, c.fl.final_gamma(true)),
                   r.param(mc.d_model, c.fl.final_beta(true)));
  head_and_loss(r, c, y, dec.rows);
}

Sym fuse(Replay& r, const Sym& hf, const Sym& hg) {
  Sym mu = r.pointwise(r.act(1, true));  // sigmoid(alpha / T)
  Sym diff = r.act(hf.n, hf.grad || hg.grad);
  return r.add(hg, r.mul(diff, mu));
}

Sym downsample(Replay& r, const Sym& tap, std::int64_t w, std::int64_t d, std::int64_t rows) {
  Scope s(r, Owner::Ladder);
  return linear(r, tap, w, d, {true, true}, rows);
}

Sym side_stack(Replay& r, const Ctx& c, const SideConfig& sc, const std::vector<int>& kept,
               const std::vector<Sym>& taps, const Sym* memory, const Dims& dx, const Dims& dm, bool output_stack) {
  const auto& mc = c.mc;
  const auto w = static_cast<std::int64_t>(mc.d_model / sc.reduction);
  BlockSpec b;
  b.d = w;
  b.d_attn = w;
  b.d_ff = mc.d_ff / sc.reduction;
  b.heads = mc.heads;
  b.cross = memory != nullptr;
  b.lin = {true, true};
  b.gamma = b.beta = true;
  Sym h = downsample(r, taps[0], w, mc.d_model, dx.rows);
  for (int i : kept) {
    if (sc.ladders == LadderMode::Full) {
      Sym hf = downsample(r, taps[static_cast<std::size_t>(i)], w, mc.d_model, dx.rows);
      h = fuse(r, hf, h);
    }
    h = block(r, b, h, memory, dx, dm);
  }
  if (sc.ladders == LadderMode::FinalOnly && output_stack) {
    Sym hf = downsample(r, taps.back(), w, mc.d_model, dx.rows);
    h = fuse(r, hf, h);
  }
  return r.layer_norm(h, w, r.param(w, true), r.param(w, true));
}

void replay_lst(Replay& r, const Ctx& c) {
  const auto& mc = c.mc;
  const SideConfig sc = c.meth.side.resolved(mc);
  const auto B = c.work.batch;
  Dims enc{B * c.work.src_len, B, c.work.src_len};
  Dims dec{B * c.work.tgt_len, B, c.work.tgt_len};
  const auto d = mc.d_model;

  // Frozen backbone: nothing retained, only the tap identities matter.
  std::vector<Sym> enc_taps, dec_taps;
  for (int i = 0; i <= mc.layers; ++i) enc_taps.push_back(r.act(enc.rows * d, false));
  for (int i = 0; i <= mc.layers; ++i) dec_taps.push_back(r.act(dec.rows * d, false));
  if (sc.ladders == LadderMode::None) {
    enc_taps.resize(1);
    dec_taps.resize(1);
  }

  Sym out;
  {
    Scope s(r, Owner::Side);
    const bool encdec = mc.has_decoder();
    Sym memory = side_stack(r, c, sc, sc.keep_enc, enc_taps, nullptr, enc, enc, !encdec);
    out = encdec ? side_stack(r, c, sc, sc.keep_dec, dec_taps, &memory, dec, enc, true) : memory;
    const auto w = d / sc.reduction;
    out = linear(r, out, d, w, {true, true}, (encdec ? dec : enc).rows);
  }
  head_and_loss(r, c, out, (mc.has_decoder() ? dec : enc).rows);
}

// ---------------------------------------------------------------------------
// Parameter census.

std::int64_t block_params(std::int64_t d, std::int64_t d_attn, std::int64_t d_ff, bool cross) {
  const std::int64_t ln = 2 * d;
  const std::int64_t attn = 3 * (d_attn * d + d_attn) + (d * d_attn + d);
  const std::int64_t ff = d_ff * d + d_ff + d * d_ff + d;
  return (cross ? 3 * ln + 2 * attn : 2 * ln + attn) + ff;
}

struct Census {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  void add(std::int64_t n, bool t) {
    total += n;
    if (t) trainable += n;
  }
};

void backbone_census(Census& c, const ModelConfig& mc, const MethodConfig& meth, const Flags& fl) {
  const std::int64_t d = mc.d_model, f = mc.d_ff;
  c.add(static_cast<std::int64_t>(mc.vocab) * d, fl.embedding());
  const int stacks = mc.has_decoder() ? 2 : 1;
  for (int s = 0; s < stacks; ++s) {
    const bool dec = s == 1;
    c.add(static_cast<std::int64_t>(mc.max_seq) * d, fl.position(dec));
    for (int i = 1; i <= mc.layers; ++i) {
      const int n_ln = dec ? 3 : 2;
      const int n_attn = dec ? 2 : 1;
      c.add(n_ln * d, fl.ln_gamma(dec, i));
      c.add(n_ln * d, fl.ln_beta(dec, i));
      c.add(n_attn * 4 * d * d + 2 * f * d, fl.weight(dec, i));
      c.add(n_attn * 4 * d + f + d, fl.bias(dec, i));
      if (fl.modules(dec, i)) {
        if (meth.method == Method::Adapter) {
          const std::int64_t h = meth.adapter_dim;
          c.add((n_attn + 1) * (h * d + h + d * h + d), true);
        } else {
          const std::int64_t k = meth.lora_rank;
          c.add(n_attn * 2 * (k * d + d * k), true);
        }
      }
    }
    c.add(d, fl.final_gamma(dec));
    c.add(d, fl.final_beta(dec));
  }
}

void side_census(Census& c, const ModelConfig& mc, const SideConfig& sc) {
  const std::int64_t d = mc.d_model;
  const std::int64_t w = d / sc.reduction, f = mc.d_ff / sc.reduction;
  const int stacks = mc.has_decoder() ? 2 : 1;
  for (int s = 0; s < stacks; ++s) {
    const bool dec = s == 1;
    const auto& kept = dec ? sc.keep_dec : sc.keep_enc;
    const std::int64_t down = w * d + w;
    c.add(down, true);  // tap 0
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (sc.ladders == LadderMode::Full) c.add(down + 1, true);
      c.add(block_params(w, w, f, dec), true);
    }
    const bool output = dec || !mc.has_decoder();
    if (sc.ladders == LadderMode::FinalOnly && output) c.add(down + 1, true);
    c.add(2 * w, true);
  }
  c.add(d * w + d, true);  // upsampler
}

// ---------------------------------------------------------------------------
// MLP-level accounting.

void paper_estimate(MemoryReport& rep, const Ctx& c) {
  const auto& mc = c.mc;
  const auto w = static_cast<std::int64_t>(dtype_width(mc.dtype));
  const auto B = c.work.batch;
  const std::int64_t plen = c.meth.method == Method::Prompt ? c.meth.prompt_len : 0;
  auto rows = [&](bool dec) { return B * (dec ? c.work.tgt_len : c.work.src_len + plen); };
  const int stacks = mc.has_decoder() ? 2 : 1;
  if (c.meth.method == Method::Lst) {
    const SideConfig sc = c.meth.side.resolved(mc);
    const std::int64_t sd = mc.d_model / sc.reduction, sf = mc.d_ff / sc.reduction;
    for (int s = 0; s < stacks; ++s) {
      const bool dec = s == 1;
      const auto n = static_cast<std::int64_t>((dec ? sc.keep_dec : sc.keep_enc).size());
      rep.retained_input_activations += n * rows(dec) * (sd + sf) * w;
      rep.retained_derivatives += n * rows(dec) * sf * w;
      std::int64_t ladders = 1;
      if (sc.ladders == LadderMode::Full) ladders += n;
      if (sc.ladders == LadderMode::FinalOnly && (dec || stacks == 1)) ladders += 1;
      rep.ladder_taps += ladders * rows(dec) * mc.d_model * w;
    }
    return;
  }
  for (int s = 0; s < stacks; ++s) {
    const bool dec = s == 1;
    for (int i = 1; i <= mc.layers; ++i) {
      if (c.fl.layer_frozen(dec, i)) continue;
      const std::int64_t r = rows(dec);
      // {sigma'} is needed whenever gradients flow through the layer
      rep.retained_derivatives += r * mc.d_ff * w;
      if (c.meth.method == Method::Full) rep.retained_input_activations += r * (mc.d_model + mc.d_ff) * w;
      if (c.meth.method == Method::Adapter) {
        const int n = dec ? 3 : 2;
        rep.retained_input_activations += n * r * (mc.d_model + c.meth.adapter_dim) * w;
        rep.retained_derivatives += n * r * c.meth.adapter_dim * w;
      }
      if (c.meth.method == Method::Lora) {
        const int n = dec ? 2 : 1;
        rep.retained_input_activations += n * r * (mc.d_model + 2 * c.meth.lora_rank) * w;
      }
    }
  }
}

}  // namespace

std::pair<std::int64_t, std::int64_t> estimate_parameter_counts(const MethodConfig& method, const ModelConfig& model) {
  method.validate(model);
  Flags fl{method.method, method.freeze_layers, model.layers};
  Census c;
  backbone_census(c, model, method, fl);
  if (method.method == Method::Prompt) c.add(static_cast<std::int64_t>(method.prompt_len) * model.d_model, true);
  if (method.method == Method::Lst) side_census(c, model, method.side.resolved(model));
  return {c.total, c.trainable};
}

MemoryReport estimate(const MethodConfig& method, const ModelConfig& model, const Workload& work,
                      EstimateOptions opts) {
  method.validate(model);
  const auto w = static_cast<std::int64_t>(dtype_width(model.dtype));
  Ctx ctx{model, method, Flags{method.method, method.freeze_layers, model.layers}, work};
  MemoryReport rep;
  if (work.batch > 0) {
    if (opts.paper_mode) {
      paper_estimate(rep, ctx);
    } else {
      Replay r(static_cast<std::size_t>(w));
      if (method.method == Method::Lst) {
        replay_lst(r, ctx);
      } else {
        replay_baseline(r, ctx);
      }
      rep = r.report;
    }
  }
  const auto [total, trainable] = estimate_parameter_counts(method, model);
  rep.parameters = total * w;
  rep.gradients = trainable * w;
  rep.optimizer_state = 2 * trainable * w;
  return rep;
}

MemoryReport estimate(const MethodConfig& method, const ModelConfig& model, std::int64_t batch, std::int64_t seq,
                      EstimateOptions opts) {
  return estimate(method, model, Workload{batch, seq, seq}, opts);
}

std::vector<CategoryCheck> validate(const MemoryReport& est, const MemoryReport& emp) {
  std::vector<CategoryCheck> out;
  auto check = [&](const std::string& name, std::int64_t e, std::int64_t m) {
    CategoryCheck c{name, e, m, 0.0, false};
    if (m == 0) {
      c.mismatch = e != 0;
      c.rel_error = e == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      c.rel_error = std::abs(static_cast<double>(e - m)) / static_cast<double>(m);
    }
    out.push_back(c);
  };
  check("retained_input_activations", est.retained_input_activations, emp.retained_input_activations);
  check("retained_derivatives", est.retained_derivatives, emp.retained_derivatives);
  check("ladder_taps", est.ladder_taps, emp.ladder_taps);
  check("retained_other", est.retained_other, emp.retained_other);
  check("retained_total", est.retained_total(), emp.retained_total());
  for (std::size_t o = 0; o < kOwnerCount; ++o) {
    const auto owner = static_cast<Owner>(o);
    check(std::string("owner_") + owner_name(owner), est.owner(owner), emp.owner(owner));
  }
  return out;
}

}  // namespace lst
