#include "lst/methods.hpp"

#include <algorithm>
#include <cmath>

namespace lst {

const char* method_name(Method m) {
  switch (m) {
    case Method::Full:
      return "full";
    case Method::Adapter:
      return "adapter";
    case Method::Lora:
      return "lora";
    case Method::Bitfit:
      return "bitfit";
    case Method::Prompt:
      return "prompt";
    case Method::Lst:
      return "lst";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : kAllMethods) {
    if (s == method_name(m)) return m;
  }
  throw ConfigError("unknown method '" + s + "' (full, adapter, lora, bitfit, prompt, lst)");
}

const char* side_init_name(SideInit s) {
  switch (s) {
    case SideInit::Random:
      return "random";
    case SideInit::Magnitude:
      return "magnitude";
    case SideInit::Fisher:
      return "fisher";
  }
  return "?";
}

SideInit parse_side_init(const std::string& s) {
  if (s == "random") return SideInit::Random;
  if (s == "magnitude") return SideInit::Magnitude;
  if (s == "fisher") return SideInit::Fisher;
  throw ConfigError("unknown side init '" + s + "' (random, magnitude, fisher)");
}

void MethodConfig::validate(const ModelConfig& model) const {
  model.validate();
  const int stacks = model.has_decoder() ? 2 : 1;
  if (freeze_layers < 0 || freeze_layers > stacks * model.layers) {
    throw ConfigError("freeze_layers=" + std::to_string(freeze_layers) + " outside 0.." +
                      std::to_string(stacks * model.layers));
  }
  switch (method) {
    case Method::Adapter:
      if (adapter_dim < 1) throw ConfigError("adapter: hidden dim must be >= 1");
      break;
    case Method::Lora:
      if (lora_rank < 1) throw ConfigError("lora: rank must be >= 1");
      break;
    case Method::Prompt:
      if (prompt_len < 1) throw ConfigError("prompt: length must be >= 1");
      if (prompt_len >= model.max_seq) {
        throw ConfigError("prompt: length " + std::to_string(prompt_len) + " must be below max_seq " +
                          std::to_string(model.max_seq));
      }
      break;
    case Method::Lst:
      side.resolved(model);
      if (freeze_layers != 0) throw ConfigError("lst: use side layer dropping instead of freeze_layers");
      if (side_init == SideInit::Fisher && fisher_samples < 1) throw ConfigError("lst: fisher_samples must be >= 1");
      break;
    case Method::Full:
    case Method::Bitfit:
      break;
  }
}

void LayerModules::collect(ParamList& out) const {
  for (const auto* a : {&after_self, &after_cross, &after_ff}) {
    if (*a) (*a)->collect(out);
  }
  for (const auto* l : {&self_q, &self_v, &cross_q, &cross_v}) {
    if (*l) (*l)->collect(out);
  }
}

namespace {

BlockInsertions block_insertions(const LayerModules& m) {
  BlockInsertions b;
  b.after_self = m.after_self ? &*m.after_self : nullptr;
  b.after_cross = m.after_cross ? &*m.after_cross : nullptr;
  b.after_ff = m.after_ff ? &*m.after_ff : nullptr;
  b.self = {m.self_q ? &*m.self_q : nullptr, m.self_v ? &*m.self_v : nullptr};
  b.cross = {m.cross_q ? &*m.cross_q : nullptr, m.cross_v ? &*m.cross_v : nullptr};
  return b;
}

}  // namespace

Var TrainableModel::forward(Tape& tape, const Batch& batch) const {
  if (side) {
    ForwardOptions opts;
    opts.logits = false;
    opts.embeddings_only = side->config.ladders == LadderMode::None;
    auto out = backbone_forward(tape, backbone, batch, nullptr, opts);
    return side_forward(tape, *side, backbone, out.taps);
  }
  Insertions ins;
  for (const auto& m : enc_modules) ins.enc.push_back(block_insertions(m));
  for (const auto& m : dec_modules) ins.dec.push_back(block_insertions(m));
  ins.prompt = prompt ? &*prompt : nullptr;
  return backbone_forward(tape, backbone, batch, &ins).logits;
}

Var TrainableModel::loss(Tape& tape, const Batch& batch) const {
  return ops::cross_entropy(forward(tape, batch), batch.targets);
}

ParamList TrainableModel::method_parameters() const {
  ParamList out;
  for (const auto& m : enc_modules) m.collect(out);
  for (const auto& m : dec_modules) m.collect(out);
  if (prompt) out.push_back(*prompt);
  if (side) {
    auto s = side->parameters();
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

ParamList TrainableModel::parameters() const {
  ParamList out = backbone.parameters();
  auto m = method_parameters();
  out.insert(out.end(), m.begin(), m.end());
  return out;
}

ParamList TrainableModel::trainable() const {
  ParamList out;
  for (const auto& p : parameters()) {
    if (p.trainable()) out.push_back(p);
  }
  return out;
}

std::int64_t TrainableModel::trainable_count() const { return count_elements(parameters(), true); }
std::int64_t TrainableModel::total_count() const { return count_elements(parameters(), false); }
double TrainableModel::trainable_fraction() const {
  return static_cast<double>(trainable_count()) / static_cast<double>(total_count());
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void layer_norms(const BackboneParams& b, ParamList& out) {
  auto add = [&](const LayerNormParams& ln) { ln.collect(out); };
  for (const auto& blk : b.enc) {
    add(blk.ln_self);
    add(blk.ln_ff);
  }
  add(b.enc_final);
  if (b.config.has_decoder()) {
    for (const auto& blk : b.dec) {
      add(blk.ln_self);
      add(blk.ln_cross);
      add(blk.ln_ff);
    }
    add(b.dec_final);
  }
}

AdapterParams make_adapter(const std::string& name, std::int64_t d, int h, DType dt, Rng& rng) {
  return {make_linear(name + ".down", h, d, dt, rng), make_linear(name + ".up", d, h, dt, rng, true)};
}

LoraParams make_lora(const std::string& name, std::int64_t d_out, std::int64_t d_in, int k, DType dt, Rng& rng) {
  return {Parameter(name + ".a", random_normal({k, d_in}, dt, 1.0 / std::sqrt(static_cast<double>(d_in)), rng)),
          Parameter(name + ".b", Tensor::zeros({d_out, k}, dt))};
}

std::vector<LayerModules> make_modules(const std::string& stack, const std::vector<BlockParams>& blocks,
                                       const MethodConfig& cfg, std::int64_t d, DType dt, Rng& rng) {
  std::vector<LayerModules> out(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto prefix = stack + "." + std::to_string(i + 1);
    auto& m = out[i];
    const bool cross = blocks[i].has_cross;
    if (cfg.method == Method::Adapter) {
      m.after_self = make_adapter("adapter." + prefix + ".after_self", d, cfg.adapter_dim, dt, rng);
      if (cross) m.after_cross = make_adapter("adapter." + prefix + ".after_cross", d, cfg.adapter_dim, dt, rng);
      m.after_ff = make_adapter("adapter." + prefix + ".after_ff", d, cfg.adapter_dim, dt, rng);
    } else {
      const auto& sa = blocks[i].self_attn;
      m.self_q = make_lora("lora." + prefix + ".self.q", sa.q.d_out(), sa.q.d_in(), cfg.lora_rank, dt, rng);
      m.self_v = make_lora("lora." + prefix + ".self.v", sa.v.d_out(), sa.v.d_in(), cfg.lora_rank, dt, rng);
      if (cross) {
        const auto& ca = blocks[i].cross_attn;
        m.cross_q = make_lora("lora." + prefix + ".cross.q", ca.q.d_out(), ca.q.d_in(), cfg.lora_rank, dt, rng);
        m.cross_v = make_lora("lora." + prefix + ".cross.v", ca.v.d_out(), ca.v.d_in(), cfg.lora_rank, dt, rng);
      }
    }
  }
  return out;
}

}  // namespace

TrainableModel apply_method(const BackboneParams& backbone, const MethodConfig& config, std::uint64_t seed,
                            const Batch* fisher_data) {
  const auto& mc = backbone.config;
  config.validate(mc);
  TrainableModel m;
  m.backbone = backbone.deep_copy();
  m.config = config;
  m.backbone.set_trainable(false);
  Rng rng(seed);

  switch (config.method) {
    case Method::Full:
      m.backbone.set_trainable(true);
      break;
    case Method::Adapter: {
      ParamList lns;
      layer_norms(m.backbone, lns);
      for (auto p : lns) p.set_trainable(true);
      [[fallthrough]];
    }
    case Method::Lora:
      m.enc_modules = make_modules("enc", m.backbone.enc, config, mc.d_model, mc.dtype, rng);
      if (mc.has_decoder()) m.dec_modules = make_modules("dec", m.backbone.dec, config, mc.d_model, mc.dtype, rng);
      break;
    case Method::Bitfit:
      for (auto p : m.backbone.parameters()) {
        if (ends_with(p.name(), ".bias")) p.set_trainable(true);
      }
      break;
    case Method::Prompt: {
      const auto& emb = m.backbone.tok_emb.value();
      const auto d = emb.dim(1);
      Tensor init({config.prompt_len, d}, emb.dtype());
      for (int i = 0; i < config.prompt_len; ++i) {
        const auto row = rng.uniform_int(0, emb.dim(0) - 1);
        for (std::int64_t j = 0; j < d; ++j) init.set(i * d + j, emb.at(row * d + j));
      }
      m.prompt = Parameter("prompt.embeddings", init);
      break;
    }
    case Method::Lst: {
      const auto side_seed = rng.fork(1).engine()();
      if (config.side_init == SideInit::Random) {
        m.side = init_side_random(mc, config.side, side_seed);
        break;
      }
      ImportanceMap imp;
      if (config.side_init == SideInit::Magnitude) {
        imp = magnitude_importance(m.backbone.parameters());
      } else {
        if (!fisher_data) throw ConfigError("lst: fisher initialization needs sample data");
        const auto n = std::min<std::int64_t>(config.fisher_samples, fisher_data->size());
        imp = fisher_importance(m.backbone, *fisher_data, n);
      }
      auto pruned = prune_backbone_to_side(m.backbone, imp, config.side, side_seed);
      m.side = std::move(pruned.side);
      m.pruned_kept = std::move(pruned.kept);
      break;
    }
  }
  if (config.freeze_layers > 0) freeze_prefix(m, config.freeze_layers);
  return m;
}

void freeze_prefix(TrainableModel& model, int n) {
  const auto& mc = model.backbone.config;
  const int L = mc.layers;
  const int stacks = mc.has_decoder() ? 2 : 1;
  if (n < 0 || n > stacks * L) {
    throw ConfigError("freeze_prefix: n=" + std::to_string(n) + " outside 0.." + std::to_string(stacks * L));
  }
  if (model.side) throw ConfigError("freeze_prefix: lst drops side layers instead of freezing");
  if (n == 0) return;
  auto freeze = [](const ParamList& ps) {
    for (auto p : ps) p.set_trainable(false);
  };
  auto& bb = model.backbone;
  freeze({bb.tok_emb, bb.enc_pos});
  for (int i = 1; i <= n; ++i) {
    const bool enc = i <= L;
    const auto idx = static_cast<std::size_t>(enc ? i - 1 : i - L - 1);
    ParamList ps;
    (enc ? bb.enc : bb.dec)[idx].collect(ps);
    freeze(ps);
    auto& mods = enc ? model.enc_modules : model.dec_modules;
    if (idx < mods.size()) mods[idx] = LayerModules{};
  }
  if (n >= L) {
    ParamList ps;
    bb.enc_final.collect(ps);
    freeze(ps);
  }
  if (n > L) freeze({bb.dec_pos});
  if (n == 2 * L) {
    ParamList ps;
    bb.dec_final.collect(ps);
    freeze(ps);
  }
  model.config.freeze_layers = n;
}

}  // namespace lst
