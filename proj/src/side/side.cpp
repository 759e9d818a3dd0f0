#include "lst/side.hpp"

#include <cmath>

namespace lst {

const char* ladder_mode_name(LadderMode m) {
  switch (m) {
    case LadderMode::Full:
      return "full";
    case LadderMode::FinalOnly:
      return "final-only";
    case LadderMode::None:
      return "none";
  }
  return "?";
}

LadderMode parse_ladder_mode(const std::string& s) {
  if (s == "full" || s == "lst") return LadderMode::Full;
  if (s == "final-only" || s == "side-tuning") return LadderMode::FinalOnly;
  if (s == "none" || s == "compression") return LadderMode::None;
  throw ConfigError("unknown ladder mode '" + s + "'");
}

namespace {

void check_keep(const std::vector<int>& keep, int layers, const char* which) {
  if (keep.empty()) throw ConfigError(std::string("side: empty keep set for ") + which);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 1 || keep[i] > layers) {
      throw ConfigError(std::string("side: kept ") + which + " layer " + std::to_string(keep[i]) +
                        " outside 1.." + std::to_string(layers));
    }
    if (i > 0 && keep[i] <= keep[i - 1]) {
      throw ConfigError(std::string("side: kept ") + which + " layers must be strictly increasing");
    }
  }
}

}  // namespace

SideConfig SideConfig::resolved(const ModelConfig& model) const {
  SideConfig c = *this;
  if (reduction < 1) throw ConfigError("side: reduction factor must be a positive integer");
  if (!(temperature > 0.0)) throw ConfigError("side: gate temperature must be > 0");
  if (model.d_model % reduction != 0) {
    throw ConfigError("side: d_model " + std::to_string(model.d_model) + " not divisible by r=" +
                      std::to_string(reduction));
  }
  if ((model.d_model / reduction) % model.heads != 0) {
    throw ConfigError("side: side width " + std::to_string(model.d_model / reduction) +
                      " not divisible by heads " + std::to_string(model.heads));
  }
  if (model.d_ff % reduction != 0) {
    throw ConfigError("side: d_ff " + std::to_string(model.d_ff) + " not divisible by r=" +
                      std::to_string(reduction));
  }
  if (c.keep_enc.empty()) c.keep_enc = all_layers(model.layers);
  if (c.keep_dec.empty() && model.has_decoder()) c.keep_dec = all_layers(model.layers);
  check_keep(c.keep_enc, model.layers, "encoder");
  if (model.has_decoder()) check_keep(c.keep_dec, model.layers, "decoder");
  return c;
}

void SideStack::collect(ParamList& out) const {
  embed_down.collect(out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i < ladder_down.size()) ladder_down[i].collect(out);
    if (i < gates.size()) out.push_back(gates[i]);
    blocks[i].collect(out);
  }
  if (final_fusion) {
    final_down.collect(out);
    out.push_back(final_gate);
  }
  final_ln.collect(out);
}

ParamList SideParams::parameters() const {
  ParamList out;
  enc.collect(out);
  if (model.has_decoder()) dec.collect(out);
  up.collect(out);
  return out;
}

Var fuse(const Var& h_f_down, const Var& h_g_prev, const Var& alpha, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("fuse: temperature must be > 0");
  if (h_f_down.shape() != h_g_prev.shape()) {
    throw DimensionError("fuse: ladder input " + shape_str(h_f_down.shape()) + " vs side input " +
                         shape_str(h_g_prev.shape()));
  }
  Var mu = ops::sigmoid(ops::scale(alpha, 1.0 / temperature));
  return ops::add(h_g_prev, ops::mul(ops::sub(h_f_down, h_g_prev), mu));
}

namespace {

SideStack make_stack(const std::string& prefix, const ModelConfig& model, const SideConfig& cfg,
                     const std::vector<int>& kept, bool cross, bool output_stack, Rng& rng) {
  const auto d = model.d_model;
  const auto w = d / cfg.reduction;
  const auto dt = model.dtype;
  SideStack s;
  s.kept = kept;
  s.embed_down = make_linear(prefix + ".down.0", w, d, dt, rng);
  for (int i : kept) {
    const auto tag = std::to_string(i);
    if (cfg.ladders == LadderMode::Full) {
      s.ladder_down.push_back(make_linear(prefix + ".down." + tag, w, d, dt, rng));
      s.gates.emplace_back(prefix + ".gate." + tag, Tensor::zeros({1}, dt));
    }
    s.blocks.push_back(make_block(prefix + "." + tag, w, w, model.d_ff / cfg.reduction, model.heads, cross, dt, rng));
  }
  if (cfg.ladders == LadderMode::FinalOnly && output_stack) {
    s.final_fusion = true;
    s.final_down = make_linear(prefix + ".final_down", w, d, dt, rng);
    s.final_gate = Parameter(prefix + ".final_gate", Tensor::zeros({1}, dt));
  }
  s.final_ln = make_layer_norm(prefix + ".final_ln", w, dt);
  return s;
}

Var downsample(Tape& tape, const LinearParams& p, const Var& tap) {
  OwnerScope scope(tape, Owner::Ladder);
  return linear_forward(tape, p, tap.detach());
}

Var run_stack(Tape& tape, const SideStack& s, const SideConfig& cfg, const std::vector<Var>& taps,
              const Var* memory, bool causal, double eps) {
  Var h = downsample(tape, s.embed_down, taps.at(0));
  for (std::size_t j = 0; j < s.blocks.size(); ++j) {
    if (cfg.ladders == LadderMode::Full) {
      const auto tap_index = static_cast<std::size_t>(s.kept[j]);
      Var hf = downsample(tape, s.ladder_down[j], taps.at(tap_index));
      h = fuse(hf, h, tape.param(s.gates[j]), cfg.temperature);
    }
    h = block_forward(tape, s.blocks[j], h, memory, causal, eps, nullptr);
  }
  if (s.final_fusion) {
    Var hf = downsample(tape, s.final_down, taps.back());
    h = fuse(hf, h, tape.param(s.final_gate), cfg.temperature);
  }
  return layer_norm_forward(tape, s.final_ln, h, eps);
}

void check_taps(const std::vector<Var>& taps, const SideConfig& cfg, int layers, std::int64_t d, const char* which) {
  const std::size_t need = cfg.ladders == LadderMode::None ? 1 : static_cast<std::size_t>(layers) + 1;
  if (taps.size() < need) {
    throw WiringError(std::string("side_forward: ") + which + " has " + std::to_string(taps.size()) +
                      " taps, side config needs " + std::to_string(need));
  }
  for (std::size_t i = 0; i < need; ++i) {
    if (taps[i].value.rank() != 3 || taps[i].value.dim(2) != d) {
      throw WiringError(std::string("side_forward: ") + which + " tap " + std::to_string(i) + " has shape " +
                        shape_str(taps[i].shape()) + ", expected width " + std::to_string(d));
    }
  }
}

}  // namespace

SideParams init_side_random(const ModelConfig& model, const SideConfig& side, std::uint64_t seed) {
  model.validate();
  SideParams p;
  p.config = side.resolved(model);
  p.model = model;
  p.width = model.d_model / side.reduction;
  Rng rng(seed);
  const bool encdec = model.has_decoder();
  p.enc = make_stack("side.enc", model, p.config, p.config.keep_enc, false, !encdec, rng);
  if (encdec) p.dec = make_stack("side.dec", model, p.config, p.config.keep_dec, true, true, rng);
  p.up = make_linear("side.up", model.d_model, p.width, model.dtype, rng, true);
  return p;
}

Var side_forward(Tape& tape, const SideParams& side, const BackboneParams& backbone, const Taps& taps) {
  const auto& model = side.model;
  if (backbone.config.layers != model.layers || backbone.config.d_model != model.d_model) {
    throw WiringError("side_forward: backbone has L=" + std::to_string(backbone.config.layers) +
                      ", d=" + std::to_string(backbone.config.d_model) + " but side network was built for L=" +
                      std::to_string(model.layers) + ", d=" + std::to_string(model.d_model));
  }
  check_taps(taps.encoder, side.config, model.layers, model.d_model, "encoder");
  if (model.has_decoder()) check_taps(taps.decoder, side.config, model.layers, model.d_model, "decoder");

  Var out;
  {
    OwnerScope scope(tape, Owner::Side);
    Var memory = run_stack(tape, side.enc, side.config, taps.encoder, nullptr, false, model.ln_eps);
    out = model.has_decoder()
              ? run_stack(tape, side.dec, side.config, taps.decoder, &memory, true, model.ln_eps)
              : memory;
    out = linear_forward(tape, side.up, out);
  }
  return lm_head(tape, backbone, out);
}

SideConfig drop_layers(SideConfig cfg, const std::vector<int>& keep) { return drop_layers(std::move(cfg), keep, keep); }

SideConfig drop_layers(SideConfig cfg, const std::vector<int>& keep_enc, const std::vector<int>& keep_dec) {
  if (keep_enc.empty() || keep_dec.empty()) throw ConfigError("drop_layers: keep set must not be empty");
  cfg.keep_enc = keep_enc;
  cfg.keep_dec = keep_dec;
  return cfg;
}

std::vector<int> all_layers(int layers) {
  std::vector<int> v;
  for (int i = 1; i <= layers; ++i) v.push_back(i);
  return v;
}

std::vector<int> keep_even_layers(int layers) {
  std::vector<int> v;
  for (int i = 2; i <= layers; i += 2) v.push_back(i);
  if (v.empty()) v.push_back(layers);
  return v;
}

std::vector<int> interleaved_keep(int layers, int drop) {
  if (drop < 0 || drop >= layers) {
    throw ConfigError("interleaved_keep: cannot drop " + std::to_string(drop) + " of " + std::to_string(layers));
  }
  if (drop > 0 && 2 * drop == layers) return keep_even_layers(layers);
  const int k = layers - drop;
  std::vector<int> v;
  for (int j = 1; j <= k; ++j) v.push_back((j - 1) * layers / k + 1);
  return v;
}

}  // namespace lst
