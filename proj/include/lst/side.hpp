#pragma once

#include <vector>

#include "lst/backbone.hpp"

namespace lst {

/// Which ladders feed the side network.
enum class LadderMode {
  Full,       // one gated ladder per kept side layer
  FinalOnly,  // a single gated fusion right before the head
  None,       // no backbone information beyond the frozen embeddings
};

const char* ladder_mode_name(LadderMode m);
LadderMode parse_ladder_mode(const std::string& s);

struct SideConfig {
  int reduction = 8;
  double temperature = 0.1;
  /// 1-based backbone layer indices kept in each side stack; empty means all.
  std::vector<int> keep_enc;
  std::vector<int> keep_dec;
  LadderMode ladders = LadderMode::Full;

  /// Resolves empty keep sets to {1..L} and checks every invariant.
  SideConfig resolved(const ModelConfig& model) const;
  int width(const ModelConfig& model) const { return model.d_model / reduction; }
};

/// One side stack (encoder or decoder) at width d/r.
struct SideStack {
  std::vector<int> kept;
  std::vector<BlockParams> blocks;        // one per kept layer
  LinearParams embed_down;                // ladder from tap 0
  std::vector<LinearParams> ladder_down;  // one per kept layer (Full mode)
  std::vector<Parameter> gates;           // alpha per kept layer (Full mode), shape [1]
  bool final_fusion = false;              // FinalOnly mode, output stack only
  LinearParams final_down;
  Parameter final_gate;
  LayerNormParams final_ln;

  void collect(ParamList& out) const;
};

struct SideParams {
  SideConfig config;  // resolved
  ModelConfig model;
  int width = 0;
  SideStack enc;
  SideStack dec;
  LinearParams up;  // [d, d/r]

  ParamList parameters() const;
};

/// mu * h_f + (1 - mu) * h_g with mu = sigmoid(alpha / T).
Var fuse(const Var& h_f_down, const Var& h_g_prev, const Var& alpha, double temperature);

/// Scaled-normal side blocks and downsamplers, zero upsampler, zero gates.
SideParams init_side_random(const ModelConfig& model, const SideConfig& side, std::uint64_t seed);

/// Side logits [B, S_out, V]. Only side parameters (and nothing in the
/// backbone) are reachable from the result.
Var side_forward(Tape& tape, const SideParams& side, const BackboneParams& backbone, const Taps& taps);

/// Returns cfg with both stacks restricted to keep.
SideConfig drop_layers(SideConfig cfg, const std::vector<int>& keep);
SideConfig drop_layers(SideConfig cfg, const std::vector<int>& keep_enc, const std::vector<int>& keep_dec);

std::vector<int> all_layers(int layers);
/// Dropping half the layers keeps the 2nd, 4th, 6th, ... layers.
std::vector<int> keep_even_layers(int layers);
/// Drops `drop` layers spread evenly: kept index j (1-based) is
/// floor((j - 1) * L / k) + 1 with k = L - drop. L=12, drop=3 gives
/// {1,2,3,5,6,7,9,10,11}. Dropping exactly half keeps the even layers
/// instead, as keep_even_layers does.
std::vector<int> interleaved_keep(int layers, int drop);

}  // namespace lst
