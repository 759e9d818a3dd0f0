#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lst/pruning.hpp"

namespace lst {

enum class Method { Full, Adapter, Lora, Bitfit, Prompt, Lst };
const char* method_name(Method m);
Method parse_method(const std::string& s);
inline constexpr Method kAllMethods[] = {Method::Full,   Method::Adapter, Method::Lora,
                                         Method::Bitfit, Method::Prompt,  Method::Lst};

/// How an LST side network gets its initial block weights.
enum class SideInit { Random, Magnitude, Fisher };
const char* side_init_name(SideInit s);
SideInit parse_side_init(const std::string& s);

struct MethodConfig {
  Method method = Method::Lst;
  int adapter_dim = 8;
  int lora_rank = 4;
  int prompt_len = 4;
  SideConfig side;
  SideInit side_init = SideInit::Magnitude;
  int fisher_samples = 128;
  /// Layers frozen from the input side, encoder first (baselines only).
  int freeze_layers = 0;

  void validate(const ModelConfig& model) const;
};

/// PETL modules living inside one backbone layer.
struct LayerModules {
  std::optional<AdapterParams> after_self, after_cross, after_ff;
  std::optional<LoraParams> self_q, self_v, cross_q, cross_v;
  void collect(ParamList& out) const;
};

/// A backbone plus one method's extra parameters, with trainable flags set.
class TrainableModel {
 public:
  BackboneParams backbone;
  MethodConfig config;
  std::vector<LayerModules> enc_modules, dec_modules;  // empty unless adapter / lora
  std::optional<Parameter> prompt;
  std::optional<SideParams> side;
  std::map<std::string, std::vector<std::int64_t>> pruned_kept;

  /// Logits for the batch's output positions.
  Var forward(Tape& tape, const Batch& batch) const;
  /// Mean token cross entropy against batch.targets.
  Var loss(Tape& tape, const Batch& batch) const;

  /// Every parameter: backbone first, then method modules.
  ParamList parameters() const;
  ParamList trainable() const;
  /// Only the method's own parameters (what a per-task checkpoint stores).
  ParamList method_parameters() const;

  std::int64_t trainable_count() const;
  std::int64_t total_count() const;
  double trainable_fraction() const;
};

/// Deep-copies the backbone and attaches the method. fisher_data supplies the
/// samples for Fisher-initialized side networks.
TrainableModel apply_method(const BackboneParams& backbone, const MethodConfig& config, std::uint64_t seed,
                            const Batch* fisher_data = nullptr);

/// Freezes the first n layers (encoder layers, then decoder layers) and drops
/// their inserted modules. With n > 0 the embeddings are frozen too.
void freeze_prefix(TrainableModel& model, int n);

}  // namespace lst
