#pragma once

#include <string>
#include <vector>

#include "lst/train.hpp"

namespace lst {

enum class Suite { Init, Shortcuts, DropVsFreeze, RSweep };
const char* suite_name(Suite s);
Suite parse_suite(const std::string& s);

struct AblationSetup {
  TaskSpec transfer;
  TrainConfig finetune;
  /// LST settings shared by every LST arm; arms override one field.
  MethodConfig lst;
  /// Baseline sizes for the drop-vs-freeze suite.
  int adapter_dim = 8;
  int lora_rank = 4;
  int seeds = 3;
  std::vector<int> r_values{2, 4, 8};
  /// Layers frozen by the baselines; LST drops half of each from both side
  /// stacks. Empty: {0, L/2, L, 3L/2}.
  std::vector<int> freeze_values;
};

struct AblationCell {
  std::string arm;
  std::string setting;  // e.g. "N=6", "r=4"; empty when the suite has one setting
  std::vector<double> losses;  // final eval loss per seed
  double loss_mean = 0.0;
  double loss_std = 0.0;  // sample standard deviation
  std::int64_t retained_bytes = 0;  // measured on the first seed
  double trainable_fraction = 0.0;
};

struct AblationTable {
  Suite suite = Suite::Init;
  std::vector<AblationCell> cells;

  const AblationCell& cell(const std::string& arm, const std::string& setting = "") const;
};

/// Runs the suite's arms over setup.seeds fine-tuning seeds on a shared
/// pretrained backbone.
AblationTable ablate(Suite suite, const BackboneParams& backbone, const AblationSetup& setup,
                     const MetricSink& sink = {});

/// One key=value line per cell.
std::string format_table(const AblationTable& table);

}  // namespace lst
