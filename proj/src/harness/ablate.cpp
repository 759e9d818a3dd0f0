#include "lst/ablate.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace lst {

const char* suite_name(Suite s) {
  switch (s) {
    case Suite::Init:
      return "init";
    case Suite::Shortcuts:
      return "shortcuts";
    case Suite::DropVsFreeze:
      return "drop-vs-freeze";
    case Suite::RSweep:
      return "r-sweep";
  }
  return "?";
}

Suite parse_suite(const std::string& s) {
  for (auto x : {Suite::Init, Suite::Shortcuts, Suite::DropVsFreeze, Suite::RSweep}) {
    if (s == suite_name(x)) return x;
  }
  throw ConfigError("unknown ablation suite '" + s + "' (init, shortcuts, drop-vs-freeze, r-sweep)");
}

const AblationCell& AblationTable::cell(const std::string& arm, const std::string& setting) const {
  for (const auto& c : cells) {
    if (c.arm == arm && c.setting == setting) return c;
  }
  throw InputError("ablation table has no cell " + arm + (setting.empty() ? "" : " " + setting));
}

namespace {

struct Arm {
  std::string name;
  std::string setting;
  MethodConfig method;
};

AblationCell run_arm(const Arm& arm, const BackboneParams& backbone, const AblationSetup& setup,
                     const MetricSink& sink) {
  AblationCell cell;
  cell.arm = arm.name;
  cell.setting = arm.setting;
  for (int s = 0; s < setup.seeds; ++s) {
    TrainConfig tc = setup.finetune;
    tc.seed = setup.finetune.seed + static_cast<std::uint64_t>(s);
    MetricSink tagged;
    if (sink) {
      tagged = [&](const std::string& line) {
        sink("arm=" + arm.name + (arm.setting.empty() ? "" : " setting=" + arm.setting) + " seed=" +
             std::to_string(tc.seed) + " " + line);
      };
    }
    auto ft = finetune(backbone, arm.method, setup.transfer, tc, tagged);
    cell.losses.push_back(ft.result.final_eval_loss);
    if (s == 0) {
      cell.retained_bytes = ft.result.memory.retained_total();
      cell.trainable_fraction = ft.result.trainable_fraction;
    }
  }
  const double n = static_cast<double>(cell.losses.size());
  for (double l : cell.losses) cell.loss_mean += l / n;
  if (cell.losses.size() > 1) {
    double ss = 0.0;
    for (double l : cell.losses) ss += (l - cell.loss_mean) * (l - cell.loss_mean);
    cell.loss_std = std::sqrt(ss / (n - 1.0));
  }
  return cell;
}

std::vector<Arm> arms_for(Suite suite, const BackboneParams& backbone, const AblationSetup& setup) {
  std::vector<Arm> arms;
  const MethodConfig base = setup.lst;
  const int L = backbone.config.layers;
  switch (suite) {
    case Suite::Init:
      for (auto init : {SideInit::Random, SideInit::Magnitude, SideInit::Fisher}) {
        MethodConfig m = base;
        m.side_init = init;
        arms.push_back({side_init_name(init), "", m});
      }
      break;
    case Suite::Shortcuts:
      for (auto [name, mode] : {std::pair{"compression", LadderMode::None},
                                std::pair{"side-tuning", LadderMode::FinalOnly}, std::pair{"lst", LadderMode::Full}}) {
        MethodConfig m = base;
        m.side.ladders = mode;
        arms.push_back({name, "", m});
      }
      break;
    case Suite::DropVsFreeze: {
      std::vector<int> ns = setup.freeze_values;
      if (ns.empty()) ns = {0, L / 2, L, 3 * L / 2};
      for (int n : ns) {
        const auto tag = "N=" + std::to_string(n);
        MethodConfig lst = base;
        lst.side.keep_enc = interleaved_keep(L, n / 2);
        lst.side.keep_dec = interleaved_keep(L, n / 2);
        arms.push_back({"lst-drop", tag, lst});
        MethodConfig ad;
        ad.method = Method::Adapter;
        ad.adapter_dim = setup.adapter_dim;
        ad.freeze_layers = n;
        arms.push_back({"adapter-freeze", tag, ad});
        MethodConfig lo;
        lo.method = Method::Lora;
        lo.lora_rank = setup.lora_rank;
        lo.freeze_layers = n;
        arms.push_back({"lora-freeze", tag, lo});
      }
      break;
    }
    case Suite::RSweep:
      for (int r : setup.r_values) {
        MethodConfig m = base;
        m.side.reduction = r;
        arms.push_back({"lst", "r=" + std::to_string(r), m});
      }
      break;
  }
  return arms;
}

}  // namespace

AblationTable ablate(Suite suite, const BackboneParams& backbone, const AblationSetup& setup,
                     const MetricSink& sink) {
  if (setup.seeds < 1) throw ConfigError("ablate: need at least one seed");
  AblationTable table;
  table.suite = suite;
  for (const auto& arm : arms_for(suite, backbone, setup)) table.cells.push_back(run_arm(arm, backbone, setup, sink));
  return table;
}

std::string format_table(const AblationTable& table) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (const auto& c : table.cells) {
    os << "suite=" << suite_name(table.suite) << " arm=" << c.arm;
    if (!c.setting.empty()) os << " setting=" << c.setting;
    os << " seeds=" << c.losses.size() << " eval_loss_mean=" << c.loss_mean << " eval_loss_std=" << c.loss_std
       << " retained_bytes=" << c.retained_bytes << " trainable_fraction=" << c.trainable_fraction << '\n';
  }
  return os.str();
}

}  // namespace lst
