// lst: pretrain backbones, fine-tune with LST or a PETL baseline, report
// memory, check gradients, build pruned side networks, run ablations.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "lst/ablate.hpp"
#include "lst/checkpoint.hpp"

namespace {

using namespace lst;

constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

/// Writes every metric line to stdout and to the results file.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::app);
      if (!file_) throw InputError("cannot open results file " + path);
    }
  }
  void line(const std::string& s) {
    std::cout << s << '\n';
    if (file_) file_ << s << '\n';
  }
  void block(const std::string& text) {
    std::cout << text;
    if (file_) file_ << text;
  }
  MetricSink sink(const std::string& prefix) {
    return [this, prefix](const std::string& s) { line(prefix + s); };
  }

 private:
  std::ofstream file_;
};

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string results = "lst-results.txt";

  RunConfig run(RunConfig defaults = {}) const {
    KeyValueConfig kv;
    if (!config_path.empty()) kv = KeyValueConfig::load(config_path);
    for (const auto& s : sets) kv.merge(KeyValueConfig::parse(s, "--set"));
    RunConfig rc = read_run_config(kv, defaults);
    const auto unused = kv.unused();
    if (!unused.empty()) throw ConfigError("unknown config key " + unused.front());
    return rc;
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "key=value config file");
  app->add_option("-s,--set", c.sets, "override one key, e.g. --set side.r=4")->take_all();
  app->add_option("-r,--results", c.results, "results file (appended)");
}

BackboneParams load_backbone(const std::string& path, const ModelConfig& model) {
  BackboneParams b = init_backbone(model, model.seed);
  load_into(read_checkpoint(path), b.parameters(), true);
  return b;
}

std::string memory_line(const std::string& label, const MemoryReport& r) {
  return label + " " + format_records(r);
}

int cmd_pretrain(const Common& c, const std::string& out_path) {
  RunConfig rc = c.run();
  Output out(c.results);
  auto res = pretrain(rc.model, rc.task, rc.train, out.sink("cmd=pretrain "));
  write_checkpoint(out_path, res.backbone.parameters());
  out.line("cmd=pretrain initial_eval_loss=" + std::to_string(res.result.initial_eval_loss) +
           " final_eval_loss=" + std::to_string(res.result.final_eval_loss) + " checkpoint=" + out_path);
  return 0;
}

int cmd_finetune(const Common& c, const std::string& backbone_path, const std::string& out_path) {
  RunConfig rc = c.run();
  Output out(c.results);
  const BackboneParams backbone = load_backbone(backbone_path, rc.model);
  const auto prefix = std::string("cmd=finetune method=") + method_name(rc.method.method) + " ";
  auto ft = finetune(backbone, rc.method, rc.task, rc.train, out.sink(prefix));
  const auto& r = ft.result;
  out.line(prefix + "trainable=" + std::to_string(r.trainable) + " total=" + std::to_string(r.total) +
           " trainable_pct=" + std::to_string(100.0 * r.trainable_fraction));
  out.line(memory_line(prefix + "memory", r.memory));
  out.line(prefix + "initial_eval_loss=" + std::to_string(r.initial_eval_loss) +
           " final_eval_loss=" + std::to_string(r.final_eval_loss) + " steps=" + std::to_string(r.steps_run));
  if (!out_path.empty()) {
    write_checkpoint(out_path, ft.model.method_parameters().empty() ? ft.model.backbone.parameters()
                                                                     : ft.model.method_parameters());
  }
  return 0;
}

int cmd_memory_report(const Common& c, bool all, bool paper) {
  RunConfig rc = c.run();
  Output out(c.results);
  const BackboneParams backbone = init_backbone(rc.model, rc.model.seed);
  std::vector<Method> methods{rc.method.method};
  if (all) methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
  const auto data = make_dataset(rc.task, rc.model.arch);
  const Batch batch = data.train.rows(0, std::min<std::int64_t>(rc.train.batch, data.train.size()));
  const Workload work{batch.size(), rc.task.src_len(), rc.task.tgt_len()};
  for (auto m : methods) {
    MethodConfig mc = rc.method;
    mc.method = m;
    if (m == Method::Lst) mc.freeze_layers = 0;
    const auto prefix = std::string("cmd=memory-report method=") + method_name(m);
    TrainableModel model = apply_method(backbone, mc, rc.train.seed, &data.train);
    const MemoryReport measured = measure_step_memory(model, batch);
    const MemoryReport est = estimate(mc, rc.model, work, EstimateOptions{paper});
    out.block(std::string("# ") + method_name(m) + " measured\n" + format_table(measured));
    out.line(memory_line(prefix + " source=measured", measured));
    out.line(memory_line(prefix + (paper ? " source=estimate-paper" : " source=estimate"), est));
  }
  return 0;
}

int cmd_grad_check(const Common& c, double h, double tol) {
  RunConfig defaults;
  defaults.model.layers = 2;
  defaults.model.d_model = 8;
  defaults.model.heads = 2;
  defaults.model.d_ff = 16;
  defaults.model.vocab = 16;
  defaults.model.max_seq = 8;
  defaults.model.dtype = DType::Float64;
  defaults.task.vocab = 16;
  defaults.task.seq_len = 5;
  defaults.train.batch = 2;
  defaults.method.side.reduction = 2;
  RunConfig rc = c.run(defaults);
  Output out(c.results);
  const BackboneParams backbone = init_backbone(rc.model, rc.model.seed);
  TaskSpec task = rc.task;
  task.train_size = std::max(task.train_size, rc.train.batch);
  const auto data = make_dataset(task, rc.model.arch);
  TrainableModel model = apply_method(backbone, rc.method, rc.train.seed, &data.train);
  const auto report = grad_check_model(model, data.train.rows(0, rc.train.batch), rc.train.seed, h, tol);
  out.block(format_report(report));
  out.line(std::string("cmd=grad-check method=") + method_name(rc.method.method) +
           " max_rel_error=" + std::to_string(report.max_rel_error) + " ok=" + (report.ok ? "1" : "0"));
  return report.ok ? 0 : kExitNumeric;
}

int cmd_prune_init(const Common& c, const std::string& backbone_path, const std::string& importance,
                   const std::string& out_path) {
  RunConfig rc = c.run();
  Output out(c.results);
  const BackboneParams backbone = backbone_path.empty() ? init_backbone(rc.model, rc.model.seed)
                                                        : load_backbone(backbone_path, rc.model);
  ImportanceMap imp;
  if (importance == "magnitude") {
    imp = magnitude_importance(backbone.parameters());
  } else if (importance == "fisher") {
    const auto data = make_dataset(rc.task, rc.model.arch);
    imp = fisher_importance(backbone, data.train, std::min<std::int64_t>(rc.method.fisher_samples, data.train.size()));
  } else {
    throw ConfigError("importance must be magnitude or fisher");
  }
  auto res = prune_backbone_to_side(backbone, imp, rc.method.side, rc.train.seed);
  out.block(format_kept(res));
  if (!out_path.empty()) write_checkpoint(out_path, res.side.parameters());
  out.line("cmd=prune-init importance=" + importance + " r=" + std::to_string(res.side.config.reduction) +
           " side_params=" + std::to_string(count_elements(res.side.parameters())) +
           (out_path.empty() ? "" : " checkpoint=" + out_path));
  return 0;
}

int cmd_ablate(const Common& c, const std::string& suite_name_arg, const std::string& backbone_path,
               const std::string& base_task, int seeds) {
  RunConfig rc = c.run();
  Output out(c.results);
  const Suite suite = parse_suite(suite_name_arg);
  BackboneParams backbone;
  if (backbone_path.empty()) {
    TaskSpec base = rc.task;
    base.task = parse_task(base_task);
    base.marker = true;
    auto pre = pretrain(rc.model, base, rc.train, out.sink("cmd=ablate phase=pretrain "));
    backbone = std::move(pre.backbone);
  } else {
    backbone = load_backbone(backbone_path, rc.model);
  }
  AblationSetup setup;
  setup.transfer = rc.task;
  setup.finetune = rc.train;
  setup.lst = rc.method;
  setup.lst.method = Method::Lst;
  setup.seeds = seeds;
  auto table = ablate(suite, backbone, setup, out.sink("cmd=ablate phase=finetune "));
  out.block(format_table(table));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ladder side-tuning on a toy transformer"};
  app.require_subcommand(1);
  Common common;

  auto* pre = app.add_subcommand("pretrain", "train a backbone on the base task and save it");
  std::string pre_out = "backbone.ckpt";
  add_common(pre, common);
  pre->add_option("-o,--out", pre_out, "backbone checkpoint to write");

  auto* ft = app.add_subcommand("finetune", "fine-tune a pretrained backbone with one method");
  std::string ft_backbone, ft_out;
  add_common(ft, common);
  ft->add_option("-b,--backbone", ft_backbone, "pretrained backbone checkpoint")->required();
  ft->add_option("-o,--out", ft_out, "checkpoint of the method's parameters");

  auto* mem = app.add_subcommand("memory-report", "measured and estimated memory of one training step");
  bool mem_all = false, mem_paper = false;
  add_common(mem, common);
  mem->add_flag("--all", mem_all, "report every method");
  mem->add_flag("--paper-mode", mem_paper, "estimate with feed-forward terms only");

  auto* gc = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  double gc_h = 1e-4, gc_tol = 1e-4;
  add_common(gc, common);
  gc->add_option("--step", gc_h, "finite-difference step");
  gc->add_option("--tol", gc_tol, "max relative error");

  auto* pi = app.add_subcommand("prune-init", "build a pruned side network from a backbone");
  std::string pi_backbone, pi_out, pi_importance = "magnitude";
  add_common(pi, common);
  pi->add_option("-b,--backbone", pi_backbone, "backbone checkpoint (default: fresh init)");
  pi->add_option("-i,--importance", pi_importance, "magnitude or fisher");
  pi->add_option("-o,--out", pi_out, "side network checkpoint to write");

  auto* ab = app.add_subcommand("ablate", "run an ablation suite");
  std::string ab_suite = "init", ab_backbone, ab_base = "copy";
  int ab_seeds = 3;
  add_common(ab, common);
  ab->add_option("--suite", ab_suite, "init, shortcuts, drop-vs-freeze or r-sweep");
  ab->add_option("-b,--backbone", ab_backbone, "pretrained backbone (default: pretrain first)");
  ab->add_option("--base-task", ab_base, "base task when pretraining inline");
  ab->add_option("--seeds", ab_seeds, "fine-tuning seeds per arm");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pre) return cmd_pretrain(common, pre_out);
    if (*ft) return cmd_finetune(common, ft_backbone, ft_out);
    if (*mem) return cmd_memory_report(common, mem_all, mem_paper);
    if (*gc) return cmd_grad_check(common, gc_h, gc_tol);
    if (*pi) return cmd_prune_init(common, pi_backbone, pi_importance, pi_out);
    if (*ab) return cmd_ablate(common, ab_suite, ab_backbone, ab_base, ab_seeds);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
