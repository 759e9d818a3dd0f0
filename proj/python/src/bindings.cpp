// Python bindings. Every entry point takes a dict of namespaced keys, the same
// ones the lst command line reads from its config file.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lst/ablate.hpp"
#include "lst/checkpoint.hpp"

namespace py = pybind11;
using namespace lst;

namespace {

using Settings = std::map<std::string, std::string>;

RunConfig run_config(const Settings& settings, RunConfig defaults = {}) {
  KeyValueConfig kv;
  for (const auto& [k, v] : settings) kv.set(k, v);
  RunConfig rc = read_run_config(kv, defaults);
  const auto unused = kv.unused();
  if (!unused.empty()) throw ConfigError("unknown config key " + unused.front());
  return rc;
}

BackboneParams backbone_for(const RunConfig& rc, const std::string& checkpoint) {
  BackboneParams b = init_backbone(rc.model, rc.model.seed);
  if (!checkpoint.empty()) load_into(read_checkpoint(checkpoint), b.parameters(), true);
  return b;
}

py::dict report_dict(const MemoryReport& r) {
  py::dict d;
  d["parameters"] = r.parameters;
  d["gradients"] = r.gradients;
  d["optimizer_state"] = r.optimizer_state;
  d["retained_input_activations"] = r.retained_input_activations;
  d["retained_derivatives"] = r.retained_derivatives;
  d["ladder_taps"] = r.ladder_taps;
  d["retained_other"] = r.retained_other;
  d["retained_total"] = r.retained_total();
  d["total"] = r.total();
  py::dict owners, derivs;
  for (std::size_t o = 0; o < kOwnerCount; ++o) {
    const auto owner = static_cast<Owner>(o);
    owners[owner_name(owner)] = r.owner(owner);
    derivs[owner_name(owner)] = r.owner_derivatives(owner);
  }
  d["retained_by_owner"] = owners;
  d["derivatives_by_owner"] = derivs;
  return d;
}

py::dict result_dict(const TrainResult& r) {
  py::dict d;
  d["initial_eval_loss"] = r.initial_eval_loss;
  d["final_eval_loss"] = r.final_eval_loss;
  d["final_eval_accuracy"] = r.final_eval_accuracy;
  d["steps_run"] = r.steps_run;
  d["trainable"] = r.trainable;
  d["total"] = r.total;
  d["trainable_fraction"] = r.trainable_fraction;
  d["memory"] = report_dict(r.memory);
  py::list records;
  for (const auto& m : r.records) {
    py::dict rec;
    rec["step"] = m.step;
    rec["train_loss"] = m.train_loss;
    rec["eval_loss"] = m.eval_loss;
    rec["eval_accuracy"] = m.eval_accuracy;
    records.append(rec);
  }
  d["records"] = records;
  return d;
}

py::dict run_memory_report(const Settings& s) {
  const RunConfig rc = run_config(s);
  const auto data = make_dataset(rc.task, rc.model.arch);
  const Batch batch = data.train.rows(0, std::min<std::int64_t>(rc.train.batch, data.train.size()));
  const auto model = apply_method(backbone_for(rc, ""), rc.method, rc.train.seed, &data.train);
  py::dict d;
  d["measured"] = report_dict(measure_step_memory(model, batch));
  d["estimate"] = report_dict(estimate(rc.method, rc.model, Workload{batch.size(), rc.task.src_len(), rc.task.tgt_len()}));
  return d;
}

py::dict estimate_memory(const Settings& s, bool paper_mode) {
  const RunConfig rc = run_config(s);
  return report_dict(estimate(rc.method, rc.model, Workload{rc.train.batch, rc.task.src_len(), rc.task.tgt_len()},
                              EstimateOptions{paper_mode}));
}

py::dict run_grad_check(const Settings& s, double h, double tol) {
  const RunConfig rc = run_config(s);
  TaskSpec task = rc.task;
  task.train_size = std::max(task.train_size, rc.train.batch);
  const auto data = make_dataset(task, rc.model.arch);
  auto model = apply_method(backbone_for(rc, ""), rc.method, rc.train.seed, &data.train);
  const auto rep = grad_check_model(model, data.train.rows(0, rc.train.batch), rc.train.seed, h, tol);
  py::dict per;
  for (const auto& e : rep.entries) per[e.name.c_str()] = e.max_rel_error;
  py::dict d;
  d["ok"] = rep.ok;
  d["max_rel_error"] = rep.max_rel_error;
  d["entries"] = per;
  return d;
}

py::dict run_pretrain(const Settings& s, const std::string& checkpoint) {
  const RunConfig rc = run_config(s);
  auto res = pretrain(rc.model, rc.task, rc.train);
  if (!checkpoint.empty()) write_checkpoint(checkpoint, res.backbone.parameters());
  return result_dict(res.result);
}

py::dict run_finetune(const Settings& s, const std::string& backbone) {
  const RunConfig rc = run_config(s);
  const auto ft = finetune(backbone_for(rc, backbone), rc.method, rc.task, rc.train);
  return result_dict(ft.result);
}

py::dict prune_init(const Settings& s, const std::string& importance, const std::string& backbone) {
  const RunConfig rc = run_config(s);
  const BackboneParams b = backbone_for(rc, backbone);
  ImportanceMap imp;
  if (importance == "magnitude") {
    imp = magnitude_importance(b.parameters());
  } else if (importance == "fisher") {
    const auto data = make_dataset(rc.task, rc.model.arch);
    imp = fisher_importance(b, data.train, std::min<std::int64_t>(rc.method.fisher_samples, data.train.size()));
  } else {
    throw ConfigError("importance must be magnitude or fisher");
  }
  return py::cast(prune_backbone_to_side(b, imp, rc.method.side, rc.train.seed).kept);
}

std::pair<std::int64_t, std::int64_t> parameter_counts(const Settings& s) {
  const RunConfig rc = run_config(s);
  return estimate_parameter_counts(rc.method, rc.model);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ladder side-tuning on a toy transformer";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<WiringError>(m, "WiringError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

  m.def("memory_report", &run_memory_report, py::arg("settings"),
        "Measured and estimated bytes of one training step.");
  m.def("estimate_memory", &estimate_memory, py::arg("settings"), py::arg("paper_mode") = false);
  m.def("grad_check", &run_grad_check, py::arg("settings"), py::arg("h") = 1e-4, py::arg("tol") = 1e-4);
  m.def("pretrain", &run_pretrain, py::arg("settings"), py::arg("checkpoint") = "");
  m.def("finetune", &run_finetune, py::arg("settings"), py::arg("backbone") = "");
  m.def("prune_init", &prune_init, py::arg("settings"), py::arg("importance") = "magnitude",
        py::arg("backbone") = "");
  m.def("parameter_counts", &parameter_counts, py::arg("settings"));
  m.def("interleaved_keep", &interleaved_keep, py::arg("layers"), py::arg("drop"));
  m.def("top_k_indices", &top_k_indices, py::arg("scores"), py::arg("k"));
}
