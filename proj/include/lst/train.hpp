#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lst/config_file.hpp"
#include "lst/grad_check.hpp"
#include "lst/memory_model.hpp"
#include "lst/methods.hpp"
#include "lst/tasks.hpp"

namespace lst {

struct TrainConfig {
  double lr = 1e-3;
  int steps = 1000;
  int batch = 32;
  std::uint64_t seed = 0;
  int eval_interval = 100;
  /// Stop early once eval loss < target_ratio * initial eval loss (0: never).
  double target_ratio = 0.0;

  void validate() const;
};

/// Adam with bias correction (0.9, 0.999, 1e-8) and a fixed learning rate.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  /// Updates every parameter that has a gradient in grads.
  void step(const ParamList& params, const GradMap& grads);
  int steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::map<std::string, Moments> state_;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // token-level
};

struct MetricRecord {
  int step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
};

struct TrainResult {
  std::vector<MetricRecord> records;
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  double final_eval_accuracy = 0.0;
  int steps_run = 0;
  MemoryReport memory;  // one instrumented step, plus parameter census
  std::int64_t trainable = 0;
  std::int64_t total = 0;
  double trainable_fraction = 0.0;
};

/// Receives each metric line (space-separated key=value pairs).
using MetricSink = std::function<void(const std::string&)>;

EvalResult evaluate(const TrainableModel& model, const Batch& data, int batch_size);

/// Retained bytes of one forward pass on batch, plus the parameter census.
MemoryReport measure_step_memory(const TrainableModel& model, const Batch& batch);

/// Trains model in place on data.train, evaluating on data.eval.
TrainResult train(TrainableModel& model, const Dataset& data, const TrainConfig& cfg, const MetricSink& sink = {});

/// Full training of a fresh backbone on the base task.
struct PretrainResult {
  BackboneParams backbone;
  TrainResult result;
};
PretrainResult pretrain(const ModelConfig& model, const TaskSpec& base, const TrainConfig& cfg,
                        const MetricSink& sink = {});

/// Attaches the method to a copy of the backbone and trains it on the task.
struct FinetuneResult {
  TrainableModel model;
  TrainResult result;
};
FinetuneResult finetune(const BackboneParams& backbone, const MethodConfig& method, const TaskSpec& task,
                        const TrainConfig& cfg, const MetricSink& sink = {});

std::string format_record(const MetricRecord& r);

/// Finite-difference check of model.loss on batch. Trainable tensors that are
/// all zero at init (upsampler, gates, LoRA B, adapter up, biases) are first
/// filled with N(0, 0.1^2) draws from seed so their gradients are not trivial.
GradCheckReport grad_check_model(TrainableModel& model, const Batch& batch, std::uint64_t seed, double h = 1e-4,
                                 double tol = 1e-4);

/// Everything one CLI run needs, read from namespaced keys.
struct RunConfig {
  ModelConfig model;
  TaskSpec task;
  TrainConfig train;
  MethodConfig method;
};

/// Keys: model.{layers,d_model,heads,d_ff,vocab,max_seq,arch,dtype,seed},
/// task.{name,seq_len,train_size,eval_size,seed,marker,max_shift},
/// train.{lr,steps,batch,seed,eval_interval,target_ratio},
/// method.{name,adapter_dim,lora_rank,prompt_len,freeze_layers},
/// side.{r,temperature,keep_enc,keep_dec,ladders,init,fisher_samples}.
RunConfig read_run_config(const KeyValueConfig& kv, RunConfig defaults = {});

}  // namespace lst
