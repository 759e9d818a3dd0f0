#include "lst/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace lst {

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (eval_interval < 1) throw ConfigError("train: eval_interval must be >= 1");
  if (target_ratio < 0.0) throw ConfigError("train: target_ratio must be >= 0");
}

void Adam::step(const ParamList& params, const GradMap& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  for (auto p : params) {
    auto it = grads.find(p.name());
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (g.numel() != p.value().numel()) throw ContractError("adam: gradient shape mismatch for " + p.name());
    auto& st = state_[p.name()];
    const auto n = static_cast<std::size_t>(g.numel());
    if (st.m.empty()) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    dispatch_floating(p.value().dtype(), [&]<class T>() {
      auto w = p.value().data<T>();
      auto gs = g.data<T>();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(gs[i]);
        st.m[i] = b1_ * st.m[i] + (1.0 - b1_) * gi;
        st.v[i] = b2_ * st.v[i] + (1.0 - b2_) * gi * gi;
        const double upd = lr_ * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps_);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - upd);
      }
    });
  }
}

namespace {

Tensor select(const Tensor& t, const std::vector<std::int64_t>& idx) {
  if (!t.defined()) return t;
  const auto row = t.numel() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = static_cast<std::int64_t>(idx.size());
  Tensor out(shape, DType::Int32);
  auto src = t.data<std::int32_t>();
  auto dst = out.data<std::int32_t>();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.begin() + idx[i] * row, row, dst.begin() + static_cast<std::int64_t>(i) * row);
  }
  return out;
}

Batch select_rows(const Batch& b, const std::vector<std::int64_t>& idx) {
  return {select(b.src, idx), select(b.dec_in, idx), select(b.targets, idx)};
}

/// Cycles through shuffled epochs of the training set.
class BatchStream {
 public:
  BatchStream(const Batch& data, int batch, std::uint64_t seed) : data_(data), batch_(batch), rng_(seed) {
    order_.resize(static_cast<std::size_t>(data.size()));
    reshuffle();
  }

  Batch next() {
    std::vector<std::int64_t> idx;
    while (static_cast<int>(idx.size()) < batch_) {
      if (pos_ == order_.size()) reshuffle();
      idx.push_back(order_[pos_++]);
    }
    return select_rows(data_, idx);
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    for (std::size_t i = order_.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  const Batch& data_;
  int batch_;
  Rng rng_;
  std::vector<std::int64_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

EvalResult evaluate(const TrainableModel& model, const Batch& data, int batch_size) {
  double loss_sum = 0.0;
  std::int64_t correct = 0, tokens = 0;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    const auto count = std::min<std::int64_t>(batch_size, data.size() - start);
    Batch b = data.rows(start, count);
    Tape tape;
    tape.set_grad_enabled(false);
    Var logits = model.forward(tape, b);
    Var loss = ops::cross_entropy(logits, b.targets, ops::Reduction::Sum);
    loss_sum += loss.value.at(0);
    const auto V = logits.value.dim(-1);
    const auto n = b.targets.numel();
    auto tg = b.targets.data<std::int32_t>();
    dispatch_floating(logits.dtype(), [&]<class T>() {
      auto lg = logits.value.data<T>();
      for (std::int64_t i = 0; i < n; ++i) {
        const auto* row = lg.data() + i * V;
        const auto best = std::max_element(row, row + V) - row;
        correct += best == tg[static_cast<std::size_t>(i)];
      }
    });
    tokens += n;
  }
  return {loss_sum / static_cast<double>(tokens), static_cast<double>(correct) / static_cast<double>(tokens)};
}

MemoryReport measure_step_memory(const TrainableModel& model, const Batch& batch) {
  Tape tape;
  model.loss(tape, batch);
  MemoryReport r = tape.retained_bytes();
  add_parameter_census(r, model.parameters());
  return r;
}

std::string format_record(const MetricRecord& r) {
  std::ostringstream os;
  os << std::setprecision(6) << "step=" << r.step << " train_loss=" << r.train_loss << " eval_loss=" << r.eval_loss
     << " eval_acc=" << r.eval_accuracy;
  return os.str();
}

GradCheckReport grad_check_model(TrainableModel& model, const Batch& batch, std::uint64_t seed, double h,
                                 double tol) {
  Rng rng(seed);
  for (auto p : model.trainable()) {
    const auto values = p.value().to_vector();
    if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) {
      p.value() = random_normal(p.value().shape(), p.value().dtype(), 0.1, rng);
    }
  }
  return grad_check(model.parameters(), [&](Tape& tape) { return model.loss(tape, batch); }, h, tol);
}

TrainResult train(TrainableModel& model, const Dataset& data, const TrainConfig& cfg, const MetricSink& sink) {
  cfg.validate();
  TrainResult res;
  res.trainable = model.trainable_count();
  res.total = model.total_count();
  res.trainable_fraction = model.trainable_fraction();

  BatchStream stream(data.train, cfg.batch, cfg.seed);
  Adam adam(cfg.lr);
  const ParamList trainable = model.trainable();

  auto emit = [&](const MetricRecord& r) {
    res.records.push_back(r);
    if (sink) sink(format_record(r));
  };
  EvalResult ev = evaluate(model, data.eval, cfg.batch);
  res.initial_eval_loss = ev.loss;
  emit({0, std::nan(""), ev.loss, ev.accuracy});

  double window = 0.0;
  int window_n = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    Batch b = stream.next();
    Tape tape;
    Var loss = model.loss(tape, b);
    if (step == 1) {
      res.memory = tape.retained_bytes();
      add_parameter_census(res.memory, model.parameters());
    }
    GradMap grads = tape.backward(loss);
    adam.step(trainable, grads);
    window += loss.value.at(0);
    ++window_n;
    res.steps_run = step;
    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      ev = evaluate(model, data.eval, cfg.batch);
      emit({step, window / window_n, ev.loss, ev.accuracy});
      window = 0.0;
      window_n = 0;
      if (cfg.target_ratio > 0.0 && ev.loss < cfg.target_ratio * res.initial_eval_loss) break;
    }
  }
  res.final_eval_loss = res.records.back().eval_loss;
  res.final_eval_accuracy = res.records.back().eval_accuracy;
  return res;
}

PretrainResult pretrain(const ModelConfig& model, const TaskSpec& base, const TrainConfig& cfg,
                        const MetricSink& sink) {
  base.validate(model);
  MethodConfig full;
  full.method = Method::Full;
  TrainableModel m = apply_method(init_backbone(model, model.seed), full, cfg.seed);
  const Dataset data = make_dataset(base, model.arch);
  TrainResult r = train(m, data, cfg, sink);
  return {std::move(m.backbone), std::move(r)};
}

FinetuneResult finetune(const BackboneParams& backbone, const MethodConfig& method, const TaskSpec& task,
                        const TrainConfig& cfg, const MetricSink& sink) {
  task.validate(backbone.config);
  const Dataset data = make_dataset(task, backbone.config.arch);
  TrainableModel m = apply_method(backbone, method, cfg.seed, &data.train);
  TrainResult r = train(m, data, cfg, sink);
  return {std::move(m), std::move(r)};
}

RunConfig read_run_config(const KeyValueConfig& kv, RunConfig d) {
  RunConfig c = d;
  auto& m = c.model;
  m.layers = kv.get_int("model.layers", m.layers);
  m.d_model = kv.get_int("model.d_model", m.d_model);
  m.heads = kv.get_int("model.heads", m.heads);
  m.d_ff = kv.get_int("model.d_ff", m.d_ff);
  m.vocab = kv.get_int("model.vocab", m.vocab);
  m.max_seq = kv.get_int("model.max_seq", m.max_seq);
  m.arch = parse_architecture(kv.get("model.arch", architecture_name(m.arch)));
  const auto dt = kv.get("model.dtype", dtype_name(m.dtype));
  if (dt == "float32") {
    m.dtype = DType::Float32;
  } else if (dt == "float64") {
    m.dtype = DType::Float64;
  } else {
    throw ConfigError("config: model.dtype must be float32 or float64");
  }
  m.seed = kv.get_u64("model.seed", m.seed);

  auto& t = c.task;
  t.task = parse_task(kv.get("task.name", task_name(t.task)));
  t.vocab = m.vocab;
  t.seq_len = kv.get_int("task.seq_len", t.seq_len);
  t.train_size = kv.get_int("task.train_size", t.train_size);
  t.eval_size = kv.get_int("task.eval_size", t.eval_size);
  t.seed = kv.get_u64("task.seed", t.seed);
  t.marker = kv.get_bool("task.marker", t.marker);
  t.max_shift = kv.get_int("task.max_shift", t.max_shift);

  auto& tr = c.train;
  tr.lr = kv.get_double("train.lr", tr.lr);
  tr.steps = kv.get_int("train.steps", tr.steps);
  tr.batch = kv.get_int("train.batch", tr.batch);
  tr.seed = kv.get_u64("train.seed", tr.seed);
  tr.eval_interval = kv.get_int("train.eval_interval", tr.eval_interval);
  tr.target_ratio = kv.get_double("train.target_ratio", tr.target_ratio);

  auto& me = c.method;
  me.method = parse_method(kv.get("method.name", method_name(me.method)));
  me.adapter_dim = kv.get_int("method.adapter_dim", me.adapter_dim);
  me.lora_rank = kv.get_int("method.lora_rank", me.lora_rank);
  me.prompt_len = kv.get_int("method.prompt_len", me.prompt_len);
  me.freeze_layers = kv.get_int("method.freeze_layers", me.freeze_layers);
  me.side.reduction = kv.get_int("side.r", me.side.reduction);
  me.side.temperature = kv.get_double("side.temperature", me.side.temperature);
  me.side.keep_enc = kv.get_int_list("side.keep_enc", me.side.keep_enc);
  me.side.keep_dec = kv.get_int_list("side.keep_dec", me.side.keep_dec);
  me.side.ladders = parse_ladder_mode(kv.get("side.ladders", ladder_mode_name(me.side.ladders)));
  me.side_init = parse_side_init(kv.get("side.init", side_init_name(me.side_init)));
  me.fisher_samples = kv.get_int("side.fisher_samples", me.fisher_samples);
  return c;
}

}  // namespace lst
