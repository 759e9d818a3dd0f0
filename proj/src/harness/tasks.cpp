#include "lst/tasks.hpp"

#include <algorithm>

#include "lst/rng.hpp"

namespace lst {

const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Copy:
      return "copy";
    case TaskKind::Reverse:
      return "reverse";
    case TaskKind::Mixed:
      return "mixed";
    case TaskKind::CharLm:
      return "char-lm";
    case TaskKind::Parity:
      return "parity";
  }
  return "?";
}

TaskKind parse_task(const std::string& s) {
  for (auto t : {TaskKind::Copy, TaskKind::Reverse, TaskKind::Mixed, TaskKind::CharLm, TaskKind::Parity}) {
    if (s == task_name(t)) return t;
  }
  throw ConfigError("unknown task '" + s + "' (copy, reverse, mixed, char-lm, parity)");
}

bool is_seq2seq(TaskKind t) { return t == TaskKind::Copy || t == TaskKind::Reverse || t == TaskKind::Mixed; }

std::int64_t TaskSpec::src_len() const {
  const bool marked = marker || task == TaskKind::Mixed;
  return seq_len + (marked && is_seq2seq(task) ? 1 : 0) + max_shift;
}

void TaskSpec::validate(const ModelConfig& model) const {
  if (seq_len < 1) throw ConfigError("task: seq_len must be >= 1");
  if (train_size < 1 || eval_size < 1) throw ConfigError("task: train and eval sizes must be >= 1");
  if (max_shift < 0) throw ConfigError("task: max_shift must be >= 0");
  if (vocab != model.vocab) {
    throw ConfigError("task: vocab " + std::to_string(vocab) + " differs from model vocab " +
                      std::to_string(model.vocab));
  }
  if (vocab < kFirstContent + 2) throw ConfigError("task: vocab too small for any content tokens");
  if (is_seq2seq(task) != model.has_decoder()) {
    throw ConfigError(std::string("task: ") + task_name(task) + " does not fit a " + architecture_name(model.arch) +
                      " model");
  }
  if (src_len() > model.max_seq || tgt_len() > model.max_seq) {
    throw ConfigError("task: sequence length " + std::to_string(src_len()) + " exceeds max_seq " +
                      std::to_string(model.max_seq));
  }
}

namespace {

struct Rows {
  std::vector<std::int32_t> src, dec_in, targets;
};

void seq2seq_example(const TaskSpec& spec, TaskKind kind, Rng& rng, Rows& out) {
  const int n = spec.seq_len;
  const int content = spec.vocab - kFirstContent;
  std::vector<std::int32_t> x(static_cast<std::size_t>(n));
  for (auto& t : x) t = static_cast<std::int32_t>(kFirstContent + rng.uniform_int(0, content - 1));
  if (kind == TaskKind::Mixed) kind = rng.uniform_int(0, 1) == 0 ? TaskKind::Copy : TaskKind::Reverse;
  const bool marked = spec.marker || spec.task == TaskKind::Mixed;

  const auto shift = spec.max_shift > 0 ? rng.uniform_int(0, spec.max_shift) : 0;
  std::vector<std::int32_t> src(static_cast<std::size_t>(shift), kPad);
  if (marked) src.push_back(kind == TaskKind::Copy ? kCopyMark : kReverseMark);
  src.insert(src.end(), x.begin(), x.end());
  src.resize(static_cast<std::size_t>(spec.src_len()), kPad);

  std::vector<std::int32_t> y = x;
  if (kind == TaskKind::Reverse) std::reverse(y.begin(), y.end());
  out.src.insert(out.src.end(), src.begin(), src.end());
  out.dec_in.push_back(kBos);
  out.dec_in.insert(out.dec_in.end(), y.begin(), y.end() - 1);
  out.targets.insert(out.targets.end(), y.begin(), y.end());
}

void char_lm_example(const TaskSpec& spec, Rng& rng, Rows& out) {
  const int content = spec.vocab - kFirstContent;
  std::int64_t c = rng.uniform_int(0, content - 1);
  for (int t = 0; t < spec.seq_len; ++t) {
    const auto tok = static_cast<std::int32_t>(kFirstContent + c);
    out.targets.push_back(tok);
    out.src.push_back(rng.uniform() < 0.15 ? kMask : tok);
    // mostly deterministic successor, occasionally a skip
    c = (3 * c + 1 + (rng.uniform() < 0.2 ? 1 : 0)) % content;
  }
}

void parity_example(const TaskSpec& spec, Rng& rng, Rows& out) {
  const int content = spec.vocab - kFirstContent;
  int parity = 0;
  for (int t = 0; t < spec.seq_len; ++t) {
    const auto c = rng.uniform_int(0, content - 1);
    out.src.push_back(static_cast<std::int32_t>(kFirstContent + c));
    parity ^= static_cast<int>(c % 2 == 0);  // even content ids are the marked ones
    out.targets.push_back(kFirstContent + parity);
  }
}

Batch generate(const TaskSpec& spec, int count, Rng rng) {
  Rows rows;
  for (int i = 0; i < count; ++i) {
    switch (spec.task) {
      case TaskKind::Copy:
      case TaskKind::Reverse:
      case TaskKind::Mixed:
        seq2seq_example(spec, spec.task, rng, rows);
        break;
      case TaskKind::CharLm:
        char_lm_example(spec, rng, rows);
        break;
      case TaskKind::Parity:
        parity_example(spec, rng, rows);
        break;
    }
  }
  Batch b;
  b.src = Tensor::from_ids({count, static_cast<std::int64_t>(rows.src.size()) / count}, rows.src);
  if (!rows.dec_in.empty()) b.dec_in = Tensor::from_ids({count, spec.tgt_len()}, rows.dec_in);
  b.targets = Tensor::from_ids({count, static_cast<std::int64_t>(rows.targets.size()) / count}, rows.targets);
  return b;
}

}  // namespace

Dataset make_dataset(const TaskSpec& spec, Architecture arch) {
  if (is_seq2seq(spec.task) != (arch == Architecture::EncoderDecoder)) {
    throw ConfigError(std::string("task: ") + task_name(spec.task) + " does not fit a " + architecture_name(arch) +
                      " model");
  }
  Rng root(spec.seed);
  return {generate(spec, spec.train_size, root.fork(1)), generate(spec, spec.eval_size, root.fork(2))};
}

}  // namespace lst
