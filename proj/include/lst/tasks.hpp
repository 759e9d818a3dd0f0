#pragma once

#include <string>

#include "lst/backbone.hpp"

namespace lst {

// Token layout shared by every task.
inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kBos = 1;
inline constexpr std::int32_t kMask = 2;
inline constexpr std::int32_t kCopyMark = 3;
inline constexpr std::int32_t kReverseMark = 4;
inline constexpr std::int32_t kFirstContent = 5;

enum class TaskKind {
  Copy,     // seq2seq: output = input
  Reverse,  // seq2seq: output = reversed input
  Mixed,    // seq2seq: half copy, half reverse, always marked
  CharLm,   // encoder: recover masked tokens of a Markov stream
  Parity,   // encoder: running parity of marked tokens
};
const char* task_name(TaskKind t);
TaskKind parse_task(const std::string& s);
bool is_seq2seq(TaskKind t);

struct TaskSpec {
  TaskKind task = TaskKind::Copy;
  int vocab = 32;
  /// Content tokens per example.
  int seq_len = 24;
  int train_size = 1024;
  int eval_size = 128;
  std::uint64_t seed = 1;
  /// Prepend the task marker (copy / reverse mark) to the source.
  bool marker = false;
  /// Up to this many pad tokens are put in front of the source, the rest
  /// behind it, so the source length is fixed at seq_len + marker + max_shift.
  int max_shift = 0;

  std::int64_t src_len() const;
  std::int64_t tgt_len() const { return seq_len; }
  void validate(const ModelConfig& model) const;
};

struct Dataset {
  Batch train;
  Batch eval;
};

/// Deterministic in spec.seed; train and eval streams are independent.
Dataset make_dataset(const TaskSpec& spec, Architecture arch);

}  // namespace lst
