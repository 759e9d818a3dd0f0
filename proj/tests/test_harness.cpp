#include <gtest/gtest.h>

#include <cmath>

#include "lst/ablate.hpp"
#include "test_util.hpp"

using namespace lst;
using lst::testing::tiny_model;
using lst::testing::tiny_task;

TEST(Config, ParseAndTypedGetters) {
  auto kv = KeyValueConfig::parse("# comment\nmodel.layers = 3\n\ntrain.lr=0.5\nside.keep_enc=1,3\ntask.marker=true\n");
  EXPECT_EQ(kv.get_int("model.layers", 0), 3);
  EXPECT_DOUBLE_EQ(kv.get_double("train.lr", 0), 0.5);
  EXPECT_EQ(kv.get_int_list("side.keep_enc", {}), (std::vector<int>{1, 3}));
  EXPECT_TRUE(kv.get_bool("task.marker", false));
  EXPECT_EQ(kv.get_int("missing", 7), 7);
  EXPECT_TRUE(kv.unused().empty());
}

TEST(Config, BadInputs) {
  EXPECT_THROW(KeyValueConfig::parse("no equals sign"), ConfigError);
  auto kv = KeyValueConfig::parse("a=abc\nb=1.5x\nc=maybe");
  EXPECT_THROW(kv.get_int("a", 0), ConfigError);
  EXPECT_THROW(kv.get_double("b", 0), ConfigError);
  EXPECT_THROW(kv.get_bool("c", false), ConfigError);
  EXPECT_THROW(KeyValueConfig::load("/nonexistent/lst.cfg"), ConfigError);
}

TEST(Config, OverridesAndUnusedKeys) {
  auto kv = KeyValueConfig::parse("side.r=4\nmodel.layers=2\nbogus.key=1");
  kv.merge(KeyValueConfig::parse("side.r=2"));
  const auto rc = read_run_config(kv);
  EXPECT_EQ(rc.method.side.reduction, 2);
  EXPECT_EQ(rc.model.layers, 2);
  EXPECT_EQ(rc.task.vocab, rc.model.vocab);
  EXPECT_EQ(kv.unused(), (std::vector<std::string>{"bogus.key"}));
  EXPECT_THROW(read_run_config(KeyValueConfig::parse("method.name=nope")), ConfigError);
  EXPECT_THROW(read_run_config(KeyValueConfig::parse("model.dtype=int8")), ConfigError);
}

TEST(Tasks, CopyAndReverseTargets) {
  auto spec = tiny_task(TaskKind::Reverse);
  const auto d = make_dataset(spec, Architecture::EncoderDecoder);
  const auto S = spec.seq_len;
  for (std::int64_t i = 0; i < d.train.size(); ++i) {
    for (int j = 0; j < S; ++j) {
      EXPECT_EQ(d.train.targets.at(i * S + j), d.train.src.at(i * S + (S - 1 - j)));
      EXPECT_EQ(d.train.dec_in.at(i * S + j), j == 0 ? kBos : d.train.targets.at(i * S + j - 1));
    }
  }
}

TEST(Tasks, MarkersAndShiftLayout) {
  auto spec = tiny_task(TaskKind::Mixed);
  spec.max_shift = 2;
  EXPECT_EQ(spec.src_len(), spec.seq_len + 1 + 2);
  const auto d = make_dataset(spec, Architecture::EncoderDecoder);
  const auto W = spec.src_len();
  int copies = 0;
  for (std::int64_t i = 0; i < d.train.size(); ++i) {
    int pos = 0;
    while (d.train.src.at(i * W + pos) == kPad) ++pos;
    ASSERT_LE(pos, 2);
    const auto mark = d.train.src.at(i * W + pos);
    ASSERT_TRUE(mark == kCopyMark || mark == kReverseMark);
    copies += mark == kCopyMark;
    const bool copy = mark == kCopyMark;
    for (int j = 0; j < spec.seq_len; ++j) {
      const auto want = d.train.src.at(i * W + pos + 1 + (copy ? j : spec.seq_len - 1 - j));
      EXPECT_EQ(d.train.targets.at(i * spec.seq_len + j), want);
    }
  }
  EXPECT_GT(copies, 0);
  EXPECT_LT(copies, d.train.size());
}

TEST(Tasks, DeterministicAndIndependentSplits) {
  const auto spec = tiny_task();
  const auto a = make_dataset(spec, Architecture::EncoderDecoder);
  const auto b = make_dataset(spec, Architecture::EncoderDecoder);
  EXPECT_TRUE(a.train.src.bit_equal(b.train.src));
  EXPECT_FALSE(a.train.rows(0, 1).src.bit_equal(a.eval.rows(0, 1).src));
}

TEST(Tasks, ParityAndCharLm) {
  auto spec = tiny_task(TaskKind::Parity);
  const auto d = make_dataset(spec, Architecture::Encoder);
  EXPECT_FALSE(d.train.dec_in.defined());
  for (std::int64_t i = 0; i < d.train.size(); ++i) {
    int p = 0;
    for (int j = 0; j < spec.seq_len; ++j) {
      p ^= static_cast<int>((static_cast<int>(d.train.src.at(i * spec.seq_len + j)) - kFirstContent) % 2 == 0);
      EXPECT_EQ(d.train.targets.at(i * spec.seq_len + j), kFirstContent + p);
    }
  }
  spec.task = TaskKind::CharLm;
  EXPECT_NO_THROW(make_dataset(spec, Architecture::Encoder));
  EXPECT_THROW(spec.validate(tiny_model()), ConfigError);  // encoder task on an encoder-decoder model
}

TEST(Tasks, ValidationAgainstModel) {
  auto spec = tiny_task();
  spec.seq_len = 40;
  EXPECT_THROW(spec.validate(tiny_model()), ConfigError);
  spec = tiny_task();
  spec.vocab = 5;
  EXPECT_THROW(spec.validate(tiny_model()), ConfigError);
}

TEST(Train, AdamFirstStepMovesByLearningRate) {
  Parameter p("p", Tensor::from_values({2}, DType::Float64, std::vector<double>{1.0, -1.0}));
  GradMap g{{"p", Tensor::from_values({2}, DType::Float64, std::vector<double>{0.3, -7.0})}};
  Adam adam(0.1);
  adam.step({p}, g);
  EXPECT_NEAR(p.value().at(0), 0.9, 1e-7);
  EXPECT_NEAR(p.value().at(1), -0.9, 1e-7);
}

TEST(Train, SingleStepRunAndDeterminism) {
  const auto m = tiny_model();
  const auto b = init_backbone(m, 1);
  MethodConfig mc;
  mc.side.reduction = 2;
  TrainConfig tc;
  tc.steps = 1;
  tc.batch = 4;
  const auto r1 = finetune(b, mc, tiny_task(), tc);
  const auto r2 = finetune(b, mc, tiny_task(), tc);
  EXPECT_EQ(r1.result.steps_run, 1);
  ASSERT_EQ(r1.result.records.size(), 2u);
  EXPECT_EQ(r1.result.final_eval_loss, r2.result.final_eval_loss);
  EXPECT_NEAR(r1.result.initial_eval_loss, std::log(16.0), 1e-9);
  EXPECT_GT(r1.result.memory.retained_total(), 0);
  tc.steps = 0;
  EXPECT_THROW(finetune(b, mc, tiny_task(), tc), ConfigError);
}

TEST(Train, LossDecreasesOnCopy) {
  const auto m = tiny_model(DType::Float32);
  TaskSpec t = tiny_task();
  t.train_size = 64;
  TrainConfig tc;
  tc.steps = 60;
  tc.batch = 16;
  tc.lr = 1e-2;
  tc.eval_interval = 30;
  std::vector<std::string> lines;
  const auto r = pretrain(m, t, tc, [&](const std::string& s) { lines.push_back(s); });
  EXPECT_LT(r.result.final_eval_loss, 0.8 * r.result.initial_eval_loss);
  EXPECT_EQ(lines.size(), 3u);
  EXPECT_NE(lines[0].find("step=0 "), std::string::npos);
}

TEST(Train, EarlyStopAtTargetRatio) {
  const auto m = tiny_model(DType::Float32);
  TaskSpec t = tiny_task();
  t.train_size = 64;
  TrainConfig tc;
  tc.steps = 500;
  tc.batch = 16;
  tc.lr = 1e-2;
  tc.eval_interval = 10;
  tc.target_ratio = 0.9;
  const auto r = pretrain(m, t, tc);
  EXPECT_LT(r.result.steps_run, 500);
  EXPECT_LT(r.result.final_eval_loss, 0.9 * r.result.initial_eval_loss);
}

TEST(Train, GradCheckOfEveryMethod) {
  const auto m = tiny_model();
  const auto b = init_backbone(m, 1);
  TaskSpec t = tiny_task();
  const auto data = make_dataset(t, m.arch);
  for (auto method : kAllMethods) {
    MethodConfig mc;
    mc.method = method;
    mc.side.reduction = 2;
    mc.prompt_len = 2;
    mc.adapter_dim = 2;
    mc.lora_rank = 2;
    auto model = apply_method(b, mc, 0, &data.train);
    const auto rep = grad_check_model(model, data.train.rows(0, 2), 3);
    EXPECT_TRUE(rep.ok) << method_name(method) << "\n" << format_report(rep);
  }
}

TEST(Ablate, SuiteNamesAndTableLookup) {
  for (auto s : {Suite::Init, Suite::Shortcuts, Suite::DropVsFreeze, Suite::RSweep}) {
    EXPECT_EQ(parse_suite(suite_name(s)), s);
  }
  EXPECT_THROW(parse_suite("everything"), ConfigError);
  AblationTable t;
  t.cells.push_back({"lst", "r=2", {1.0, 3.0}, 2.0, std::sqrt(2.0), 10, 0.1});
  EXPECT_EQ(t.cell("lst", "r=2").retained_bytes, 10);
  EXPECT_THROW(t.cell("lst", "r=4"), InputError);
  EXPECT_NE(format_table(t).find("arm=lst setting=r=2 seeds=2"), std::string::npos);
}

TEST(Ablate, ShortcutSuiteRunsEveryArm) {
  ModelConfig m = tiny_model(DType::Float32);
  const auto b = init_backbone(m, 1);
  AblationSetup s;
  s.transfer = tiny_task(TaskKind::Reverse);
  s.finetune.steps = 2;
  s.finetune.batch = 4;
  s.lst.side.reduction = 2;
  s.seeds = 2;
  const auto t = ablate(Suite::Shortcuts, b, s);
  ASSERT_EQ(t.cells.size(), 3u);
  EXPECT_LT(t.cell("compression").retained_bytes, t.cell("lst").retained_bytes);
  for (const auto& c : t.cells) EXPECT_EQ(c.losses.size(), 2u);
}
