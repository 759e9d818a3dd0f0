#include <gtest/gtest.h>

#include "lst/memory_model.hpp"
#include "lst/train.hpp"
#include "test_util.hpp"

using namespace lst;
using lst::testing::tiny_model;

namespace {

struct Case {
  ModelConfig model;
  MethodConfig method;
  std::int64_t batch;
  int seq;
};

MemoryReport measured(const Case& c) {
  const auto b = init_backbone(c.model, 1);
  TaskSpec t = lst::testing::tiny_task(c.model.has_decoder() ? TaskKind::Copy : TaskKind::Parity);
  t.vocab = c.model.vocab;
  t.seq_len = c.seq;
  t.train_size = static_cast<int>(c.batch);
  const auto data = make_dataset(t, c.model.arch);
  const auto m = apply_method(b, c.method, 2, &data.train);
  return measure_step_memory(m, data.train);
}

void expect_same(const MemoryReport& a, const MemoryReport& b, const std::string& what) {
  EXPECT_EQ(a.parameters, b.parameters) << what;
  EXPECT_EQ(a.gradients, b.gradients) << what;
  EXPECT_EQ(a.optimizer_state, b.optimizer_state) << what;
  EXPECT_EQ(a.retained_input_activations, b.retained_input_activations) << what;
  EXPECT_EQ(a.retained_derivatives, b.retained_derivatives) << what;
  EXPECT_EQ(a.ladder_taps, b.ladder_taps) << what;
  EXPECT_EQ(a.retained_other, b.retained_other) << what;
  EXPECT_EQ(a.retained_by_owner, b.retained_by_owner) << what;
  EXPECT_EQ(a.derivatives_by_owner, b.derivatives_by_owner) << what;
}

}  // namespace

// Property: for every method, architecture, ladder mode and shape tried the
// shape-only replay reproduces the tape byte for byte.
TEST(MemoryModel, EstimateMatchesTape) {
  std::vector<Case> cases;
  for (auto arch : {Architecture::EncoderDecoder, Architecture::Encoder}) {
    for (auto dt : {DType::Float32, DType::Float64}) {
      ModelConfig m = tiny_model(dt);
      m.arch = arch;
      for (auto method : kAllMethods) {
        MethodConfig c;
        c.method = method;
        c.side.reduction = 2;
        c.prompt_len = 3;
        c.adapter_dim = 3;
        c.lora_rank = 2;
        cases.push_back({m, c, 3, 5});
        if (method == Method::Lst) {
          for (auto mode : {LadderMode::FinalOnly, LadderMode::None}) {
            c.side.ladders = mode;
            cases.push_back({m, c, 2, 4});
          }
          c.side.ladders = LadderMode::Full;
          c.side.keep_enc = {2};
          c.side.keep_dec = {1};
          cases.push_back({m, c, 2, 6});
        } else if (method != Method::Prompt) {
          c.freeze_layers = arch == Architecture::Encoder ? 1 : 3;
          cases.push_back({m, c, 2, 4});
        }
      }
    }
  }
  for (const auto& c : cases) {
    const auto what = std::string(method_name(c.method.method)) + " " + architecture_name(c.model.arch) + " " +
                      dtype_name(c.model.dtype) + " ladders=" + ladder_mode_name(c.method.side.ladders) +
                      " freeze=" + std::to_string(c.method.freeze_layers);
    const Workload w{c.batch, c.seq, c.seq};
    expect_same(estimate(c.method, c.model, w), measured(c), what);
  }
}

TEST(MemoryModel, ZeroBatchRetainsNothing) {
  MethodConfig c;
  const auto r = estimate(c, ModelConfig{}, 0, 24);
  EXPECT_EQ(r.retained_total(), 0);
  EXPECT_GT(r.parameters, 0);
}

TEST(MemoryModel, PaperModeScalesWithReduction) {
  ModelConfig m;
  MethodConfig full;
  full.method = Method::Full;
  MethodConfig lst;
  lst.side.reduction = 2;
  const auto f = estimate(full, m, 32, 24, {true});
  const auto s = estimate(lst, m, 32, 24, {true});
  // Feed-forward terms only: the side network at half width keeps half of them.
  EXPECT_EQ(2 * (s.retained_input_activations + s.retained_derivatives),
            f.retained_input_activations + f.retained_derivatives);
  EXPECT_EQ(s.owner_derivatives(Owner::Backbone), 0);
}

// Affine rather than linear: the gate scalars of the side network do not grow with the batch.
TEST(MemoryModel, RetainedBytesAreAffineInBatch) {
  ModelConfig m;
  for (auto method : kAllMethods) {
    MethodConfig c;
    c.method = method;
    const auto one = estimate(c, m, 1, 20).retained_total();
    const auto two = estimate(c, m, 2, 20).retained_total();
    EXPECT_EQ(estimate(c, m, 7, 20).retained_total() - one, 6 * (two - one)) << method_name(method);
    if (method != Method::Lst) EXPECT_EQ(two, 2 * one) << method_name(method);
  }
}

TEST(MemoryModel, ValidateReportsRelativeErrors) {
  MemoryReport a, b;
  a.retained_derivatives = 110;
  b.retained_derivatives = 100;
  a.ladder_taps = 5;
  const auto checks = validate(a, b);
  bool saw_deriv = false, saw_taps = false;
  for (const auto& c : checks) {
    if (c.category == "retained_derivatives") {
      saw_deriv = true;
      EXPECT_NEAR(c.rel_error, 0.1, 1e-12);
    }
    if (c.category == "ladder_taps") {
      saw_taps = true;
      EXPECT_TRUE(c.mismatch);
    }
  }
  EXPECT_TRUE(saw_deriv);
  EXPECT_TRUE(saw_taps);
}
