#include <gtest/gtest.h>

#include <set>

#include "lst/memory_model.hpp"
#include "lst/methods.hpp"
#include "lst/ops.hpp"
#include "test_util.hpp"

using namespace lst;
using lst::testing::tiny_batch;
using lst::testing::tiny_model;

namespace {

MethodConfig cfg(Method m) {
  MethodConfig c;
  c.method = m;
  c.side.reduction = 2;
  c.prompt_len = 2;
  c.adapter_dim = 2;
  c.lora_rank = 2;
  return c;
}

std::set<std::string> trainable_names(const TrainableModel& m) {
  std::set<std::string> out;
  for (const auto& p : m.trainable()) out.insert(p.name());
  return out;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }
bool ends_with(const std::string& s, const std::string& x) {
  return s.size() >= x.size() && s.compare(s.size() - x.size(), x.size(), x) == 0;
}
bool is_layer_norm(const std::string& n) {
  return n.find(".ln_") != std::string::npos || n.find(".final_ln.") != std::string::npos;
}

Tensor logits_of(const TrainableModel& m, const Batch& b) {
  Tape tape;
  tape.set_grad_enabled(false);
  return m.forward(tape, b).value;
}

}  // namespace

TEST(Methods, ParseAndNames) {
  for (auto m : kAllMethods) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_THROW(parse_method("sgd"), ConfigError);
}

TEST(Methods, TrainableSetsAreExact) {
  const auto b = init_backbone(tiny_model(), 1);
  const Batch data = tiny_batch(b.config, 4);
  for (auto method : kAllMethods) {
    auto m = apply_method(b, cfg(method), 3, &data);
    const auto names = trainable_names(m);
    ASSERT_FALSE(names.empty()) << method_name(method);
    for (const auto& p : m.parameters()) {
      const auto& n = p.name();
      bool want = false;
      switch (method) {
        case Method::Full:
          want = starts_with(n, "backbone.");
          break;
        case Method::Adapter:
          want = starts_with(n, "adapter.") || (starts_with(n, "backbone.") && is_layer_norm(n));
          break;
        case Method::Lora:
          want = starts_with(n, "lora.");
          break;
        case Method::Bitfit:
          want = starts_with(n, "backbone.") && ends_with(n, ".bias");
          break;
        case Method::Prompt:
          want = n == "prompt.embeddings";
          break;
        case Method::Lst:
          want = starts_with(n, "side.");
          break;
      }
      EXPECT_EQ(names.count(n) == 1, want) << method_name(method) << " " << n;
    }
  }
}

TEST(Methods, InsertedModulesStartAsIdentity) {
  const auto b = init_backbone(tiny_model(), 1);
  const Batch batch = tiny_batch(b.config);
  const Tensor base = logits_of(apply_method(b, cfg(Method::Full), 0), batch);
  for (auto method : {Method::Adapter, Method::Lora, Method::Bitfit}) {
    EXPECT_TRUE(logits_of(apply_method(b, cfg(method), 5), batch).bit_equal(base)) << method_name(method);
  }
}

TEST(Methods, BackboneIsCopied) {
  const auto b = init_backbone(tiny_model(), 1);
  auto m = apply_method(b, cfg(Method::Full), 0);
  m.backbone.tok_emb.value().set(0, 123.0);
  EXPECT_NE(b.tok_emb.value().at(0), 123.0);
}

TEST(Methods, BitfitCensus) {
  const auto mc = tiny_model();
  const auto b = init_backbone(mc, 1);
  auto m = apply_method(b, cfg(Method::Bitfit), 0);
  const std::int64_t d = mc.d_model, f = mc.d_ff, L = mc.layers;
  // encoder layer: 4 attention biases + 2 LN betas + d_ff + d; decoder adds cross attention + LN.
  const auto enc = 4 * d + 2 * d + f + d;
  const auto dec = 8 * d + 3 * d + f + d;
  EXPECT_EQ(m.trainable_count(), L * (enc + dec) + 2 * d);
}

TEST(Methods, PromptLengthValidation) {
  const auto b = init_backbone(tiny_model(), 1);
  auto c = cfg(Method::Prompt);
  c.prompt_len = b.config.max_seq;
  EXPECT_THROW(apply_method(b, c, 0), ConfigError);
}

TEST(Methods, FreezePrefixIsMonotone) {
  const auto b = init_backbone(tiny_model(), 1);
  for (auto method : {Method::Full, Method::Adapter, Method::Lora, Method::Bitfit}) {
    std::int64_t prev = -1;
    for (int n = 2 * b.config.layers; n >= 0; --n) {
      auto c = cfg(method);
      c.freeze_layers = n;
      const auto count = apply_method(b, c, 0).trainable_count();
      EXPECT_GE(count, prev) << method_name(method) << " n=" << n;
      prev = count;
    }
  }
  auto full = cfg(Method::Full);
  full.freeze_layers = 2 * b.config.layers;
  EXPECT_EQ(apply_method(b, full, 0).trainable_count(), 0);
  full.freeze_layers = 2 * b.config.layers + 1;
  EXPECT_THROW(apply_method(b, full, 0), ConfigError);
  auto lst = cfg(Method::Lst);
  lst.freeze_layers = 1;
  EXPECT_THROW(apply_method(b, lst, 0), ConfigError);
}

TEST(Methods, LstLeavesBackboneUntouchedByTraining) {
  const auto b = init_backbone(tiny_model(), 1);
  const Batch batch = tiny_batch(b.config);
  auto m = apply_method(b, cfg(Method::Lst), 0);
  Tape tape;
  auto grads = tape.backward(m.loss(tape, batch));
  for (const auto& p : m.backbone.parameters()) EXPECT_EQ(grads.count(p.name()), 0u) << p.name();
  EXPECT_EQ(tape.retained_bytes().owner_derivatives(Owner::Backbone), 0);
}

TEST(Methods, SideInitsDiffer) {
  const auto b = init_backbone(tiny_model(), 1);
  const Batch data = tiny_batch(b.config, 4);
  auto rnd = cfg(Method::Lst);
  rnd.side_init = SideInit::Random;
  auto mag = cfg(Method::Lst);
  auto fis = cfg(Method::Lst);
  fis.side_init = SideInit::Fisher;
  auto a = apply_method(b, rnd, 0, &data);
  auto c = apply_method(b, mag, 0, &data);
  auto d = apply_method(b, fis, 0, &data);
  EXPECT_TRUE(a.pruned_kept.empty());
  EXPECT_FALSE(c.pruned_kept.empty());
  EXPECT_FALSE(d.pruned_kept.empty());
  EXPECT_THROW(apply_method(b, fis, 0, nullptr), ConfigError);
}

TEST(Methods, ParameterCensusMatchesEstimate) {
  const auto mc = tiny_model();
  const auto b = init_backbone(mc, 1);
  for (auto method : kAllMethods) {
    for (int freeze : {0, 1, 3}) {
      auto c = cfg(method);
      if (method == Method::Lst || method == Method::Prompt) {
        if (freeze) continue;
      } else {
        c.freeze_layers = freeze;
      }
      auto m = apply_method(b, c, 0);
      const auto [total, trainable] = estimate_parameter_counts(c, mc);
      EXPECT_EQ(total, m.total_count()) << method_name(method) << " freeze=" << freeze;
      EXPECT_EQ(trainable, m.trainable_count()) << method_name(method) << " freeze=" << freeze;
    }
  }
}
