#include <gtest/gtest.h>

#include <cmath>

#include "lst/ops.hpp"
#include "lst/pruning.hpp"
#include "prune_oracle.hpp"
#include "test_util.hpp"

using namespace lst;
using lst::testing::tiny_batch;
using lst::testing::tiny_model;

namespace {

Tensor mat(std::int64_t r, std::int64_t c, std::vector<double> v) {
  return Tensor::from_values({r, c}, DType::Float64, v);
}

}  // namespace

TEST(Pruning, RowScoresAreRowL1Norms) {
  EXPECT_EQ(row_scores(mat(2, 2, {1, -2, 0, 3})), (std::vector<double>{3, 3}));
  EXPECT_THROW(row_scores(Tensor::zeros({3}, DType::Float64)), DimensionError);
}

TEST(Pruning, TopKBreaksTiesTowardLowerIndex) {
  EXPECT_EQ(top_k_indices({3, 3}, 1), (std::vector<std::int64_t>{0}));
  EXPECT_EQ(top_k_indices({1, 5, 5, 2, 5}, 2), (std::vector<std::int64_t>{1, 2}));
  EXPECT_EQ(top_k_indices({0.5, 0.1, 0.9}, 3), (std::vector<std::int64_t>{0, 1, 2}));
  EXPECT_THROW(top_k_indices({1, 2}, 3), ConfigError);
}

// 4 -> 4 -> 2 chain at r = 2, worked by hand.
TEST(Pruning, ChainOracle) {
  // Row L1 norms of W1: 1, 10, 3, 7 -> keep rows {1, 3}.
  Tensor w1 = mat(4, 4, {1, 0, 0, 0, 0, 10, 0, 0, 0, 0, 3, 0, 0, 0, 0, -7});
  Tensor b1 = Tensor::from_values({4}, DType::Float64, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  Tensor w2 = mat(2, 4, {1, 2, 3, 4, 5, 6, 7, 8});
  std::vector<ChainLink> chain{{w1, b1, w1, true}, {w2, Tensor(), w2, false}};
  auto out = structural_prune(chain, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].kept_rows, (std::vector<std::int64_t>{1, 3}));
  EXPECT_EQ(out[0].weight.to_vector(), (std::vector<double>{0, 10, 0, 0, 0, 0, 0, -7}));
  EXPECT_EQ(out[0].bias.to_vector(), (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(out[1].kept_cols, (std::vector<std::int64_t>{1, 3}));
  EXPECT_EQ(out[1].kept_rows, (std::vector<std::int64_t>{0, 1}));
  EXPECT_EQ(out[1].weight.to_vector(), (std::vector<double>{2, 4, 6, 8}));
  EXPECT_FALSE(out[1].bias.defined());
}

TEST(Pruning, ChainErrors) {
  Tensor w = mat(3, 2, {1, 2, 3, 4, 5, 6});
  EXPECT_THROW(structural_prune({{w, Tensor(), w, true}}, 2), ConfigError);
  Tensor a = mat(2, 2, {1, 2, 3, 4});
  EXPECT_THROW(structural_prune({{w, Tensor(), w, true}, {a, Tensor(), a, true}}, 1), WiringError);
  EXPECT_THROW(structural_prune({{a, Tensor(), w, true}}, 1), DimensionError);
  EXPECT_THROW(structural_prune({{a, Tensor(), a, true}}, 0), ConfigError);
}

TEST(Pruning, ReductionOneIsIdentity) {
  Rng rng(5);
  Tensor w1 = random_normal({6, 4}, DType::Float64, 1.0, rng);
  Tensor b1 = random_normal({6}, DType::Float64, 1.0, rng);
  Tensor w2 = random_normal({3, 6}, DType::Float64, 1.0, rng);
  auto out = structural_prune({{w1, b1, w1, true}, {w2, Tensor(), w2, true}}, 1);
  EXPECT_TRUE(out[0].weight.bit_equal(w1));
  EXPECT_TRUE(out[0].bias.bit_equal(b1));
  EXPECT_TRUE(out[1].weight.bit_equal(w2));
}

TEST(Pruning, MagnitudeImportanceCoversMatrices) {
  const auto b = init_backbone(tiny_model(), 1);
  const auto imp = magnitude_importance(b.parameters());
  EXPECT_TRUE(imp.count("backbone.enc.1.ff.in.weight"));
  EXPECT_FALSE(imp.count("backbone.enc.1.ff.in.bias"));
  EXPECT_TRUE(imp.at("backbone.enc.1.ff.in.weight").values.bit_equal(b.enc[0].ff.in.weight.value().to(DType::Float64)));
}

TEST(Pruning, FisherIsMeanSquaredPerSampleGradient) {
  // loss_i = w . x_i  -> grad_i = x_i, Fisher = mean of x_i^2.
  Parameter w("w", Tensor::zeros({1, 2}, DType::Float64), false);
  const std::vector<std::vector<double>> xs{{1, 2}, {3, -1}};
  auto imp = fisher_importance({w}, 2, [&](Tape& t, std::int64_t i) {
    Var x = Var::constant(Tensor::from_values({2, 1}, DType::Float64, xs[static_cast<std::size_t>(i)]));
    return ops::sum(ops::matmul(t.param(w), x));
  });
  EXPECT_NEAR(imp.at("w").values.at(0), 5.0, 1e-12);
  EXPECT_NEAR(imp.at("w").values.at(1), 2.5, 1e-12);
  EXPECT_FALSE(w.trainable());
}

TEST(Pruning, BackboneKeptSetsMatchBruteForce) {
  ModelConfig m = tiny_model();
  m.layers = 4;
  m.d_model = 16;
  m.d_ff = 32;
  const auto b = init_backbone(m, 7);
  const auto imp = magnitude_importance(b.parameters());
  for (int r : {2, 4}) {
    SideConfig sc;
    sc.reduction = r;
    auto res = prune_backbone_to_side(b, imp, sc, 1);
    EXPECT_EQ(res.kept, oracle::expected_kept(imp, m, r)) << "r=" << r;
  }
}

TEST(Pruning, PrunedWeightsAreCopiesOfBackboneEntries) {
  const auto m = tiny_model();
  const auto b = init_backbone(m, 3);
  SideConfig sc;
  sc.reduction = 2;
  auto res = prune_backbone_to_side(b, magnitude_importance(b.parameters()), sc, 1);
  const auto& resid = res.kept.at("enc.residual");
  const auto& ff = res.kept.at("enc.1.ff");
  const Tensor& src = b.enc[0].ff.out.weight.value();
  const Tensor& dst = res.side.enc.blocks[0].ff.out.weight.value();
  for (std::size_t i = 0; i < resid.size(); ++i) {
    for (std::size_t j = 0; j < ff.size(); ++j) {
      EXPECT_EQ(dst.at(static_cast<std::int64_t>(i * ff.size() + j)), src.at(resid[i] * m.d_ff + ff[j]));
    }
  }
  EXPECT_TRUE(res.side.enc.final_ln.gamma.value().bit_equal(gather(b.enc_final.gamma.value(), resid)));
}

TEST(Pruning, FisherImportanceOnBackboneIsFiniteAndNonNegative) {
  const auto m = tiny_model();
  const auto b = init_backbone(m, 3);
  const Batch data = tiny_batch(m, 4);
  const auto imp = fisher_importance(b, data, 4);
  for (const auto& [name, v] : imp) {
    for (double x : v.values.to_vector()) {
      ASSERT_TRUE(std::isfinite(x)) << name;
      ASSERT_GE(x, 0.0) << name;
    }
  }
  EXPECT_THROW(fisher_importance(b, data, 5), InputError);
}
