#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "glocal/errors.hpp"
#include "glocal/model.hpp"
#include "test_util.hpp"

namespace glocal {
namespace {

using test::pointers;
using test::random_corpus;
using test::small_config;

constexpr std::size_t kVocab = 12, kLabels = 4, kLen = 8;

GlocalModel small_model(std::uint64_t seed = 1, std::size_t layers = 2) {
  return GlocalModel::init(small_config(kVocab, kLabels, layers), seed);
}

TEST(ModelConfig, ToyDefaultsAndValidation) {
  const ModelConfig c = ModelConfig::toy(100, 7);
  EXPECT_EQ(c.encoder.num_layers, 4u);
  EXPECT_EQ(c.encoder.model_dim, 64u);
  EXPECT_EQ(c.encoder.num_heads, 4u);
  EXPECT_EQ(c.encoder.ffn_dim, 256u);
  EXPECT_EQ(c.encoder.max_positions, 64u);
  EXPECT_EQ(c.heads.local_layer, 1u);
  EXPECT_EQ(c.heads.tau, 1.0);
  EXPECT_FALSE(c.heads.pooler);
  EXPECT_NO_THROW(c.validate());
  ModelConfig bad = c;
  bad.heads.model_dim = 32;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = c;
  bad.heads.local_layer = 5;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Model, InitIsSeeded) {
  GlocalModel a = small_model(3), b = small_model(3), c = small_model(4);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(*pa[i].tensor, *pb[i].tensor) << pa[i].name;
    differs |= !(*pa[i].tensor == *pc[i].tensor);
  }
  EXPECT_TRUE(differs);
}

TEST(Forward, FinalIsExactMeanAndBetweenHeads) {
  const GlocalModel m = small_model();
  const Corpus c = random_corpus(2, 10, kVocab, kLabels, kLen);
  const auto batch = pointers(c);
  const PredictionBatch p = forward(m, batch);
  for (std::size_t i = 0; i < p.p_final.size(); ++i) {
    EXPECT_EQ(p.p_final[i], (p.p_local[i] + p.p_global[i]) / 2.0);
    EXPECT_GE(p.p_final[i], std::min(p.p_local[i], p.p_global[i]));
    EXPECT_LE(p.p_final[i], std::max(p.p_local[i], p.p_global[i]));
    EXPECT_GT(p.p_global[i], 0.0);
    EXPECT_LT(p.p_global[i], 1.0);
  }
}

TEST(Forward, ZeroClassifierOutputsGiveOneHalf) {
  GlocalModel m = small_model();
  m.zero_classifier_outputs();
  const Corpus c = random_corpus(3, 5, kVocab, kLabels, kLen);
  const PredictionBatch p = forward(m, pointers(c));
  for (Source s : kAllSources)
    for (double v : p.probs(s).data()) EXPECT_EQ(v, 0.5);
}

TEST(Forward, EqualHeadsGiveEqualFinal) {
  ModelConfig cfg = small_config(kVocab, kLabels, 2);
  cfg.heads.pooler = true;
  GlocalModel m = GlocalModel::init(cfg, 5);
  // Constant pooled feature and identical label rows: every global logit is
  // the same number, which the local head reproduces through its output bias.
  m.global_head.pooler_weight = Tensor::zeros(m.global_head.pooler_weight.shape());
  for (double& v : m.global_head.pooler_bias.data()) v = 0.4;
  for (std::size_t l = 0; l < kLabels; ++l)
    for (std::size_t j = 0; j < 8; ++j) m.global_head.label_embedding.at(l, j) = 0.1 * static_cast<double>(j);
  const Corpus c = random_corpus(6, 4, kVocab, kLabels, kLen);
  const double z = std::tanh(0.4) * 0.1 * (0 + 1 + 2 + 3 + 4 + 5 + 6 + 7);
  const PredictionBatch before = forward(m, pointers(c));
  m.local_head.mlp_w2 = Tensor::zeros(m.local_head.mlp_w2.shape());
  m.local_head.mlp_b2[0] = std::log(before.p_global[0] / (1.0 - before.p_global[0]));
  const PredictionBatch p = forward(m, pointers(c));
  EXPECT_NEAR(p.p_global[0], sigmoid_scalar(z), 1e-15);
  for (std::size_t i = 0; i < p.p_final.size(); ++i) {
    EXPECT_EQ(p.p_global[i], p.p_global[0]);
    EXPECT_NEAR(p.p_local[i], p.p_global[i], 1e-15);
    EXPECT_NEAR(p.p_final[i], p.p_global[i], 1e-15);
  }
}

TEST(Forward, SerialAndParallelIdentical) {
  const GlocalModel m = small_model();
  const Corpus c = random_corpus(7, 13, kVocab, kLabels, kLen);
  const PredictionBatch a = forward(m, pointers(c), true, Execution::serial);
  const PredictionBatch b = forward(m, pointers(c), true, Execution::parallel);
  EXPECT_EQ(a.p_final, b.p_final);
  EXPECT_EQ(*a.attention, *b.attention);
}

TEST(Forward, AttentionMapShapeAndRows) {
  const GlocalModel m = small_model();
  const Corpus c = random_corpus(8, 6, kVocab, kLabels, kLen);
  const PredictionBatch p = forward(m, pointers(c), true);
  ASSERT_TRUE(p.attention);
  EXPECT_EQ(p.attention->shape(), (Shape{6, kLabels, kLen}));
  for (std::size_t d = 0; d < 6; ++d) {
    for (std::size_t l = 0; l < kLabels; ++l) {
      double s = 0.0;
      for (std::size_t i = 0; i < kLen; ++i) {
        const double a = (*p.attention)[(d * kLabels + l) * kLen + i];
        if (!c.examples[d].mask[i]) {
          EXPECT_EQ(a, 0.0);
        }
        s += a;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Forward, PaddingInvarianceOfAllLogits) {
  ModelConfig cfg = small_config(kVocab, kLabels, 2, 8, 16);
  cfg.heads.pooler = true;
  const GlocalModel m = GlocalModel::init(cfg, 9);
  Rng rng(10);
  Example short_ex = test::random_example(rng, kVocab, kLabels, 6, 6);
  Example long_ex = short_ex;
  long_ex.token_ids.resize(16, kPadId);
  long_ex.mask.resize(16, 0);
  const std::vector<const Example*> a = {&short_ex}, b = {&long_ex};
  const PredictionBatch pa = forward(m, a), pb = forward(m, b);
  for (Source s : kAllSources)
    for (std::size_t l = 0; l < kLabels; ++l) EXPECT_NEAR(pa.probs(s)[l], pb.probs(s)[l], 1e-9);
}

// --- loss --------------------------------------------------------------------

TEST(Loss, ZeroLogitsGiveTwoLn2) {
  GlocalModel m = small_model();
  m.zero_classifier_outputs();
  const Corpus c = random_corpus(11, 5, kVocab, kLabels, kLen);
  EXPECT_NEAR(loss(m, pointers(c)).total, 2.0 * std::numbers::ln2, 1e-15);
}

TEST(Loss, SaturatedPerfectPredictions) {
  ModelConfig cfg = small_config(kVocab, 2, 1);
  cfg.heads.pooler = true;
  GlocalModel m = GlocalModel::init(cfg, 12);
  m.global_head.pooler_weight = Tensor::zeros(m.global_head.pooler_weight.shape());
  for (double& v : m.global_head.pooler_bias.data()) v = 50.0;  // tanh saturates to 1
  m.global_head.label_embedding = Tensor::filled(m.global_head.label_embedding.shape(), 20.0);
  m.local_head.mlp_w2 = Tensor::zeros(m.local_head.mlp_w2.shape());
  m.local_head.mlp_b2[0] = 100.0;
  Rng rng(13);
  Example ex = test::random_example(rng, kVocab, 2, kLen, 5);
  ex.labels = {0, 1};
  const std::vector<const Example*> batch = {&ex};
  EXPECT_LE(loss(m, batch).total, 1e-15);
}

TEST(Loss, DecomposesIntoHeadTerms) {
  const GlocalModel m = small_model(14);
  const Corpus c = random_corpus(15, 7, kVocab, kLabels, kLen);
  const auto batch = pointers(c);
  const LossBreakdown l = loss(m, batch);
  EXPECT_NEAR(l.total, l.global + l.local, 1e-12);
  const auto g = loss_and_gradients(m, batch, LossTerms::global_only);
  const auto lo = loss_and_gradients(m, batch, LossTerms::local_only);
  EXPECT_NEAR(g.loss.global, l.global, 1e-12);
  EXPECT_NEAR(lo.loss.local, l.local, 1e-12);
  // The per-term gradients add up to the gradient of the total.
  const auto both = loss_and_gradients(m, batch);
  for (std::size_t i = 0; i < both.grads.size(); ++i)
    for (std::size_t j = 0; j < both.grads[i].size(); ++j)
      EXPECT_NEAR(both.grads[i][j], g.grads[i][j] + lo.grads[i][j], 1e-12);

  // Independent per-document BCE from the predicted probabilities.
  const PredictionBatch p = forward(m, batch);
  double expect = 0.0;
  for (std::size_t d = 0; d < c.size(); ++d) {
    const Tensor y = label_targets(c.examples[d].labels, kLabels);
    for (const Tensor* probs : {&p.p_global, &p.p_local}) {
      for (std::size_t l2 = 0; l2 < kLabels; ++l2) {
        const double q = probs->at(d, l2);
        expect -= (y[l2] * std::log(q) + (1 - y[l2]) * std::log(1 - q)) / kLabels;
      }
    }
  }
  EXPECT_NEAR(l.total, expect / static_cast<double>(c.size()), 1e-12);
}

TEST(Loss, GlobalEmbeddingGradientComesOnlyFromGlobalTerm) {
  GlocalModel m = small_model(16);
  const Corpus c = random_corpus(17, 6, kVocab, kLabels, kLen);
  const auto batch = pointers(c);
  const auto both = loss_and_gradients(m, batch, LossTerms::both);
  const auto global = loss_and_gradients(m, batch, LossTerms::global_only);
  const auto local = loss_and_gradients(m, batch, LossTerms::local_only);
  for (const ParamRef& p : m.parameters()) {
    if (p.group == ParamGroup::global_classifier) {
      EXPECT_LE(max_abs_diff(both.grads[p.index], global.grads[p.index]), 1e-12);
      for (double v : local.grads[p.index].data()) EXPECT_EQ(v, 0.0);
    }
    if (p.group == ParamGroup::local_attention || p.group == ParamGroup::local_mlp) {
      for (double v : global.grads[p.index].data()) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Loss, SerialAndParallelGradientsIdentical) {
  const GlocalModel m = small_model(18);
  const Corpus c = random_corpus(19, 11, kVocab, kLabels, kLen);
  const auto a = loss_and_gradients(m, pointers(c), LossTerms::both, Execution::serial, 5);
  const auto b = loss_and_gradients(m, pointers(c), LossTerms::both, Execution::parallel, 5);
  EXPECT_EQ(a.loss.total, b.loss.total);
  ASSERT_EQ(a.grads.size(), b.grads.size());
  for (std::size_t i = 0; i < a.grads.size(); ++i) EXPECT_EQ(a.grads[i], b.grads[i]);
}

TEST(Loss, GradcheckEveryGroup) {
  ModelConfig cfg = small_config(kVocab, 5, 1, 8, 7);
  cfg.heads.pooler = true;
  GlocalModel m = GlocalModel::init(cfg, 20);
  const Corpus c = random_corpus(21, 2, kVocab, 5, 7);
  const auto reports = check_model_gradients(m, pointers(c), {.eps = 1e-5, .tol = 1e-4});
  ASSERT_EQ(reports.size(), kNumParamGroups);
  for (const auto& r : reports) EXPECT_TRUE(r.report.passed) << group_name(r.group) << " " << r.report.max_rel_error;
}

// --- ranking -----------------------------------------------------------------

TEST(RankLabels, Examples) {
  EXPECT_EQ(rank_labels(Tensor::matrix({{0.1, 0.9, 0.5}}), 2), (std::vector<std::vector<int>>{{1, 2}}));
  EXPECT_EQ(rank_labels(Tensor::matrix({{0.3, 0.3, 0.3, 0.3}}), 3), (std::vector<std::vector<int>>{{0, 1, 2}}));
  const Tensor local = Tensor::matrix({{1.0, 0.0}}), global = Tensor::matrix({{0.0, 1.0}});
  Tensor final_p = Tensor::zeros({1, 2});
  for (std::size_t i = 0; i < 2; ++i) final_p[i] = (local[i] + global[i]) / 2.0;
  EXPECT_EQ(rank_labels(final_p, 2), (std::vector<std::vector<int>>{{0, 1}}));
  EXPECT_THROW(rank_labels(local, 0), ValidationError);
  EXPECT_THROW(rank_labels(local, 3), ValidationError);
}

TEST(RankLabels, InvariantToMonotoneTransform) {
  Rng rng(22);
  Tensor s = Tensor::zeros({20, 9});
  for (double& v : s.data()) v = std::round(rng.uniform() * 10) / 10;  // many ties
  Tensor t = s;
  for (double& v : t.data()) v = 2.0 * v - 1.0;
  EXPECT_EQ(rank_labels(s, 9), rank_labels(t, 9));
  EXPECT_EQ(rank_labels(s, 4), rank_labels(s, 4));
}

TEST(PredictTopk, MatchesForwardAndChecksK) {
  const GlocalModel m = small_model(23);
  const Corpus c = random_corpus(24, 5, kVocab, kLabels, kLen);
  const auto batch = pointers(c);
  const PredictionBatch p = forward(m, batch);
  for (Source s : kAllSources) EXPECT_EQ(predict_topk(m, batch, 3, s), rank_labels(p.probs(s), 3));
  EXPECT_THROW(predict_topk(m, batch, 0, Source::final), ValidationError);
  EXPECT_THROW(predict_topk(m, batch, kLabels + 1, Source::final), ValidationError);
}

// --- parameter groups --------------------------------------------------------

TEST(ParamGroups, FiveDistinctRates) {
  ModelConfig cfg = small_config(kVocab, kLabels, 2);
  cfg.heads.pooler = true;
  GlocalModel m = GlocalModel::init(cfg, 25);
  const LrConfig lr{1e-5, 1e-4, 1e-3, 2e-4, 2e-3};
  const ParamGroups g = param_groups(m, lr);
  EXPECT_EQ(g[ParamGroup::backbone].lr, 1e-5);
  EXPECT_EQ(g[ParamGroup::global_pooler].lr, 1e-4);
  EXPECT_EQ(g[ParamGroup::global_classifier].lr, 1e-3);
  EXPECT_EQ(g[ParamGroup::local_attention].lr, 2e-4);
  EXPECT_EQ(g[ParamGroup::local_mlp].lr, 2e-3);
}

TEST(ParamGroups, UniformRate) {
  GlocalModel m = small_model();
  const ParamGroups g = param_groups(m, LrConfig::uniform(0.01));
  for (const auto& e : g.groups) EXPECT_EQ(e.lr, 0.01);
}

TEST(ParamGroups, PartitionAllParameters) {
  ModelConfig cfg = small_config(kVocab, kLabels, 2);
  cfg.heads.pooler = true;
  GlocalModel m = GlocalModel::init(cfg, 26);
  const ParamGroups g = param_groups(m, LrConfig::uniform(1.0));
  EXPECT_EQ(g.parameter_count(), m.parameter_count());
  std::set<const Tensor*> seen;
  std::size_t refs = 0;
  for (const auto& e : g.groups) {
    EXPECT_FALSE(e.params.empty()) << group_name(e.group);
    for (const ParamRef& p : e.params) {
      EXPECT_EQ(p.group, e.group);
      seen.insert(p.tensor);
      ++refs;
    }
  }
  EXPECT_EQ(seen.size(), refs);
  EXPECT_EQ(refs, m.parameters().size());
  std::size_t total = 0;
  for (const auto& p : m.parameters()) total += p.tensor->size();
  EXPECT_EQ(total, m.parameter_count());
}

TEST(ParamGroups, MissingRateIsConfigError) {
  GlocalModel m = small_model();
  LrConfig lr = LrConfig::uniform(0.1);
  lr.attention.reset();
  EXPECT_THROW(param_groups(m, lr), ConfigError);
}

TEST(Sources, NamesRoundTrip) {
  for (Source s : kAllSources) EXPECT_EQ(parse_source(source_name(s)), s);
  EXPECT_THROW(parse_source("both"), ValidationError);
}

}  // namespace
}  // namespace glocal
