#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "glocal/autodiff.hpp"
#include "glocal/errors.hpp"
#include "glocal/gradcheck.hpp"
#include "glocal/rng.hpp"
#include "glocal/tensor.hpp"
#include "test_util.hpp"

namespace glocal {
namespace {

using test::random_tensor;

// --- Rng ---------------------------------------------------------------------

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SplitmixReferenceValues) {
  // Published splitmix64 outputs for seed 1234567.
  std::uint64_t x = 1234567;
  EXPECT_EQ(splitmix64(x), 6457827717110365317ull);
  EXPECT_EQ(splitmix64(x), 3203168211198807973ull);
  EXPECT_EQ(splitmix64(x), 9817491932198370423ull);
}

TEST(Rng, UniformRangeAndMean) {
  Rng rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_GT(c, 800);
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(1.0, 2.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 1.0, 0.02);
  EXPECT_NEAR(s2 / n - mean * mean, 4.0, 0.05);
}

TEST(Rng, DeriveSeedSeparatesTagsAndIndices) {
  std::set<std::uint64_t> seen;
  for (const char* tag : {"init", "shuffle", "dropout"})
    for (std::uint64_t i = 0; i < 10; ++i) seen.insert(derive_seed(1, tag, i));
  EXPECT_EQ(seen.size(), 30u);
  EXPECT_EQ(derive_seed(5, "x", 2), derive_seed(5, "x", 2));
  EXPECT_NE(derive_seed(5, "x", 2), derive_seed(6, "x", 2));
}

// --- Tensor -------------------------------------------------------------------

TEST(Tensor, ShapeMatchesData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(shape_string(t.shape()), "[2x3x4]");
  EXPECT_THROW((void)t.rows(), DimensionError);
  EXPECT_EQ(Tensor::scalar(2.0).size(), 1u);
}

TEST(Tensor, ReshapeKeepsData) {
  const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.values(), t.values());
  EXPECT_EQ(r.at(2, 1), 6.0);
  EXPECT_THROW((void)t.reshaped({4, 2}), DimensionError);
  EXPECT_EQ(t.row(1).values(), (std::vector<double>{4, 5, 6}));
}

// --- matmul ------------------------------------------------------------------

TEST(Matmul, IdentityLeavesMatrix) {
  Tape tape;
  Var i = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(matmul(i, m).value(), Tensor::matrix({{1, 2}, {3, 4}}));
}

TEST(Matmul, RowTimesColumnIsDot) {
  Tape tape;
  Var out = matmul(tape.constant(Tensor::matrix({{1, 2}})), tape.constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_EQ(out.value()[0], 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, MatchesScalarLoops) {
  Rng rng(5);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape;
  const Tensor c = matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-14);
    }
  }
}

TEST(Matmul, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  std::vector<Tensor> params = {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
  const Tensor w = random_tensor({3, 2}, rng);
  auto f = [&](Tape& t, std::span<const Var> p) { return sum(mul(matmul(p[0], p[1]), t.constant(w))); };
  const auto r = check_gradients(f, params, {.eps = 1e-5, .tol = 1e-7});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  EXPECT_EQ(r.entries_checked, 20u);
}

TEST(Matmul, TransposedVariantsGradcheck) {
  Rng rng(8);
  std::vector<Tensor> params = {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)};
  auto f = [&](Tape&, std::span<const Var> p) { return sum(tanh(matmul_nt(p[0], p[1]))); };
  EXPECT_TRUE(check_gradients(f, params, {.tol = 1e-7}).passed);
}

// --- softmax -----------------------------------------------------------------

TEST(Softmax, EqualScoresAreUniform) {
  for (double tau : {0.1, 1.0, 7.0}) {
    Tape tape;
    Var s = softmax_rows(tape.constant(Tensor::filled({1, 5}, 3.0)), Mask(5, 1), tau);
    for (double v : s.value().data()) EXPECT_DOUBLE_EQ(v, 0.2);
  }
}

TEST(Softmax, ClosedFormTwoColumns) {
  Tape tape;
  Var s = softmax_rows(tape.constant(Tensor::matrix({{0.0, std::log(3.0)}})), Mask(2, 1), 1.0);
  EXPECT_NEAR(s.value()[0], 0.25, 1e-15);
  EXPECT_NEAR(s.value()[1], 0.75, 1e-15);
}

TEST(Softmax, LowTemperatureConcentrates) {
  Tape tape;
  Var s = softmax_rows(tape.constant(Tensor::matrix({{1.0, 2.0, 3.0}})), Mask(3, 1), 0.01);
  // exp(-100) + exp(-200) bounds the leaked mass.
  EXPECT_GE(s.value()[2], 1.0 - 1e-10);
}

TEST(Softmax, MaskedColumnsExactlyZeroAndRowsNormalised) {
  Rng rng(9);
  Tape tape;
  const Mask mask = {1, 0, 1, 1, 0};
  Var s = softmax_rows(tape.constant(random_tensor({4, 5}, rng, 3.0)), mask, 0.7);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      if (!mask[c]) {
        EXPECT_EQ(s.value().at(r, c), 0.0);
      }
      total += s.value().at(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, LargeScoresStayFinite) {
  Tape tape;
  Var s = softmax_rows(tape.constant(Tensor::matrix({{1000.0, 999.0, -1000.0}})), Mask(3, 1), 1.0);
  EXPECT_TRUE(s.value().all_finite());
  EXPECT_NEAR(s.value()[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Softmax, Errors) {
  Tape tape;
  Var x = tape.constant(Tensor::zeros({1, 3}));
  EXPECT_THROW(softmax_rows(x, Mask(3, 1), 0.0), DomainError);
  EXPECT_THROW(softmax_rows(x, Mask(3, 1), -1.0), DomainError);
  EXPECT_THROW(softmax_rows(x, Mask(3, 0), 1.0), DegenerateInputError);
}

TEST(Softmax, GradcheckWithMaskAndTemperature) {
  Rng rng(10);
  std::vector<Tensor> params = {random_tensor({3, 4}, rng)};
  const Tensor w = random_tensor({3, 4}, rng);
  auto f = [&](Tape& t, std::span<const Var> p) {
    return sum(mul(softmax_rows(p[0], Mask{1, 1, 0, 1}, 0.6), t.constant(w)));
  };
  const auto r = check_gradients(f, params, {.tol = 1e-7});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

// --- bce / sigmoid -----------------------------------------------------------

TEST(Bce, ZeroLogitsGiveLn2) {
  Tape tape;
  for (const auto& y : {std::vector<double>{0, 1, 1}, std::vector<double>{0, 0, 0}}) {
    Var l = bce_with_logits(tape.constant(Tensor::zeros({3})), Tensor::vector(y));
    EXPECT_NEAR(l.value()[0], std::numbers::ln2, 1e-15);
  }
}

TEST(Bce, SaturatedCorrectPredictionIsTiny) {
  Tape tape;
  Var l = bce_with_logits(tape.constant(Tensor::vector({50.0})), Tensor::vector({1.0}));
  EXPECT_TRUE(std::isfinite(l.value()[0]));
  EXPECT_LE(l.value()[0], 1e-20);
  Var big = bce_with_logits(tape.constant(Tensor::vector({-800.0, 800.0})), Tensor::vector({1.0, 0.0}));
  EXPECT_NEAR(big.value()[0], 800.0, 1e-9);
}

TEST(Bce, MatchesNaiveFormula) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = random_tensor({7}, rng, 3.0);
    Tensor y = Tensor::zeros({7});
    for (double& v : y.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    double naive = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-z[i]));
      naive -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    naive /= 7.0;
    Tape tape;
    EXPECT_NEAR(bce_with_logits(tape.constant(z), y).value()[0], naive, 1e-12);
  }
}

TEST(Bce, GradientIsSigmoidMinusTarget) {
  const Tensor z = Tensor::vector({-1.0, 0.5, 2.0});
  const Tensor y = Tensor::vector({1.0, 0.0, 1.0});
  Tape tape;
  Var zv = tape.variable(z);
  tape.backward(bce_with_logits(zv, y));
  const Tensor g = tape.gradient(zv);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], (1.0 / (1.0 + std::exp(-z[i])) - y[i]) / 3.0, 1e-15);
}

TEST(Bce, Errors) {
  Tape tape;
  EXPECT_THROW(bce_with_logits(tape.constant(Tensor::zeros({3})), Tensor::zeros({2})), DimensionError);
  EXPECT_THROW(bce_with_logits(tape.constant(Tensor::zeros({1})), Tensor::vector({0.5})), DomainError);
}

TEST(Sigmoid, MatchesOracle) {
  EXPECT_EQ(sigmoid_scalar(0.0), 0.5);
  EXPECT_EQ(sigmoid_scalar(1e4), 1.0);
  EXPECT_EQ(sigmoid_scalar(-1e4), 0.0);
  Rng rng(13);
  const Tensor z = random_tensor({50}, rng, 4.0);
  Tape tape;
  const Tensor s = sigmoid(tape.constant(z)).value();
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(s[i], 1.0 / (1.0 + std::exp(-z[i])), 1e-15);
  EXPECT_NEAR(softplus_scalar(0.0), std::numbers::ln2, 1e-16);
  EXPECT_NEAR(softplus_scalar(-40.0), std::exp(-40.0), 1e-30);
}

// --- layer norm, activations -------------------------------------------------

TEST(LayerNorm, ConstantRowGivesBias) {
  Tape tape;
  Var out = layer_norm(tape.constant(Tensor::matrix({{4, 4, 4}})), tape.constant(Tensor::vector({2, 3, 4})),
                       tape.constant(Tensor::vector({0.1, 0.2, 0.3})));
  EXPECT_EQ(out.value().values(), (std::vector<double>{0.1, 0.2, 0.3}));
}

TEST(LayerNorm, TwoEntryClosedForm) {
  Tape tape;
  Var out = layer_norm(tape.constant(Tensor::matrix({{1, 3}})), tape.constant(Tensor::vector({1, 1})),
                       tape.constant(Tensor::vector({0, 0})));
  // mean 2, variance 1.
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(out.value()[0], -s, 1e-15);
  EXPECT_NEAR(out.value()[1], s, 1e-15);
}

TEST(LayerNorm, Gradcheck) {
  Rng rng(14);
  std::vector<Tensor> params = {random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)};
  const Tensor w = random_tensor({3, 5}, rng);
  auto f = [&](Tape& t, std::span<const Var> p) { return sum(mul(layer_norm(p[0], p[1], p[2]), t.constant(w))); };
  const auto r = check_gradients(f, params, {.tol = 1e-6});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Activations, Gradcheck) {
  Rng rng(15);
  std::vector<Tensor> params = {random_tensor({2, 6}, rng)};
  for (double& v : params[0].data())
    if (std::abs(v) < 1e-3) v = 0.5;  // keep relu away from its kink
  const Tensor w = random_tensor({2, 6}, rng);
  auto f = [&](Tape& t, std::span<const Var> p) {
    Var c = t.constant(w);
    return add(add(sum(mul(gelu(p[0]), c)), sum(mul(relu(p[0]), c))), add(sum(mul(tanh(p[0]), c)),
                                                                           sum(mul(sigmoid(p[0]), c))));
  };
  EXPECT_TRUE(check_gradients(f, params, {.tol = 1e-6}).passed);
}

TEST(Activations, GeluValues) {
  Tape tape;
  const Tensor g = gelu(tape.constant(Tensor::vector({0.0, 1.0, -1.0}))).value();
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], 0.8413447460685429, 1e-15);
  EXPECT_NEAR(g[2], -0.15865525393145707, 1e-15);
}

TEST(Structural, SliceConcatRowEmbeddingGradcheck) {
  Rng rng(16);
  std::vector<Tensor> params = {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng), random_tensor({4}, rng)};
  const std::vector<int> ids = {4, 0, 4, 2};
  auto f = [&](Tape&, std::span<const Var> p) {
    Var e = embedding(p[1], ids);
    Var parts[] = {slice_cols(p[0], 2, 2), slice_cols(p[0], 0, 2)};
    Var c = concat_cols(parts);
    Var r = row(add_bias(c, p[2]), 1);
    return add(sum(mul(r, r)), sum(mul(e, scale(e, 0.5))));
  };
  const auto r = check_gradients(f, params, {.tol = 1e-7});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Structural, EmbeddingRangeError) {
  Tape tape;
  Var table = tape.constant(Tensor::zeros({3, 2}));
  const std::vector<int> bad = {3};
  EXPECT_THROW(embedding(table, bad), RangeError);
}

// --- tape --------------------------------------------------------------------

TEST(Tape, TopologicalOrderAndSingleVisit) {
  Tape tape;
  Var a = tape.variable(Tensor::vector({1.0, 2.0}));
  Var b = tape.variable(Tensor::vector({3.0, 4.0}));
  Var c = mul(a, b);
  Var d = add(c, a);  // a is used twice
  Var e = sum(mul(d, d));
  for (std::size_t id = 0; id < tape.size(); ++id)
    for (std::size_t in : tape.inputs(id)) EXPECT_LT(in, id);
  tape.backward(e);
  EXPECT_EQ(tape.backward_visits(), 4u);  // c, d, mul(d,d), e
  // e = sum((ab + a)^2): de/da = 2(ab + a)(b + 1)
  const Tensor ga = tape.gradient(a);
  EXPECT_DOUBLE_EQ(ga[0], 2 * (3 + 1) * 4);
  EXPECT_DOUBLE_EQ(ga[1], 2 * (8 + 2) * 5);
}

TEST(Tape, ConstantsCarryNoGradient) {
  Tape tape;
  Var a = tape.constant(Tensor::vector({1.0}));
  Var b = tape.variable(Tensor::vector({2.0}));
  Var p = mul(a, b);
  EXPECT_TRUE(tape.requires_grad(p));
  EXPECT_FALSE(tape.requires_grad(a));
  Var q = mul(a, a);
  EXPECT_FALSE(tape.requires_grad(q));
  tape.backward(sum(p));
  EXPECT_EQ(tape.gradient(a)[0], 0.0);
  EXPECT_EQ(tape.gradient(b)[0], 1.0);
}

// --- check_gradients ---------------------------------------------------------

TEST(GradCheck, QuadraticIsExact) {
  Rng rng(17);
  std::vector<Tensor> params = {random_tensor({4, 3}, rng)};
  auto f = [](Tape&, std::span<const Var> p) { return sum(mul(p[0], p[0])); };
  const auto r = check_gradients(f, params);
  EXPECT_LE(r.max_rel_error, 1e-9);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  std::vector<Tensor> params = {Tensor::vector({1.0, 2.0})};
  auto f = [](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(3.0)); };
  const auto r = check_gradients(f, params);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.worst_analytic, 0.0);
  EXPECT_EQ(r.worst_numeric, 0.0);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheck, DetectsWrongGradient) {
  std::vector<Tensor> params = {Tensor::vector({1.0, -2.0})};
  // Forward is x^2 but the recorded backward claims 3x.
  auto f = [](Tape& t, std::span<const Var> p) {
    Tensor v = Tensor::scalar(0.0);
    for (double x : p[0].value().data()) v[0] += x * x;
    const std::size_t in = p[0].id();
    return t.record(std::move(v), {p[0]}, [in](Tape& tape, std::size_t self) {
      const double g = tape.grad(self)[0];
      auto gi = tape.grad_buffer(in);
      const Tensor& x = tape.value(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g * 3.0 * x[i];
    });
  };
  EXPECT_FALSE(check_gradients(f, params).passed);
}

TEST(GradCheck, ParamsRestored) {
  Rng rng(18);
  std::vector<Tensor> params = {random_tensor({3}, rng)};
  const Tensor before = params[0];
  auto f = [](Tape&, std::span<const Var> p) { return sum(tanh(p[0])); };
  check_gradients(f, params);
  EXPECT_EQ(params[0], before);
}

TEST(GradCheck, Errors) {
  std::vector<Tensor> params = {Tensor::vector({1.0})};
  auto f = [](Tape&, std::span<const Var> p) { return sum(p[0]); };
  EXPECT_THROW(check_gradients(f, params, {.eps = 1e-3}), DomainError);
  EXPECT_THROW(check_gradients(f, params, {.eps = 1e-8}), DomainError);
  std::vector<Tensor> zero = {Tensor::vector({0.0})};
  auto log_f = [](Tape& t, std::span<const Var> p) {
    const double v = std::log(p[0].value()[0]);
    return t.constant(Tensor::scalar(v));
  };
  EXPECT_THROW(check_gradients(log_f, zero), NumericError);
}

}  // namespace
}  // namespace glocal
