#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mixtea/adam.hpp"
#include "mixtea/ops.hpp"
#include "mixtea/tape.hpp"
#include "support.hpp"

using namespace mixtea;
namespace ts = testing_support;

namespace {

constexpr double kGradTol = 1e-4;

void expect_near_tensor(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_TRUE(a.same_shape(b)) << a.shape_string() << " vs " << b.shape_string();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], tol) << i;
}

Segments ragged_segments() { return Segments::from_lists({{0, 2}, {1}, {}, {3, 0, 1}}); }

}  // namespace

TEST(TensorBasics, ConstructionAndShape) {
  const Tensor t{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.transposed()(2, 1), 6.0);
  EXPECT_EQ(t.sum(), 21.0);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW((Tensor{{1, 2}, {3}}), ShapeError);
}

TEST(TensorBasics, RequireFinite) {
  Tensor t(1, 2);
  EXPECT_NO_THROW(require_finite(t, "t"));
  t(0, 1) = std::nan("");
  EXPECT_THROW(require_finite(t, "t"), NumericError);
}

TEST(Matmul, IdentityAndSmallProduct) {
  const Tensor a{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Tensor{{1, 0}, {0, 1}}, a), a);
  EXPECT_EQ(matmul(Tensor{{1, 2}}, Tensor{{3}, {4}}), Tensor{{11}});
  EXPECT_THROW(matmul(a, Tensor(3, 1)), ShapeError);
}

TEST(Matmul, GradientOfSumIsRowSumsOfB) {
  const Tensor a = ts::random_tensor(3, 4, 1);
  const Tensor b = ts::random_tensor(4, 2, 2);
  Tape tape;
  const Var va = tape.parameter(a);
  const Var vb = tape.constant(b);
  tape.backward(ops::sum(ops::matmul(va, vb)));
  const Tensor g = tape.grad(va);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g(i, k), b(k, 0) + b(k, 1), 1e-15);
  }
  const auto check = ts::check_gradients(
      [](Tape&, std::span<const Var> v) { return ops::sum(ops::matmul(v[0], v[1])); }, {a, b});
  EXPECT_LT(check.max_rel_error, kGradTol);
}

TEST(RowSoftmax, ClosedForms) {
  expect_near_tensor(row_softmax(Tensor{{0, 0, 0}}, 1.0), Tensor{{1.0 / 3, 1.0 / 3, 1.0 / 3}}, 1e-15);
  expect_near_tensor(row_softmax(Tensor{{std::log(2.0), 0}}, 1.0), Tensor{{2.0 / 3, 1.0 / 3}}, 1e-15);
  EXPECT_THROW(row_softmax(Tensor{{1, 2}}, 0.0), std::invalid_argument);
  EXPECT_THROW(row_softmax(Tensor{{1, 2}}, -1.0), std::invalid_argument);
}

TEST(RowSoftmax, RowsSumToOneAndShiftInvariant) {
  Tensor x = ts::random_tensor(5, 7, 3, -3, 3);
  for (double temp : {0.05, 1.0, 4.0}) {
    const Tensor p = row_softmax(x, temp);
    Tensor shifted = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double rs = 0;
      for (auto v : p.row(r)) {
        EXPECT_GT(v, 0.0);
        rs += v;
      }
      EXPECT_NEAR(rs, 1.0, 1e-12);
      for (auto& v : shifted.row(r)) v += 100.0 * static_cast<double>(r + 1);
    }
    expect_near_tensor(row_softmax(shifted, temp), p, 1e-12);
  }
}

TEST(Elu, ValuesAndGradientAtMinusOne) {
  Tape tape;
  const Var x = tape.parameter(Tensor{{0, 1, -1}});
  const Var y = ops::elu(x);
  EXPECT_EQ(y.value()(0, 0), 0.0);
  EXPECT_EQ(y.value()(0, 1), 1.0);
  EXPECT_NEAR(y.value()(0, 2), std::exp(-1.0) - 1.0, 1e-15);
  tape.backward(ops::sum(y));
  EXPECT_NEAR(tape.grad(x)(0, 2), std::exp(-1.0), 1e-15);
  const auto check = ts::check_gradients(
      [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::elu(v[0])); },
      {Tensor{{-1.0, 0.5}, {-2.0, 3.0}}});
  EXPECT_LT(check.max_rel_error, kGradTol);
}

TEST(ConcatColumns, ValuesAndPassThrough) {
  Tape tape;
  const Var a = tape.parameter(Tensor{{1}, {2}});
  const Var b = tape.parameter(Tensor{{3}, {4}});
  const std::vector<Var> one{a};
  EXPECT_EQ(ops::concat_columns(one).value(), a.value());
  const std::vector<Var> two{a, b};
  EXPECT_EQ(ops::concat_columns(two).value(), (Tensor{{1, 3}, {2, 4}}));
  const std::vector<Var> bad{a, tape.constant(Tensor(3, 1))};
  EXPECT_THROW(ops::concat_columns(bad), ShapeError);
  const auto check = ts::check_gradients(
      [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::concat_columns(v)); },
      {ts::random_tensor(3, 2, 4), ts::random_tensor(3, 1, 5), ts::random_tensor(3, 3, 6)});
  EXPECT_LT(check.max_rel_error, kGradTol);
}

TEST(SegmentMean, Examples) {
  Tape tape;
  const auto one = Segments::from_lists({{0}});
  EXPECT_EQ(ops::segment_mean(tape.constant(Tensor{{2, 4}}), one).value(), (Tensor{{2, 4}}));
  const auto pair = Segments::from_lists({{0, 1}});
  EXPECT_EQ(ops::segment_mean(tape.constant(Tensor{{1, 1}, {3, 3}}), pair).value(),
            (Tensor{{2, 2}}));
  const auto empty = Segments::from_lists({{}});
  EXPECT_EQ(ops::segment_mean(tape.constant(Tensor{{1, 1}}), empty).value(), (Tensor{{0, 0}}));
  const auto segs = ragged_segments();
  const auto check = ts::check_gradients(
      [&](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::segment_mean(v[0], segs)); },
      {ts::random_tensor(4, 3, 7)});
  EXPECT_LT(check.max_rel_error, kGradTol);
}

TEST(RowL2Distance, Examples) {
  Tape tape;
  const Var a = tape.parameter(Tensor{{0, 0}, {1, 2}});
  const Var b = tape.parameter(Tensor{{3, 4}, {1, 2}});
  const Var d = ops::row_l2_distance(a, b);
  EXPECT_EQ(d.value(), (Tensor{{5}, {0}}));
  tape.backward(ops::sum(d));
  // coincident rows: zero subgradient, no NaN
  EXPECT_EQ(tape.grad(a)(1, 0), 0.0);
  EXPECT_EQ(tape.grad(a)(1, 1), 0.0);
  EXPECT_NEAR(tape.grad(a)(0, 0), -0.6, 1e-15);
  EXPECT_THROW(ops::row_l2_distance(a, tape.constant(Tensor(2, 3))), ShapeError);
  const auto check = ts::check_gradients(
      [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::row_l2_distance(v[0], v[1])); },
      {Tensor{{0, 0}, {1, -1}}, Tensor{{3, 4}, {2, 0.5}}});
  EXPECT_LT(check.max_rel_error, kGradTol);
}

TEST(CosineSimMatrix, Examples) {
  Tape tape;
  const Var e = tape.constant(Tensor{{1, 0}, {0, 1}});
  EXPECT_EQ(ops::cosine_sim_matrix(e, e).value(), (Tensor{{1, 0}, {0, 1}}));
  const Tensor a = ts::random_tensor(2, 3, 8);
  const Tensor b = ts::random_tensor(2, 3, 9);
  const Tensor m = ops::cosine_sim_matrix(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        dot += a(i, k) * b(j, k);
        na += a(i, k) * a(i, k);
        nb += b(j, k) * b(j, k);
      }
      EXPECT_NEAR(m(i, j), dot / std::sqrt(na * nb), 1e-14);
    }
  }
  const auto check = ts::check_gradients(
      [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::cosine_sim_matrix(v[0], v[1])); },
      {ts::random_tensor(3, 4, 10), ts::random_tensor(5, 4, 11)});
  EXPECT_LT(check.max_rel_error, kGradTol);
}

TEST(Backward, SumAndHalfSquare) {
  Tape tape;
  const Tensor p0 = ts::random_tensor(2, 3, 12);
  const Var p = tape.parameter(p0);
  tape.backward(ops::sum(p));
  EXPECT_EQ(tape.grad(p), Tensor(2, 3, 1.0));

  // sum(q o q) / 2 with the square recorded as a custom node.
  Tape tape2;
  const Var q = tape2.parameter(p0);
  const Tensor sq_value = [&] {
    Tensor out = p0;
    for (auto& v : out.data()) v *= v;
    return out;
  }();
  const Var sq = tape2.record(
      sq_value, {q},
      [q](Tape& t, const Tensor&, const Tensor& grad) {
        auto buf = t.grad_buffer(q).data();
        const auto x = t.value(q).data();
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += 2.0 * x[i] * grad.data()[i];
      },
      "square");
  tape2.backward(ops::scale(ops::sum(sq), 0.5));
  expect_near_tensor(tape2.grad(q), p0, 1e-15);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  const Var p = tape.parameter(Tensor(2, 2, 1.0));
  EXPECT_THROW(tape.backward(p), ShapeError);
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Tape tape;
  const Var c = tape.constant(Tensor{{1, 2}});
  const Var p = tape.parameter(Tensor{{3, 4}});
  const Var loss = ops::sum(ops::add(c, p));
  EXPECT_FALSE(tape.requires_grad(c));
  EXPECT_TRUE(tape.requires_grad(loss));
  tape.backward(loss);
  EXPECT_EQ(tape.grad(c), Tensor(1, 2));
  EXPECT_EQ(tape.grad(p), Tensor(1, 2, 1.0));
}

TEST(Backward, RepeatedBackwardDoesNotAccumulate) {
  Tape tape;
  const Var p = tape.parameter(Tensor{{1, 2}});
  const Var loss = ops::sum(ops::add(p, p));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_EQ(tape.grad(p), Tensor(1, 2, 2.0));
}

// Every remaining differentiable op against central differences.
TEST(GradientCheck, ElementwiseAndShapeOps) {
  const Tensor a = ts::random_tensor(3, 4, 20, -2, 2, 0.05);
  const Tensor b = ts::random_tensor(3, 4, 21, -2, 2, 0.05);
  struct Case {
    const char* name;
    ts::LossBuilder build;
    std::vector<Tensor> inputs;
  };
  const std::vector<Case> cases{
      {"add", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::add(v[0], v[1])); }, {a, b}},
      {"sub", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::sub(v[0], v[1])); }, {a, b}},
      {"scale", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::scale(v[0], -1.7)); }, {a}},
      {"add_scalar", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::add_scalar(v[0], 0.3)); }, {a}},
      {"sum", [](Tape&, std::span<const Var> v) { return ops::scale(ops::sum(v[0]), 2.5); }, {a}},
      {"relu", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::relu(v[0])); }, {a}},
      {"leaky_relu", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::leaky_relu(v[0], 0.2)); }, {a}},
      {"gather_rows", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::gather_rows(v[0], {2, 0, 2, 1})); }, {a}},
      {"row_softmax", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::row_softmax(v[0], 0.7)); }, {a}},
      {"scale_by_entry", [](Tape&, std::span<const Var> v) { return ts::weighted_total(ops::scale_by_entry(v[0], v[1], 2)); }, {a, ts::random_tensor(1, 3, 22)}},
      {"softmax_cross_entropy", [](Tape&, std::span<const Var> v) {
         return ops::softmax_cross_entropy(v[0], row_softmax(ts::random_tensor(3, 4, 23), 1.0), 0.5);
       }, {a}},
  };
  for (const auto& c : cases) {
    const auto check = ts::check_gradients(c.build, c.inputs);
    EXPECT_LT(check.max_rel_error, kGradTol) << c.name;
    EXPECT_GT(check.checked, 0u) << c.name;
  }
}

TEST(GradientCheck, GraphOps) {
  const auto segs = ragged_segments();
  const auto adjacency = Segments::from_lists({{0, 1}, {0, 1, 2}, {2}, {1, 3}});
  const Tensor z = ts::random_tensor(4, 3, 30);
  const Tensor attn = ts::random_tensor(6, 1, 31);
  const auto pair = ts::check_gradients(
      [&](Tape&, std::span<const Var> v) {
        return ts::weighted_total(ops::pair_attention_logits(v[0], v[1], adjacency));
      },
      {z, attn});
  EXPECT_LT(pair.max_rel_error, kGradTol);

  const Tensor scores = ts::random_tensor(adjacency.indices.size(), 1, 32, -2, 2);
  const auto soft = ts::check_gradients(
      [&](Tape&, std::span<const Var> v) {
        return ts::weighted_total(ops::segment_softmax(v[0], adjacency));
      },
      {scores});
  EXPECT_LT(soft.max_rel_error, kGradTol);

  const Tensor weights = ts::random_tensor(segs.indices.size(), 1, 33);
  const auto wsum = ts::check_gradients(
      [&](Tape&, std::span<const Var> v) {
        return ts::weighted_total(ops::segment_weighted_sum(v[0], v[1], segs));
      },
      {weights, z});
  EXPECT_LT(wsum.max_rel_error, kGradTol);
}

TEST(SegmentSoftmax, SumsToOnePerSegment) {
  Tape tape;
  const auto adjacency = Segments::from_lists({{0, 1}, {0, 1, 2}, {2}});
  const Var s = tape.constant(ts::random_tensor(6, 1, 34, -5, 5));
  const Tensor w = ops::segment_softmax(s, adjacency).value();
  for (std::size_t i = 0; i < adjacency.count(); ++i) {
    double total = 0;
    for (auto e = adjacency.begin(i); e < adjacency.end(i); ++e) total += w(e, 0);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Determinism, OpsAreBitIdentical) {
  auto run = [] {
    Tape tape;
    const Var a = tape.parameter(ts::random_tensor(4, 5, 40));
    const Var b = tape.parameter(ts::random_tensor(6, 5, 41));
    const Var loss = ops::sum(ops::row_softmax(ops::cosine_sim_matrix(a, b), 0.3));
    tape.backward(loss);
    return std::pair(tape.grad(a), tape.grad(b));
  };
  EXPECT_EQ(run(), run());
}

TEST(Xavier, RangeSeedAndMean) {
  const Tensor t = xavier_init(30, 20, 5);
  const double bound = std::sqrt(6.0 / 50.0);
  for (auto v : t.data()) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(t, xavier_init(30, 20, 5));
  EXPECT_NE(t, xavier_init(30, 20, 6));
  const Tensor big = xavier_init(256, 256, 1);
  EXPECT_NEAR(big.sum() / static_cast<double>(big.size()), 0.0, 0.01);
  EXPECT_THROW(xavier_init(0, 3, 1), ShapeError);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor p = ts::random_tensor(2, 2, 50);
  const Tensor before = p;
  std::vector<Tensor*> params{&p};
  AdamState state({}, params);
  const std::vector<Tensor> grads{Tensor(2, 2)};
  adam_step(params, grads, state);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::scalar(1.0);
  std::vector<Tensor*> params{&p};
  AdamState state({}, params);
  adam_step(params, std::vector<Tensor>{Tensor::scalar(1.0)}, state);
  // bias-corrected m = v = 1 after one step: delta = -lr * 1 / (1 + eps)
  EXPECT_NEAR(p.item(), 1.0 - 0.005 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    Tensor p = xavier_init(3, 3, 9);
    std::vector<Tensor*> params{&p};
    AdamState state({}, params);
    for (int i = 0; i < 5; ++i) adam_step(params, std::vector<Tensor>{ts::random_tensor(3, 3, 60 + i)}, state);
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchRejected) {
  Tensor p(2, 2);
  std::vector<Tensor*> params{&p};
  AdamState state({}, params);
  EXPECT_THROW(adam_step(params, std::vector<Tensor>{Tensor(2, 3)}, state), ShapeError);
}
