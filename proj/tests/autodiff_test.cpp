#include "graphmerge/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "graphmerge/error.hpp"
#include "graphmerge/rng.hpp"

using namespace graphmerge;
using namespace graphmerge::ad;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Finite-difference check of a scalar function of the given parameters.
double check(const LossFn& fn, std::vector<Parameter*> params) {
  return grad_check(fn, params).max_rel_error;
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.shape(), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::from_rows({{1, 2}, {3}}), ShapeError);
}

TEST(Ops, SegmentSoftmaxUniformLogits) {
  Tape tape;
  const std::vector<int> seg{0, 0};
  Var y = segment_softmax(tape.constant(Tensor::column({0, 0})), seg);
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.value()[1], 0.5);
}

TEST(Ops, SegmentSoftmaxNormalizesEachSegment) {
  Rng rng(1);
  Tape tape;
  const std::vector<int> seg{0, 0, 0, 1, 2, 2};
  Var y = segment_softmax(tape.constant(Tensor::column({3.0, -1.0, 0.5, 100.0, -700.0, 2.0})), seg);
  double s0 = 0, s2 = 0;
  for (int i = 0; i < 3; ++i) s0 += y.value()[i];
  for (int i = 4; i < 6; ++i) s2 += y.value()[i];
  EXPECT_NEAR(s0, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(y.value()[3], 1.0);
  EXPECT_NEAR(s2, 1.0, 1e-12);
  for (double v : y.value().data()) EXPECT_GE(v, 0.0);
}

TEST(Ops, SegmentIdsMustBeSorted) {
  Tape tape;
  const std::vector<int> seg{1, 0};
  EXPECT_THROW(segment_softmax(tape.constant(Tensor::column({0, 0})), seg), ShapeError);
  EXPECT_THROW(segment_sum(tape.constant(Tensor(2, 1)), seg, 2), ShapeError);
  const std::vector<int> far{0, 5};
  EXPECT_THROW(segment_sum(tape.constant(Tensor(2, 1)), far, 2), ShapeError);
}

TEST(Ops, ReluValueAndGradient) {
  Parameter p("x", Tensor::row({-1.0, 2.0}));
  Tape tape;
  tape.backward(sum(relu(tape.param(p))));
  EXPECT_EQ(p.grad[0], 0.0);
  EXPECT_EQ(p.grad[1], 1.0);
  Tape t2;
  Var y = relu(t2.constant(Tensor::row({-1.0, 2.0})));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_EQ(y.value()[1], 2.0);
}

TEST(Ops, CrossEntropyAnalytic) {
  Tape tape;
  EXPECT_DOUBLE_EQ(cross_entropy(tape.constant(Tensor::row({1.0, 0.0, 0.0})), 0).item(), 0.0);
  EXPECT_NEAR(cross_entropy(tape.constant(Tensor::row({1.0 / 3, 1.0 / 3, 1.0 / 3})), 1).item(), std::log(3.0),
              1e-15);
  EXPECT_THROW(cross_entropy(tape.constant(Tensor::row({1.0, 0.0})), 2), ShapeError);
}

TEST(Ops, ShapeMismatches) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(2, 3));
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(add(a, tape.constant(Tensor(3, 2))), ShapeError);
  EXPECT_NO_THROW(matmul_t(a, b));
  EXPECT_THROW(slice_cols(a, 2, 4), ShapeError);
}

TEST(Ops, DropoutIdentityWhenOff) {
  Rng rng(3);
  Tape tape;
  const Tensor x = random_tensor(4, 5, rng);
  Var in = tape.constant(x);
  EXPECT_EQ(dropout(in, 0.0, rng, true).value(), x);
  EXPECT_EQ(dropout(in, 0.5, rng, false).value(), x);
  const Tensor d = dropout(in, 0.5, rng, true).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_TRUE(d[i] == 0.0 || d[i] == 2.0 * x[i]);
}

TEST(Ops, LinearBackwardIsAllOnesJacobian) {
  Rng rng(5);
  Parameter a("a", random_tensor(3, 4, rng));
  Parameter b("b", random_tensor(3, 4, rng));
  Tape tape;
  Var va = tape.param(a), vb = tape.param(b);
  const std::vector<Var> parts{va, vb};
  tape.backward(sum(add(scale(concat(parts, 0), 2.0), tape.constant(Tensor(6, 4, 1.0)))));
  for (std::size_t i = 0; i < a.grad.numel(); ++i) {
    EXPECT_EQ(a.grad[i], 2.0);
    EXPECT_EQ(b.grad[i], 2.0);
  }
}

TEST(Ops, MatmulValue) {
  Tape tape;
  Var c = matmul(tape.constant(Tensor::from_rows({{1, 2}, {3, 4}})), tape.constant(Tensor::from_rows({{5}, {6}})));
  EXPECT_EQ(c.value(), Tensor::from_rows({{17}, {39}}));
  Var d = matmul_t(tape.constant(Tensor::from_rows({{1, 2}})), tape.constant(Tensor::from_rows({{3, 4}, {5, 6}})));
  EXPECT_EQ(d.value(), Tensor::from_rows({{11, 17}}));
}

TEST(Ops, SegmentReductionsAndGather) {
  Tape tape;
  Var x = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  const std::vector<int> seg{0, 0, 2};
  EXPECT_EQ(segment_sum(x, seg, 3).value(), Tensor::from_rows({{4, 6}, {0, 0}, {5, 6}}));
  EXPECT_EQ(segment_mean(x, seg, 3).value(), Tensor::from_rows({{2, 3}, {0, 0}, {5, 6}}));
  const std::vector<int> rows{2, 0, 2};
  EXPECT_EQ(gather_rows(x, rows).value(), Tensor::from_rows({{5, 6}, {1, 2}, {5, 6}}));
  EXPECT_EQ(scale_rows(x, tape.constant(Tensor::column({1, 0, 2}))).value(),
            Tensor::from_rows({{1, 2}, {0, 0}, {10, 12}}));
}

TEST(GradCheck, SumOfSquaresAnalytic) {
  Parameter p("v", Tensor::row({1.0, 2.0, 3.0}));
  Tape tape;
  tape.backward(sum_squares(tape.param(p)));
  EXPECT_EQ(p.grad, Tensor::row({2.0, 4.0, 6.0}));
  p.zero_grad();
  EXPECT_LT(check([&](Tape& t) { return sum_squares(t.param(p)); }, {&p}), 1e-8);
}

TEST(GradCheck, ConstantLossGivesZeroBothWays) {
  Parameter p("v", Tensor::row({1.0, -2.0}));
  const auto r = grad_check([&](Tape& t) { return sum(t.constant(Tensor::row({4.0, 5.0}))); },
                            std::vector<Parameter*>{&p});
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.coordinates, 2u);
  EXPECT_EQ(p.grad, Tensor(1, 2));
}

TEST(GradCheck, NonFiniteLossThrows) {
  Parameter p("v", Tensor::row({-1.0}));
  EXPECT_THROW(grad_check([&](Tape& t) { return sum(log(relu(t.param(p)))); }, std::vector<Parameter*>{&p}),
               Error);
}

TEST(GradCheck, EveryDifferentiableOp) {
  Rng rng(7);
  Parameter a("a", random_tensor(4, 3, rng));
  Parameter b("b", random_tensor(3, 2, rng));
  Parameter w("w", random_tensor(4, 1, rng));
  const std::vector<int> seg{0, 0, 1, 3};
  const std::vector<int> rows{3, 1, 1, 0, 2};
  auto fn = [&](Tape& t) {
    Var va = t.param(a), vb = t.param(b), vw = t.param(w);
    Var h = matmul(va, vb);                                    // 4 x 2
    Var g = matmul_t(va, t.param(a));                          // 4 x 4
    Var s = segment_softmax(slice_cols(g, 1, 2), seg);         // 4 x 1
    Var r = scale_rows(leaky_relu(h, 0.2), add(s, vw));        // 4 x 2
    Var pooled = segment_mean(r, seg, 4);                      // 4 x 2
    Var summed = segment_sum(gather_rows(relu(h), rows), std::vector<int>{0, 0, 1, 2, 2}, 3);
    const std::vector<Var> parts{pooled, summed};
    Var cat = concat(parts, 0);                                // 7 x 2
    Var e = exp(scale(cat, 0.3));
    Var probs = segment_softmax(slice_cols(e, 0, 1), std::vector<int>{0, 0, 0, 1, 1, 1, 1});
    Var l = cross_entropy(probs, 2);
    return add(add(l, scale(sum_squares(vw), 0.1)), sum(log(add(e, t.constant(Tensor(7, 2, 1.0))))));
  };
  EXPECT_LT(check(fn, {&a, &b, &w}), 1e-7);
}

TEST(Tape, BackwardRunsOnce) {
  Parameter p("v", Tensor::row({1.0}));
  Tape tape;
  Var l = sum_squares(tape.param(p));
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), Error);
  EXPECT_THROW(tape.backward(tape.constant(Tensor::row({1.0, 2.0}))), Error);
}

TEST(Tape, GradientsAccumulateAcrossTapes) {
  Parameter p("v", Tensor::row({3.0}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum_squares(tape.param(p)));
  }
  EXPECT_EQ(p.grad[0], 12.0);
}
