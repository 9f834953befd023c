#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vad/numeric.hpp"
#include "vad/tape.hpp"

namespace vad {
namespace {

TEST(Gaussian, SameSeedSameStream) {
    Rng a(7);
    Rng b(7);
    const auto x = gaussian<double>(a, 4, 5);
    const auto y = gaussian<double>(b, 4, 5);
    EXPECT_EQ(x, y);
}

TEST(Gaussian, SingleEntryIsFinite) {
    Rng rng(1);
    const auto x = gaussian<double>(rng, 1, 1);
    ASSERT_EQ(x.size(), 1);
    EXPECT_TRUE(std::isfinite(x(0, 0)));
}

TEST(Gaussian, MomentsOfAMillionDraws) {
    Rng rng(123);
    const auto x = gaussian<double>(rng, 1000, 1000);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    EXPECT_GE(mean, -0.01);
    EXPECT_LE(mean, 0.01);
    EXPECT_GE(var, 0.99);
    EXPECT_LE(var, 1.01);
}

TEST(Gaussian, RejectsEmptyShape) {
    Rng rng(1);
    EXPECT_THROW(gaussian<double>(rng, 0, 3), UsageError);
}

TEST(Rng, StreamsAreIndependentOfEachOther) {
    Rng a = Rng::for_stream(42, Stream::TrainNoise);
    Rng b = Rng::for_stream(42, Stream::Sampling);
    Rng a2 = Rng::for_stream(42, Stream::TrainNoise);
    EXPECT_NE(a.next_u64(), b.next_u64());
    b.next_u64();  // advancing another stream does not disturb this one
    a2.next_u64();
    EXPECT_EQ(a.next_u64(), a2.next_u64());
}

TEST(Affine, Identity) {
    Tensor<double> x(1, 2);
    x << 1, 2;
    const Tensor<double> w = Tensor<double>::Identity(2, 2);
    const RowVector<double> b = RowVector<double>::Zero(2);
    EXPECT_EQ(affine(x, w, b), x);
}

TEST(Affine, HandArithmetic) {
    Tensor<double> x(1, 2);
    x << 1, 1;
    Tensor<double> w(2, 1);
    w << 2, 3;
    RowVector<double> b(1);
    b << 1;
    EXPECT_DOUBLE_EQ(affine(x, w, b)(0, 0), 6.0);
}

TEST(Affine, DimensionMismatch) {
    const Tensor<double> x = Tensor<double>(Tensor<double>::Ones(2, 3));
    const Tensor<double> w = Tensor<double>(Tensor<double>::Ones(4, 2));
    const RowVector<double> b2 = RowVector<double>::Zero(2);
    const RowVector<double> b3 = RowVector<double>::Zero(3);
    const Tensor<double> w32 = Tensor<double>(Tensor<double>::Ones(3, 2));
    EXPECT_THROW(affine(x, w, b2), DataError);
    EXPECT_THROW(affine(x, w32, b3), DataError);
}

TEST(Affine, MatchesTripleLoopOnRandomShapes) {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = static_cast<Eigen::Index>(rng.uniform_int(1, 32));
        const auto k = static_cast<Eigen::Index>(rng.uniform_int(1, 32));
        const auto m = static_cast<Eigen::Index>(rng.uniform_int(1, 32));
        const auto x = gaussian<double>(rng, n, k);
        const auto w = gaussian<double>(rng, k, m);
        const RowVector<double> b = gaussian<double>(rng, 1, m);
        Tensor<double> expected = oracle::naive_matmul(x, w);
        expected.rowwise() += b;
        EXPECT_LE((affine(x, w, b) - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Tape, SquareHasGradientSix) {
    Tape<double> tape;
    const Var x = tape.variable(Tensor<double>::Constant(1, 1, 3.0));
    const Var y = tape.mul(x, x);
    tape.backward(y, Tensor<double>(Tensor<double>::Ones(1, 1)));
    EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 6.0);
}

TEST(Tape, EmptyTapeThrows) {
    Tape<double> tape;
    EXPECT_THROW(tape.backward(Var{0}, Tensor<double>(Tensor<double>::Ones(1, 1))), UsageError);
}

TEST(Tape, AffineMseMatchesClosedForm) {
    Rng rng(5);
    const auto x = gaussian<double>(rng, 6, 3);
    const auto w = gaussian<double>(rng, 3, 2);
    const auto target = gaussian<double>(rng, 6, 2);
    const double n = static_cast<double>(x.rows());

    Tape<double> tape;
    const Var wv = tape.parameter(w);
    const Var y = tape.affine(tape.constant_ref(x), wv, tape.constant(Tensor<double>::Zero(1, 2)));
    const Var diff = tape.add(y, tape.constant(-target));
    const Var loss = tape.weighted_sum_squares(diff, std::vector<double>(6, 1.0 / n));
    tape.backward(loss, Tensor<double>(Tensor<double>::Ones(1, 1)));

    const Tensor<double> expected = 2.0 * x.transpose() * (x * w - target) / n;
    EXPECT_LE((tape.grad_of(w) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

// Central differences on a scalar function of every op the network uses.
TEST(Tape, CompositeMatchesFiniteDifferences) {
    Rng rng(11);
    const auto x = gaussian<double>(rng, 5, 4);
    Tensor<double> w = gaussian<double>(rng, 4, 3);
    Tensor<double> b = gaussian<double>(rng, 1, 3);
    Tensor<double> gamma = gaussian<double>(rng, 1, 3);
    Tensor<double> beta = gaussian<double>(rng, 5, 3);

    auto run = [&](Tape<double>& tape) {
        Var h = tape.affine(tape.constant_ref(x), tape.parameter(w), tape.parameter(b));
        h = tape.silu(h);
        h = tape.add(tape.mul(h, tape.parameter(gamma)), tape.parameter(beta));
        h = tape.tanh(h);
        h = tape.scale_rows(h, {0.5, -1.0, 2.0, 1.5, 0.25});
        return tape.weighted_sum_squares(h, {1.0, 2.0, 0.5, 1.0, 3.0});
    };
    Tape<double> tape;
    const Var loss = run(tape);
    tape.backward(loss, Tensor<double>(Tensor<double>::Ones(1, 1)));

    for (Tensor<double>* p : {&w, &b, &gamma, &beta}) {
        const Tensor<double> analytic = tape.grad_of(*p);
        for (Eigen::Index i = 0; i < p->size(); ++i) {
            const double saved = p->data()[i];
            p->data()[i] = saved + 1e-6;
            Tape<double> up;
            const double fu = up.value(run(up))(0, 0);
            p->data()[i] = saved - 1e-6;
            Tape<double> down;
            const double fd = down.value(run(down))(0, 0);
            p->data()[i] = saved;
            const double numeric = (fu - fd) / 2e-6;
            EXPECT_LE(std::abs(analytic.data()[i] - numeric) / std::max(1.0, std::abs(numeric)), 1e-6);
        }
    }
}

TEST(Tape, ReluGradientMasksNegatives) {
    Tape<double> tape;
    Tensor<double> v(1, 3);
    v << -1.0, 0.5, 2.0;
    const Var x = tape.variable(v);
    tape.backward(tape.sum(tape.relu(x)), Tensor<double>(Tensor<double>::Ones(1, 1)));
    EXPECT_EQ(tape.grad(x)(0, 0), 0.0);
    EXPECT_EQ(tape.grad(x)(0, 1), 1.0);
    EXPECT_EQ(tape.grad(x)(0, 2), 1.0);
}

TEST(Reductions, ColumnSumsAccumulateInDouble) {
    Tensor<float> x = Tensor<float>::Constant(8192, 1, 0.1f);
    x(0, 0) = 1e7f;
    const double expected = 1e7 + 8191.0 * static_cast<double>(0.1f);
    EXPECT_NEAR(static_cast<double>(column_sums<float>(x)(0)), expected, 1.0);
    EXPECT_NEAR(total_sum<float>(x), expected, 1e-6);
}

}  // namespace
}  // namespace vad
