#include "lfm/neuralnet.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lfm;

namespace {

RowMatrix random_rows(std::mt19937_64& rng, int n, int d) {
    std::normal_distribution<double> nd(0.0, 1.0);
    RowMatrix x(n, d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) x(i, k) = nd(rng);
    return x;
}

Vector random_times(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector t(n);
    for (int i = 0; i < n; ++i) t[i] = u(rng);
    return t;
}

}  // namespace

TEST(VelocityModel, ParameterCount) {
    for (auto arch : {Architecture{2, 64, 3}, Architecture{1, 2, 1}, Architecture{5, 7, 4}}) {
        const VelocityModel m(arch);
        const std::size_t d = arch.dim, w = arch.width, l = arch.depth;
        EXPECT_EQ(m.parameter_count(), (d + 1) * w + w + (l - 1) * (w * w + w) + w * d + d);
        EXPECT_EQ(m.parameter_count(), arch.parameter_count());
    }
    EXPECT_THROW(VelocityModel(Architecture{2, 0, 3}), InvalidArgument);
}

TEST(VelocityModel, ZeroParametersGiveZeroField) {
    const VelocityModel m(Architecture{2, 16, 3});
    std::mt19937_64 rng(1);
    const RowMatrix y = m.forward(random_rows(rng, 10, 2), random_times(rng, 10));
    EXPECT_EQ(y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(VelocityModel, TinyNetworkByHand) {
    // d = 1, w = 2, L = 1: W0 (2x2 over [x, t]), b0, W1 (1x2), b1.
    Vector p(9);
    p << 1, 0, 0, 1,  // W0
        0.5, -1,      // b0
        2, -1,        // W1
        0.25;         // b1
    const VelocityModel m(Architecture{1, 2, 1}, p);
    Vector x(1);
    x << 1.0;
    // 2 silu(1.5) - silu(-0.5) + 0.25
    EXPECT_NEAR(m.forward(x, 0.5)[0], 2.8914937629800037, 1e-15);
}

TEST(VelocityModel, BatchedEqualsSingleRows) {
    std::mt19937_64 rng(2);
    const auto m = VelocityModel::initialized(Architecture{2, 16, 3}, 5);
    const RowMatrix x = random_rows(rng, 12, 2);
    const Vector t = random_times(rng, 12);
    const RowMatrix batch = m.forward(x, t);
    for (int i = 0; i < 12; ++i) {
        const Vector single = m.forward(Vector(x.row(i).transpose()), t[i]);
        EXPECT_LE((single - batch.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(VelocityModel, ShapeErrors) {
    const auto m = VelocityModel::initialized(Architecture{2, 4, 2}, 1);
    EXPECT_THROW(m.forward(RowMatrix(RowMatrix::Zero(3, 3)), 0.5), InvalidArgument);
    EXPECT_THROW(m.forward(RowMatrix(RowMatrix::Zero(3, 2)), Vector(Vector::Zero(2))), InvalidArgument);
    EXPECT_THROW(m.loss_and_grad(RowMatrix::Zero(3, 2), Vector::Zero(3), RowMatrix::Zero(2, 2)), InvalidArgument);
    VelocityModel copy = m;
    EXPECT_THROW(copy.set_parameters(Vector::Zero(3)), InvalidArgument);
}

TEST(VelocityModel, LossZeroAtOwnOutputs) {
    std::mt19937_64 rng(3);
    const auto m = VelocityModel::initialized(Architecture{2, 16, 3}, 9);
    const RowMatrix x = random_rows(rng, 8, 2);
    const Vector t = random_times(rng, 8);
    const auto lg = m.loss_and_grad(x, t, m.forward(x, t));
    EXPECT_EQ(lg.loss, 0.0);
    EXPECT_EQ(lg.grad.cwiseAbs().maxCoeff(), 0.0);
    const auto other = m.loss_and_grad(x, t, random_rows(rng, 8, 2));
    EXPECT_GT(other.loss, 0.0);
}

TEST(VelocityModel, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(4);
    const double h = 1e-5;
    for (int point = 0; point < 20; ++point) {
        auto m = VelocityModel::initialized(Architecture{2, 16, 3}, static_cast<std::uint64_t>(100 + point));
        const RowMatrix x = random_rows(rng, 6, 2);
        const Vector t = random_times(rng, 6);
        const RowMatrix y = random_rows(rng, 6, 2);
        const auto lg = m.loss_and_grad(x, t, y);
        const Vector base = m.parameters();
        int checked = 0;
        for (Eigen::Index k = 0; k < base.size(); ++k) {
            if (std::abs(lg.grad[k]) <= 1e-6) continue;
            Vector p = base;
            p[k] += h;
            m.set_parameters(p);
            const double up = m.loss(x, t, y);
            p[k] -= 2 * h;
            m.set_parameters(p);
            const double down = m.loss(x, t, y);
            const double fd = (up - down) / (2 * h);
            EXPECT_LE(std::abs(fd - lg.grad[k]) / std::abs(lg.grad[k]), 1e-4) << "point " << point << " coord " << k;
            ++checked;
        }
        m.set_parameters(base);
        EXPECT_GT(checked, 100);
    }
}

TEST(VelocityModel, OutputBiasGradientIsLinearInDeviation) {
    std::mt19937_64 rng(5);
    const auto m = VelocityModel::initialized(Architecture{2, 8, 2}, 1);
    const RowMatrix x = random_rows(rng, 10, 2);
    const Vector t = random_times(rng, 10);
    const RowMatrix out = m.forward(x, t);
    const RowMatrix dev = random_rows(rng, 10, 2);
    const auto g1 = m.loss_and_grad(x, t, out - dev).grad;
    const auto g2 = m.loss_and_grad(x, t, out - 2.0 * dev).grad;
    const auto tail = [](const Vector& g) { return Vector(g.tail(2)); };
    EXPECT_LE((tail(g2) - 2.0 * tail(g1)).cwiseAbs().maxCoeff(), 1e-12);
    // The output bias gradient is (2/n) sum of deviations.
    const Vector expected = 2.0 / 10.0 * dev.colwise().sum().transpose();
    EXPECT_LE((tail(g1) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    AdamState adam(AdamConfig{}, 4);
    Vector p = Vector::LinSpaced(4, -1, 1);
    const Vector start = p;
    for (int i = 0; i < 10; ++i) adam.step(p, Vector::Zero(4));
    EXPECT_EQ(p, start);
    EXPECT_EQ(adam.step_count(), 10u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamState adam(cfg, 1);
    Vector p(1);
    p << 3.0;
    adam.step(p, Vector::Ones(1));
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    EXPECT_NEAR(p[0], 3.0 - 0.01 / (1.0 + 1e-8), 1e-15);
    EXPECT_THROW(adam.step(p, Vector::Ones(2)), InvalidArgument);
}

TEST(Adam, DeterministicTrajectories) {
    auto run = [] {
        std::mt19937_64 rng(8);
        auto m = VelocityModel::initialized(Architecture{2, 8, 2}, 3);
        AdamState adam(AdamConfig{}, m.parameter_count());
        for (int s = 0; s < 20; ++s) {
            const RowMatrix x = random_rows(rng, 16, 2);
            const Vector t = random_times(rng, 16);
            const RowMatrix y = random_rows(rng, 16, 2);
            adam.step(m.mutable_parameters(), m.loss_and_grad(x, t, y).grad);
        }
        return m.parameters();
    };
    EXPECT_EQ(run(), run());
}

TEST(Ema, Updates) {
    const Vector ones = Vector::Ones(3);
    EmaState zero_decay(0.0, Vector::Zero(3));
    zero_decay.update(ones);
    EXPECT_EQ(zero_decay.shadow(), ones);

    EmaState frozen(1.0, Vector::Zero(3));
    frozen.update(ones);
    EXPECT_EQ(frozen.shadow(), Vector::Zero(3));

    EmaState half(0.5, Vector::Zero(3));
    half.update(ones);
    half.update(ones);
    EXPECT_DOUBLE_EQ(half.shadow()[0], 0.75);

    EXPECT_THROW(EmaState(1.5, Vector::Zero(3)), InvalidArgument);
    EXPECT_THROW(half.update(Vector::Zero(2)), InvalidArgument);
}
