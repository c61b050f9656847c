#include "lfm/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace lfm;

namespace {

PointBatch random_batch(std::mt19937_64& rng, int n, int d) {
    std::normal_distribution<double> nd(0.0, 1.0);
    RowMatrix x(n, d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) x(i, k) = nd(rng);
    return PointBatch(x);
}

Vector random_times(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector t(n);
    for (int i = 0; i < n; ++i) t[i] = u(rng);
    return t;
}

TrainConfig small_config(LagrangianSpec spec, std::size_t steps) {
    TrainConfig cfg;
    cfg.lagrangian = spec;
    cfg.arch = {2, 16, 2};
    cfg.ot_batch_size = 32;
    cfg.train_batch_size = 64;
    cfg.steps = steps;
    cfg.seed = 17;
    return cfg;
}

double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST(MakeTargets, FreeParticleIsAffine) {
    std::mt19937_64 rng(1);
    const auto x0 = random_batch(rng, 20, 2);
    const auto x1 = random_batch(rng, 20, 2);
    const Vector t = random_times(rng, 20);
    const auto spec = LagrangianSpec::free_particle();
    const auto plan = couple(spec, x0, x1);
    const auto tg = make_targets(spec, plan, x0, x1, t);
    for (int i = 0; i < 20; ++i) {
        const Vector a = x0.row(static_cast<std::size_t>(i));
        const Vector b = x1.row(plan.assignment[static_cast<std::size_t>(i)]);
        EXPECT_LE((tg.velocities.row(i).transpose() - (b - a)).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_LE((tg.positions.row(i).transpose() - ((1 - t[i]) * a + t[i] * b)).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(MakeTargets, SmallOmegaMatchesFreeParticle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x0 = random_batch(rng, 64, 2);
        const auto x1 = random_batch(rng, 64, 2);
        const Vector t = random_times(rng, 64);
        const auto plan = couple(LagrangianSpec::free_particle(), x0, x1);
        const auto free = make_targets(LagrangianSpec::free_particle(), plan, x0, x1, t);
        const auto harm = make_targets(LagrangianSpec::harmonic(1e-3), plan, x0, x1, t);
        EXPECT_LE((free.positions - harm.positions).cwiseAbs().maxCoeff(), 1e-5);
        EXPECT_LE((free.velocities - harm.velocities).cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(MakeTargets, QuarterPeriodIsTrigonometric) {
    std::mt19937_64 rng(3);
    const auto x0 = random_batch(rng, 10, 3);
    const auto x1 = random_batch(rng, 10, 3);
    const Vector t = random_times(rng, 10);
    CouplingPlan plan;
    for (std::size_t i = 0; i < 10; ++i) plan.assignment.push_back(9 - i);
    const auto tg = make_targets(LagrangianSpec::harmonic(kPi / 2), plan, x0, x1, t);
    for (int i = 0; i < 10; ++i) {
        const Vector expected = std::cos(kPi * t[i] / 2) * x0.row(static_cast<std::size_t>(i)) +
                                std::sin(kPi * t[i] / 2) * x1.row(static_cast<std::size_t>(9 - i));
        EXPECT_LE((tg.positions.row(i).transpose() - expected).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(MakeTargets, ReproducesTrajectoryExactly) {
    std::mt19937_64 rng(4);
    const auto x0 = random_batch(rng, 16, 2);
    const auto x1 = random_batch(rng, 16, 2);
    const Vector t = random_times(rng, 16);
    const double c = std::cos(0.4), s = std::sin(0.4);
    Eigen::MatrixXd frame(2, 2);
    frame << c, -s, s, c;
    const LagrangianSpec specs[] = {LagrangianSpec::free_particle(), LagrangianSpec::harmonic(1.3),
                                    LagrangianSpec::anisotropic(SpectralPotential(frame, Vector::LinSpaced(2, 0.5, 2.0)))};
    for (const auto& spec : specs) {
        const auto plan = couple(spec, x0, x1);
        const auto tg = make_targets(spec, plan, x0, x1, t);
        for (std::size_t i = 0; i < 16; ++i) {
            const Endpoints ep(x0.row(i), x1.row(plan.assignment[i]));
            const auto r = static_cast<Eigen::Index>(i);
            EXPECT_EQ(Vector(tg.positions.row(r).transpose()), trajectory(spec, ep, t[r])) << spec.name();
            EXPECT_EQ(Vector(tg.velocities.row(r).transpose()), trajectory_velocity(spec, ep, t[r])) << spec.name();
        }
    }
}

TEST(MakeTargets, Errors) {
    std::mt19937_64 rng(5);
    const auto x0 = random_batch(rng, 4, 2);
    const auto x1 = random_batch(rng, 4, 2);
    const auto plan = couple(LagrangianSpec::free_particle(), x0, x1);
    EXPECT_THROW(make_targets(LagrangianSpec::free_particle(), plan, x0, x1, Vector::Zero(3)), InvalidArgument);
    Vector bad = Vector::Zero(4);
    bad[2] = 1.5;
    EXPECT_THROW(make_targets(LagrangianSpec::free_particle(), plan, x0, x1, bad), InvalidArgument);
}

TEST(TrainConfig, Validation) {
    auto cfg = small_config(LagrangianSpec::free_particle(), 1);
    cfg.train_batch_size = 48;
    EXPECT_THROW(Trainer{cfg}, InvalidArgument);
    cfg = small_config(LagrangianSpec::free_particle(), 1);
    cfg.ot_batch_size = 0;
    EXPECT_THROW(Trainer{cfg}, InvalidArgument);
    cfg = small_config(LagrangianSpec::free_particle(), 1);
    cfg.arch.dim = 3;
    EXPECT_THROW(Trainer{cfg}, InvalidArgument);
}

TEST(Train, ZeroStepsKeepsInitialization) {
    const auto cfg = small_config(LagrangianSpec::harmonic(1.0), 0);
    const auto res = train(cfg);
    EXPECT_EQ(res.steps_done, 0u);
    EXPECT_TRUE(res.records.empty());
    EXPECT_EQ(res.model.parameters(), VelocityModel::initialized(cfg.arch, derive_seed(cfg.seed, "model")).parameters());
}

TEST(Train, SinglePointBatchesUseIndependentPairing) {
    auto cfg = small_config(LagrangianSpec::free_particle(), 1);
    cfg.ot_batch_size = 1;
    cfg.train_batch_size = 8;
    Trainer tr(cfg);
    Vector t;
    std::vector<CouplingPlan> plans;
    tr.next_batch(t, &plans);
    ASSERT_EQ(plans.size(), 8u);
    for (const auto& p : plans) EXPECT_EQ(p.assignment, std::vector<std::size_t>{0});
}

TEST(Train, AggregatesOtBatches) {
    auto cfg = small_config(LagrangianSpec::free_particle(), 1);
    Trainer tr(cfg);
    Vector t;
    std::vector<CouplingPlan> plans;
    const auto tg = tr.next_batch(t, &plans);
    EXPECT_EQ(plans.size(), 2u);
    EXPECT_EQ(tg.positions.rows(), 64);
    EXPECT_EQ(t.size(), 64);
    EXPECT_GE(t.minCoeff(), 0.0);
    EXPECT_LE(t.maxCoeff(), 1.0);
}

TEST(Train, CouplingIndependentOfOmega) {
    // Same seed gives the same raw batches; only the targets may differ.
    std::vector<CouplingPlan> reference;
    Vector t;
    auto base = small_config(LagrangianSpec::free_particle(), 1);
    Trainer(base).next_batch(t, &reference);
    for (double w : {1e-3, 1.0, 1.5}) {
        auto cfg = base;
        cfg.lagrangian = LagrangianSpec::harmonic(w);
        std::vector<CouplingPlan> plans;
        Trainer(cfg).next_batch(t, &plans);
        ASSERT_EQ(plans.size(), reference.size());
        for (std::size_t g = 0; g < plans.size(); ++g) EXPECT_EQ(plans[g].assignment, reference[g].assignment) << "omega " << w;
    }
}

TEST(Train, Deterministic) {
    const auto cfg = small_config(LagrangianSpec::harmonic(1.0), 30);
    const auto a = train(cfg);
    const auto b = train(cfg);
    EXPECT_EQ(a.model.parameters(), b.model.parameters());
    ASSERT_EQ(a.records.size(), 30u);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(a.records[i].loss, b.records[i].loss);

    auto other = cfg;
    other.seed = 18;
    EXPECT_NE(train(other).model.parameters(), a.model.parameters());
}

TEST(Train, EmaAndLogCadence) {
    auto cfg = small_config(LagrangianSpec::free_particle(), 20);
    cfg.ema_decay = 0.9;
    cfg.log_every = 5;
    const auto res = train(cfg);
    ASSERT_EQ(res.records.size(), 4u);
    EXPECT_EQ(res.records.back().step, 20u);
    ASSERT_TRUE(res.ema.has_value());
    EXPECT_NE(res.ema->shadow(), res.model.parameters());
    EXPECT_EQ(res.inference_model().parameters(), res.ema->shadow());
}

TEST(Train, EvalHookCadence) {
    auto cfg = small_config(LagrangianSpec::free_particle(), 10);
    cfg.log_every = 10;
    cfg.eval_every = 4;
    std::vector<std::size_t> seen;
    const auto res = train(cfg, [&](const VelocityModel&, std::size_t step) {
        seen.push_back(step);
        return std::pair<std::optional<double>, std::optional<double>>{1.0, std::nullopt};
    });
    EXPECT_EQ(seen, (std::vector<std::size_t>{4, 8}));
    ASSERT_EQ(res.records.size(), 3u);
    EXPECT_TRUE(res.records[0].w2.has_value());
    EXPECT_FALSE(res.records[2].w2.has_value());
}

TEST(Train, DivergenceAbortsWithDiagnostic) {
    auto cfg = small_config(LagrangianSpec::free_particle(), 50);
    cfg.adam.lr = 1e100;
    const auto res = train(cfg);
    EXPECT_TRUE(res.diverged);
    EXPECT_LT(res.steps_done, 50u);
    EXPECT_NE(res.diagnostic.find("diverged"), std::string::npos);
}

TEST(Train, LossDecreasesOnBenchmarkPairs) {
    const std::pair<Dataset, Dataset> pairs[] = {{Dataset::Gaussian, Dataset::EightGaussians},
                                                 {Dataset::Moons, Dataset::EightGaussians},
                                                 {Dataset::Gaussian, Dataset::Moons},
                                                 {Dataset::Gaussian, Dataset::SCurve}};
    for (const auto& [src, tgt] : pairs) {
        auto cfg = small_config(LagrangianSpec::harmonic(1.0), 400);
        cfg.arch.width = 32;
        cfg.adam.lr = 3e-3;
        cfg.source = {src, 1, 2};
        cfg.target = {tgt, 2, 2};
        const auto res = train(cfg);
        ASSERT_FALSE(res.diverged) << res.diagnostic;
        std::vector<double> first, last;
        for (std::size_t i = 0; i < 20; ++i) first.push_back(res.records[i].loss);
        for (std::size_t i = 380; i < 400; ++i) last.push_back(res.records[i].loss);
        EXPECT_LT(median(last), median(first)) << to_string(src) << " -> " << to_string(tgt);
    }
}
