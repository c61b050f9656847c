#include "lfm/run.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace lfm;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lfm_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig tiny_config(const fs::path& dir, std::size_t steps = 10) {
    RunConfig c;
    c.train.arch = {2, 16, 2};
    c.train.ot_batch_size = c.train.train_batch_size = 32;
    c.train.steps = steps;
    c.eval.n_eval = 128;
    c.eval.n_npe = 32;
    c.eval.solver = SolveSpec::fixed(Method::RK4, 16);
    c.output_dir = dir.string();
    return c;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

}  // namespace

TEST(RunConfig, RoundTrip) {
    RunConfig c;
    c.train.lagrangian = LagrangianSpec::harmonic(1.2345678901234567);
    c.train.ema_decay = 0.999;
    c.train.adam.lr = 3.3e-4;
    c.train.seed = 12345678901234ull;
    c.eval.solver = SolveSpec::adaptive(1e-6, 1e-7);
    c.output_dir = "somewhere/else";
    const auto back = run_config_from_json(json::parse(emit(c)));
    EXPECT_EQ(back, c);
    EXPECT_EQ(emit(back), emit(c));
    EXPECT_EQ(back.train.lagrangian.omega(), 1.2345678901234567);

    std::mt19937_64 rng(1);
    c.train.lagrangian = LagrangianSpec::anisotropic(
        SpectralPotential(oracle::random_orthogonal(rng, 2), Vector::LinSpaced(2, 0.3, 2.9)));
    const auto aniso = run_config_from_json(json::parse(emit(c)));
    EXPECT_EQ(aniso.train.lagrangian.spectral().frame(), c.train.lagrangian.spectral().frame());
    EXPECT_EQ(aniso.train.lagrangian.spectral().frequencies(), c.train.lagrangian.spectral().frequencies());
    EXPECT_EQ(emit(aniso), emit(c));
}

TEST(RunConfig, DefaultsAndErrors) {
    const auto d = run_config_from_json(json::object());
    EXPECT_TRUE(d.train.lagrangian.is_free());
    EXPECT_EQ(d.train.steps, 20000u);
    EXPECT_EQ(d.eval.n_eval, 2048u);

    EXPECT_THROW(run_config_from_json(json::parse(R"({"lagrangian": {"type": "harmonic", "omega": 4.0}})")), InvalidArgument);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"lagrangian": {"type": "harmonic"}})")), InvalidArgument);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"trianing": {}})")), InvalidArgument);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"training": {"steps": "many"}})")), InvalidArgument);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"training": {"ot_batch_size": 100}})")), InvalidArgument);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"eval": {"solver": {"method": "rk4", "nfe_budget": 6}}})")),
                 InvalidArgument);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"source": {"name": "spiral"}})")), InvalidArgument);
}

TEST(RunConfig, PcaPotentialIsResolved) {
    const auto c = run_config_from_json(
        json::parse(R"({"target": {"name": "moons"}, "lagrangian": {"type": "pca", "omega_max": 1.5, "alpha": 1.0}})"));
    ASSERT_TRUE(c.train.lagrangian.is_anisotropic());
    EXPECT_DOUBLE_EQ(c.train.lagrangian.spectral().frequencies().maxCoeff(), 1.5);
    EXPECT_EQ(to_json(c)["lagrangian"]["type"], "anisotropic");
}

TEST(RunConfig, ShippedConfigsLoad) {
    int loaded = 0;
    for (const auto& entry : fs::directory_iterator(LFM_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        SCOPED_TRACE(entry.path().string());
        const auto c = load_run_config(entry.path().string());
        EXPECT_EQ(run_config_from_json(to_json(c)), c);
        ++loaded;
    }
    EXPECT_GE(loaded, 4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto dir = scratch("ckpt");
    Checkpoint ck{tiny_config(dir), VelocityModel::initialized({2, 16, 2}, 3), std::nullopt, 7};
    ck.ema = Vector::LinSpaced(static_cast<Eigen::Index>(ck.model.parameter_count()), -1.0, 1.0 / 3.0);
    const auto path = (dir / "c.bin").string();
    save_checkpoint(path, ck);
    const auto back = load_checkpoint(path);
    EXPECT_EQ(back.model.parameters(), ck.model.parameters());
    EXPECT_EQ(*back.ema, *ck.ema);
    EXPECT_EQ(back.steps_done, 7u);
    EXPECT_EQ(back.config, ck.config);
    EXPECT_EQ(back.inference_model().parameters(), *ck.ema);

    // Truncation and foreign files are rejected.
    const std::string bytes = file_bytes(path);
    {
        std::ofstream out(dir / "short.bin", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    }
    EXPECT_THROW(load_checkpoint((dir / "short.bin").string()), InvalidArgument);
    write_text((dir / "junk.bin").string(), "not a checkpoint");
    EXPECT_THROW(load_checkpoint((dir / "junk.bin").string()), InvalidArgument);
}

TEST(CmdTrain, MinimalRunWritesLayout) {
    const auto dir = scratch("train");
    const auto cfg = tiny_config(dir);
    const auto run = run_training(cfg);
    for (const char* f : {"config.json", "checkpoint.bin", "train_log.csv", "eval.csv", "plots/trajectories.svg",
                          "plots/trajectories.csv"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(line_count(dir / "train_log.csv"), 11u);
    EXPECT_EQ(line_count(dir / "eval.csv"), 2u);
    ASSERT_TRUE(run.report && run.report->w2);
    EXPECT_EQ(load_run_config((dir / "config.json").string()), cfg);
    EXPECT_EQ(load_checkpoint((dir / "checkpoint.bin").string()).model.parameters(), run.result.model.parameters());
}

TEST(CmdTrain, ReproducibleCheckpoints) {
    const auto a = scratch("repro_a"), b = scratch("repro_b");
    auto ca = tiny_config(a, 25), cb = tiny_config(b, 25);
    // The output directory is part of the frozen config; use the same one.
    cb.output_dir = ca.output_dir;
    run_training(ca, false);
    const std::string first = file_bytes(a / "checkpoint.bin");
    run_training(cb, false);
    EXPECT_EQ(file_bytes(a / "checkpoint.bin"), first);
}

TEST(CmdGenerate, ShapesAndBudgets) {
    const auto dir = scratch("generate");
    run_training(tiny_config(dir), false);
    const auto ck = load_checkpoint((dir / "checkpoint.bin").string());

    const auto empty = generate(ck, SolveSpec::fixed(Method::RK4, 8), 0, 1);
    write_points_csv((dir / "empty.csv").string(), empty.solution.terminal, 2);
    EXPECT_EQ(file_bytes(dir / "empty.csv"), "x0,x1\n");

    const auto euler = generate(ck, SolveSpec::fixed(Method::Euler, 128), 2048, 1);
    const auto rk4 = generate(ck, SolveSpec::fixed(Method::RK4, 128), 2048, 1);
    EXPECT_EQ(euler.solution.terminal.rows(), 2048);
    EXPECT_EQ(euler.solution.nfe, rk4.solution.nfe);
    EXPECT_EQ(euler.source.points(), rk4.source.points());
    write_points_csv((dir / "s.csv").string(), rk4.solution.terminal, 2);
    EXPECT_EQ(line_count(dir / "s.csv"), 2049u);
    const RowMatrix back = read_points_csv((dir / "s.csv").string());
    EXPECT_EQ(back, rk4.solution.terminal);
}

TEST(CmdEval, OracleFlowsEndToEnd) {
    // The oracle cases of the NPE metric, driven through the evaluation path.
    const double w = 1.0;
    EvalProtocol p;
    p.n_eval = 8;
    p.n_npe = 8;
    p.solver = SolveSpec::fixed(Method::RK4, 400);
    EvalBatches b = eval_batches({Dataset::Gaussian, 0, 2}, {Dataset::Moons, 0, 2}, p, 4);
    b.npe_target = b.target;
    const auto plan = solve_assignment(cost_matrix(LagrangianSpec::harmonic(w), b.source, b.target, CostKind::KineticEnergy));
    RowMatrix paired(8, 2), swapped(8, 2);
    for (std::size_t i = 0; i < 8; ++i) {
        paired.row(static_cast<Eigen::Index>(i)) = b.target.points().row(static_cast<Eigen::Index>(plan.assignment[i]));
        swapped.row(static_cast<Eigen::Index>(i)) = b.target.points().row(static_cast<Eigen::Index>(plan.assignment[(i + 1) % 8]));
    }
    struct Harmonic {
        double w;
        RowMatrix a, b;
        RowMatrix operator()(const RowMatrix& x, double t) const {
            RowMatrix v(x.rows(), x.cols());
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                for (Eigen::Index k = 0; k < x.cols(); ++k)
                    v(i, k) = static_cast<double>(oracle::harmonic_velocity(w, a(i, k), b(i, k), t));
            return v;
        }
    };
    struct Affine {
        RowMatrix a, b;
        RowMatrix operator()(const RowMatrix&, double) const { return b - a; }
    };

    const auto exact = evaluate(Harmonic{w, b.source.points(), paired}, b, p);
    EXPECT_LE(*exact.npe, 1e-6);
    EXPECT_LE(*exact.w2, 1e-6);
    const auto affine = evaluate(Affine{b.source.points(), paired}, b, p);
    EXPECT_LE(std::abs(affine.coupling_excess), 1e-9);
    EXPECT_GT(std::abs(affine.path_excess), 1e-3);
    const auto crossed = evaluate(Harmonic{w, b.source.points(), swapped}, b, p);
    EXPECT_LE(std::abs(crossed.path_excess), 1e-6);
    EXPECT_GT(crossed.coupling_excess, 1e-3);
}

TEST(CmdSweep, SingleCellOneRow) {
    const auto dir = scratch("sweep1");
    SweepSpec s;
    s.axis = SweepAxis::Omega;
    s.values = {1.0};
    s.seeds = {3};
    s.base = tiny_config(dir);
    const auto rows = run_sweep(s, dir.string());
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(line_count(dir / "sweep.csv"), 2u);
    EXPECT_EQ(line_count(dir / "summary.csv"), 2u);
    EXPECT_TRUE(fs::exists(dir / "plots" / "sweep_w2.svg"));
    EXPECT_TRUE(fs::exists(dir / "cells" / "omega_1_seed3" / "checkpoint.bin"));
}

TEST(CmdSweep, NfeAndBatchAxes) {
    const auto dir = scratch("sweep2");
    SweepSpec s;
    s.axis = SweepAxis::Nfe;
    s.values = {4, 8};
    s.seeds = {0, 1};
    s.methods = {Method::Euler, Method::RK4};
    s.base = tiny_config(dir);
    s.workers = 2;
    const auto rows = run_sweep(s, (dir / "nfe").string());
    EXPECT_EQ(rows.size(), 8u);
    for (const auto& r : rows) EXPECT_EQ(r.report.nfe, static_cast<long>(r.value));
    EXPECT_EQ(line_count(dir / "nfe" / "summary.csv"), 5u);

    s.axis = SweepAxis::OtBatchSize;
    s.values = {1, 10};
    s.seeds = {0};
    const auto batch_rows = run_sweep(s, (dir / "batch").string());
    EXPECT_EQ(batch_rows.size(), 2u);
    const auto cfg = load_run_config((dir / "batch" / "cells" / "ot_batch_size_10_seed0" / "config.json").string());
    EXPECT_EQ(cfg.train.ot_batch_size, 10u);
    EXPECT_EQ(cfg.train.train_batch_size, 40u);
}

TEST(CmdSweep, Validation) {
    SweepSpec s;
    s.values = {};
    EXPECT_THROW(s.validate(), InvalidArgument);
    s.values = {4.0};
    EXPECT_THROW(s.validate(), InvalidArgument);  // omega >= pi
    s.axis = SweepAxis::Nfe;
    s.values = {6};
    s.methods = {Method::RK4};
    EXPECT_THROW(s.validate(), InvalidArgument);
    s.values = {8};
    s.seeds = {};
    EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Svg, FiguresAreWellFormed) {
    const std::vector<Series> series{{"euler", {4, 8, 16}, {0.5, 0.4, 0.35}, {0.05, 0.04, 0.03}},
                                     {"rk4", {4, 8, 16}, {0.3, 0.29, 0.29}, {0.01, 0.01, 0.01}}};
    const auto plot = line_plot_svg(series, "nfe", "W2", "W2 vs nfe", true);
    EXPECT_EQ(plot.rfind("<svg", 0), 0u);
    EXPECT_NE(plot.find("</svg>"), std::string::npos);
    EXPECT_EQ(plot.find("nan"), std::string::npos);
    EXPECT_THROW(line_plot_svg({}, "x", "y", "t", false), InvalidArgument);
}
