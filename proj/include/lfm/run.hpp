#pragma once

// Run orchestration behind the command-line tool: training runs with their
// output directory, checkpoint evaluation, sampling and parameter sweeps.

#include "lfm/checkpoint.hpp"
#include "lfm/io.hpp"

#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

namespace lfm {

namespace fs = std::filesystem;

/// Held-out evaluation of a model under a run config's protocol.
inline EvalReport evaluate_model(const VelocityModel& model, const RunConfig& cfg) {
    const auto batches = eval_batches(cfg.train.source, cfg.train.target, cfg.eval, cfg.train.seed);
    auto r = evaluate(ModelField{&model}, batches, cfg.eval);
    return r;
}

struct RunOutcome {
    TrainResult result;
    std::optional<EvalReport> report;
};

/// Trains and writes config.json, checkpoint.bin, train_log.csv, eval.csv and
/// plots/ into cfg.output_dir.
inline RunOutcome run_training(const RunConfig& cfg, bool final_eval = true, std::ostream* log = nullptr) {
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir / "plots");
    write_text((dir / "config.json").string(), emit(cfg));

    EvalHook hook;
    if (cfg.train.eval_every > 0)
        hook = [&cfg](const VelocityModel& m, std::size_t) {
            const auto r = evaluate_model(m, cfg);
            return std::pair{r.w2, r.npe};
        };
    const auto start = std::chrono::steady_clock::now();
    RunOutcome out{train(cfg.train, hook), std::nullopt};
    const auto& res = out.result;
    if (log)
        *log << "trained " << res.steps_done << " steps in "
             << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) << " s\n";

    Checkpoint ck{cfg, res.model, std::nullopt, res.steps_done};
    if (res.ema) ck.ema = res.ema->shadow();
    save_checkpoint((dir / "checkpoint.bin").string(), ck);
    write_train_log((dir / "train_log.csv").string(), res.records);
    if (res.diverged) {
        write_text((dir / "diverged.txt").string(), res.diagnostic + "\n");
        if (log) *log << res.diagnostic << '\n';
        return out;
    }

    const VelocityModel model = res.inference_model();
    if (final_eval) {
        out.report = evaluate_model(model, cfg);
        write_eval_csv((dir / "eval.csv").string(), *out.report);
        if (log) *log << "w2 " << fmt(out.report->w2) << "  npe " << fmt(out.report->npe) << '\n';
    }

    // Trajectory figure from a small source batch.
    const auto src = Sampler(stream_spec(cfg.train.source, cfg.train.seed, "plot-source"), "plot-source").sample(256);
    const auto tgt = Sampler(stream_spec(cfg.train.target, cfg.train.seed, "plot-target"), "plot-target").sample(1024);
    auto spec = SolveSpec::fixed(Method::RK4, 200);
    spec.record = true;
    const auto sol = integrate(ModelField{&model}, src.points(), spec);
    write_trajectories_csv((dir / "plots" / "trajectories.csv").string(), sol);
    write_points_csv((dir / "plots" / "target.csv").string(), tgt.points(), tgt.dim());
    write_text((dir / "plots" / "trajectories.svg").string(),
               trajectory_svg(src.points(), tgt.points(), sol.states, 128,
                              to_string(cfg.train.source.name) + " -> " + to_string(cfg.train.target.name) + ", " +
                                  cfg.train.lagrangian.name()));
    return out;
}

struct GenerateResult {
    PointBatch source;
    SolveResult solution;
};

/// Pushes n fresh source samples through the learned flow.
inline GenerateResult generate(const Checkpoint& ck, const SolveSpec& solver, std::size_t n, std::uint64_t seed) {
    const auto& src = ck.config.train.source;
    const std::size_t d = src.dim();
    if (n == 0) {
        GenerateResult empty{PointBatch(RowMatrix(0, static_cast<Eigen::Index>(d))), {}};
        empty.solution.terminal = empty.source.points();
        return empty;
    }
    const auto x0 = Sampler(stream_spec(src, seed, "generate"), "generate").sample(n);
    const VelocityModel model = ck.inference_model();
    return {x0, integrate(ModelField{&model}, x0.points(), solver)};
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { Omega, Nfe, OtBatchSize };

inline std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::Omega: return "omega";
        case SweepAxis::Nfe: return "nfe";
        case SweepAxis::OtBatchSize: return "ot_batch_size";
    }
    return "?";
}

inline SweepAxis parse_axis(const std::string& s) {
    if (s == "omega") return SweepAxis::Omega;
    if (s == "nfe") return SweepAxis::Nfe;
    if (s == "ot_batch_size") return SweepAxis::OtBatchSize;
    throw InvalidArgument("unknown sweep axis '" + s + "' (omega, nfe, ot_batch_size)");
}

struct SweepSpec {
    SweepAxis axis = SweepAxis::Omega;
    std::vector<double> values;
    RunConfig base;
    std::vector<std::uint64_t> seeds{0};
    std::vector<Method> methods{Method::RK4};  // nfe axis only
    std::size_t workers = 1;

    void validate() const {
        require(!values.empty(), "sweep: values must be non-empty");
        require(!seeds.empty(), "sweep: seeds must be non-empty");
        require(workers >= 1, "sweep: need at least one worker");
        if (axis == SweepAxis::Nfe) {
            require(!methods.empty(), "sweep: methods must be non-empty");
            for (double v : values)
                for (Method m : methods) {
                    require(m != Method::Adaptive, "sweep: the nfe axis takes fixed-step methods");
                    SolveSpec::fixed(m, static_cast<int>(v)).validate();
                }
        }
        if (axis == SweepAxis::OtBatchSize)
            for (double v : values) require(v >= 1 && v == std::floor(v), "sweep: OT batch sizes must be positive integers");
        if (axis == SweepAxis::Omega)
            for (double v : values) LagrangianSpec::harmonic(v);
    }
};

struct SweepRow {
    double value = 0.0;
    std::uint64_t seed = 0;
    std::string method;
    EvalReport report;
    bool diverged = false;
};

/// Worker count from LFM_WORKERS, defaulting to 1.
inline std::size_t workers_from_env() {
    const char* v = std::getenv("LFM_WORKERS");
    if (!v || !*v) return 1;
    try {
        const long n = std::stol(v);
        require(n >= 1, "LFM_WORKERS must be a positive integer");
        return static_cast<std::size_t>(n);
    } catch (const std::logic_error&) {
        throw InvalidArgument("LFM_WORKERS must be a positive integer");
    }
}

namespace detail {

inline std::string cell_name(SweepAxis axis, double value, std::uint64_t seed) {
    return to_string(axis) + "_" + fmt(value) + "_seed" + std::to_string(seed);
}

// Runs jobs 0..count-1 on a bounded set of threads. The first exception wins.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    auto loop = [&] {
        for (std::size_t i; (i = next++) < count;) {
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!error) error = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(workers, count); ++w) pool.emplace_back(loop);
    loop();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Runs every (value, seed) cell; each cell owns its own subdirectory.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::string& out_dir, std::ostream* log = nullptr) {
    spec.validate();
    const fs::path dir(out_dir);
    fs::create_directories(dir / "cells");
    fs::create_directories(dir / "plots");
    std::vector<SweepRow> rows;
    std::mutex rows_mutex, log_mutex;
    auto note = [&](const std::string& s) {
        if (!log) return;
        std::lock_guard lock(log_mutex);
        *log << s << '\n';
    };

    if (spec.axis == SweepAxis::Nfe) {
        // One training run per seed, evaluated at every budget and method.
        detail::parallel_for(spec.seeds.size(), spec.workers, [&](std::size_t k) {
            RunConfig cfg = spec.base;
            cfg.train.seed = spec.seeds[k];
            cfg.output_dir = (dir / "cells" / ("seed" + std::to_string(cfg.train.seed))).string();
            const auto run = run_training(cfg, false);
            const VelocityModel model = run.result.inference_model();
            const auto batches = eval_batches(cfg.train.source, cfg.train.target, cfg.eval, cfg.train.seed);
            for (double v : spec.values)
                for (Method m : spec.methods) {
                    EvalProtocol p = cfg.eval;
                    p.solver = SolveSpec::fixed(m, static_cast<int>(v));
                    p.compute_npe = false;
                    SweepRow row{v, cfg.train.seed, to_string(m), {}, run.result.diverged};
                    if (!row.diverged) row.report = evaluate(ModelField{&model}, batches, p);
                    note("nfe " + fmt(v) + " " + row.method + " seed " + std::to_string(row.seed) + ": w2 " + fmt(row.report.w2));
                    std::lock_guard lock(rows_mutex);
                    rows.push_back(row);
                }
        });
    } else {
        const std::size_t cells = spec.values.size() * spec.seeds.size();
        detail::parallel_for(cells, spec.workers, [&](std::size_t c) {
            const double v = spec.values[c / spec.seeds.size()];
            RunConfig cfg = spec.base;
            cfg.train.seed = spec.seeds[c % spec.seeds.size()];
            if (spec.axis == SweepAxis::Omega) {
                cfg.train.lagrangian = LagrangianSpec::harmonic(v);
            } else {
                const auto n = static_cast<std::size_t>(v);
                cfg.train.ot_batch_size = n;
                // Smallest multiple of n that covers the base training batch.
                cfg.train.train_batch_size = n * ((spec.base.train.train_batch_size + n - 1) / n);
            }
            cfg.output_dir = (dir / "cells" / detail::cell_name(spec.axis, v, cfg.train.seed)).string();
            const auto run = run_training(cfg, true);
            SweepRow row{v, cfg.train.seed, to_string(cfg.eval.solver.method), run.report.value_or(EvalReport{}),
                         run.result.diverged};
            note(to_string(spec.axis) + " " + fmt(v) + " seed " + std::to_string(row.seed) + ": w2 " + fmt(row.report.w2) +
                 " npe " + fmt(row.report.npe));
            std::lock_guard lock(rows_mutex);
            rows.push_back(row);
        });
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return std::tie(a.method, a.value, a.seed) < std::tie(b.method, b.value, b.seed);
    });

    {
        auto out = open_output((dir / "sweep.csv").string());
        out << "axis,value,seed,method,diverged," << kEvalCsvHeader << '\n';
        for (const auto& r : rows)
            out << to_string(spec.axis) << ',' << fmt(r.value) << ',' << r.seed << ',' << r.method << ',' << r.diverged << ','
                << eval_csv_row(r.report) << '\n';
    }

    // mean +- std per (method, value) over non-diverged seeds
    std::vector<Series> w2_series, npe_series;
    auto out = open_output((dir / "summary.csv").string());
    out << "axis,value,method,runs,w2_mean,w2_std,npe_mean,npe_std\n";
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        std::vector<double> w2, npe;
        while (j < rows.size() && rows[j].method == rows[i].method && rows[j].value == rows[i].value) {
            if (!rows[j].diverged && rows[j].report.w2) w2.push_back(*rows[j].report.w2);
            if (!rows[j].diverged && rows[j].report.npe) npe.push_back(*rows[j].report.npe);
            ++j;
        }
        const std::string method = rows[i].method;
        out << to_string(spec.axis) << ',' << fmt(rows[i].value) << ',' << method << ',' << w2.size() << ',';
        out << (w2.empty() ? "" : fmt(detail::mean(w2))) << ',' << (w2.empty() ? "" : fmt(detail::sample_std(w2))) << ','
            << (npe.empty() ? "" : fmt(detail::mean(npe))) << ',' << (npe.empty() ? "" : fmt(detail::sample_std(npe))) << '\n';
        auto add = [&](std::vector<Series>& ss, const std::vector<double>& vals) {
            if (vals.empty()) return;
            if (ss.empty() || ss.back().name != method) ss.push_back({method, {}, {}, {}});
            ss.back().x.push_back(rows[i].value);
            ss.back().mean.push_back(detail::mean(vals));
            ss.back().std.push_back(detail::sample_std(vals));
        };
        add(w2_series, w2);
        add(npe_series, npe);
        i = j;
    }

    const bool log_x = spec.axis != SweepAxis::Omega;
    const std::string axis = to_string(spec.axis);
    if (!w2_series.empty())
        write_text((dir / "plots" / "sweep_w2.svg").string(), line_plot_svg(w2_series, axis, "W2", "W2 vs " + axis, log_x));
    if (!npe_series.empty())
        write_text((dir / "plots" / "sweep_npe.svg").string(),
                   line_plot_svg(npe_series, axis, "NPE", "NPE vs " + axis, log_x));
    return rows;
}

}  // namespace lfm
