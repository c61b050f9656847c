// lfm: train, sample from and evaluate Lagrangian flow matching models.

#include "lfm/run.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace lfm;

namespace {

// Flags that override fields of the run-config JSON.
struct Overrides {
    std::optional<std::string> lagrangian;
    std::optional<double> omega;
    std::optional<std::string> source, target;
    std::optional<std::size_t> steps, ot_batch, train_batch, width, depth, eval_every, log_every;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr, ema_decay;
    std::optional<std::string> out;

    void attach(CLI::App* app, bool with_out = true) {
        app->add_option("--lagrangian", lagrangian, "free or harmonic (use the config file for anisotropic/pca)");
        app->add_option("--omega", omega, "harmonic frequency; implies --lagrangian harmonic");
        app->add_option("--source", source, "source dataset");
        app->add_option("--target", target, "target dataset");
        app->add_option("--steps", steps, "optimizer steps");
        app->add_option("--seed", seed, "run seed");
        app->add_option("--ot-batch-size", ot_batch, "OT batch size n");
        app->add_option("--train-batch-size", train_batch, "training batch size m (multiple of n)");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--ema-decay", ema_decay, "enable EMA weights with this decay");
        app->add_option("--width", width, "hidden width");
        app->add_option("--depth", depth, "hidden layers");
        app->add_option("--eval-every", eval_every, "periodic evaluation interval (0: off)");
        app->add_option("--log-every", log_every, "training-log interval");
        if (with_out) app->add_option("--out", out, "output directory");
    }

    void apply(json& j) const {
        if (omega) j["lagrangian"] = {{"type", "harmonic"}, {"omega", *omega}};
        else if (lagrangian) {
            require(*lagrangian == "free", "--lagrangian harmonic needs --omega");
            j["lagrangian"] = {{"type", "free"}};
        }
        if (source) j["source"]["name"] = *source;
        if (target) j["target"]["name"] = *target;
        if (steps) j["training"]["steps"] = *steps;
        if (seed) j["training"]["seed"] = *seed;
        if (ot_batch) j["training"]["ot_batch_size"] = *ot_batch;
        if (train_batch) j["training"]["train_batch_size"] = *train_batch;
        if (lr) j["training"]["lr"] = *lr;
        if (ema_decay) j["training"]["ema_decay"] = *ema_decay;
        if (eval_every) j["training"]["eval_every"] = *eval_every;
        if (log_every) j["training"]["log_every"] = *log_every;
        if (width) j["model"]["width"] = *width;
        if (depth) j["model"]["depth"] = *depth;
        if (out) j["output_dir"] = *out;
    }
};

RunConfig resolve_config(const std::string& path, const Overrides& o) {
    json j = path.empty() ? json::object() : parse_json_text(read_text_file(path), path);
    o.apply(j);
    return run_config_from_json(j);
}

struct SolverFlags {
    std::string method = "rk4";
    int nfe = 400;
    double rtol = 1e-5, atol = 1e-5;

    void attach(CLI::App* app) {
        app->add_option("--method", method, "euler, midpoint, rk4 or adaptive")->capture_default_str();
        app->add_option("--nfe", nfe, "function-evaluation budget for fixed-step methods")->capture_default_str();
        app->add_option("--rtol", rtol, "adaptive relative tolerance")->capture_default_str();
        app->add_option("--atol", atol, "adaptive absolute tolerance")->capture_default_str();
    }

    [[nodiscard]] SolveSpec spec() const {
        const Method m = parse_method(method);
        SolveSpec s = m == Method::Adaptive ? SolveSpec::adaptive(rtol, atol) : SolveSpec::fixed(m, nfe);
        s.validate();
        return s;
    }
};

template <typename T>
std::vector<T> parse_list(const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        try {
            if constexpr (std::is_same_v<T, double>) out.push_back(std::stod(cell));
            else out.push_back(static_cast<T>(std::stoull(cell)));
        } catch (const std::logic_error&) {
            throw InvalidArgument("bad list entry '" + cell + "'");
        }
    }
    return out;
}

std::string report_json(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"w2", opt(r.w2)},
                {"npe", opt(r.npe)},
                {"coupling_excess", r.coupling_excess},
                {"path_excess", r.path_excess},
                {"kinetic_energy", r.kinetic_energy},
                {"reference_cost", r.reference_cost},
                {"model_pair_energy", r.model_pair_energy},
                {"npe_omega", r.npe_omega},
                {"nfe", r.nfe},
                {"n_eval", r.n_eval},
                {"n_npe", r.n_npe},
                {"runtime_seconds", r.runtime_seconds}}
        .dump(2);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lagrangian flow matching"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
    std::string train_config;
    bool no_eval = false;
    Overrides train_over;
    train_cmd->add_option("--config", train_config, "run-config JSON (defaults for missing keys)");
    train_cmd->add_flag("--no-eval", no_eval, "skip the final held-out evaluation");
    train_over.attach(train_cmd);

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "sample from a trained checkpoint");
    std::string gen_ckpt, gen_out = "samples.csv", gen_svg, gen_traj;
    std::size_t gen_n = 2048;
    std::uint64_t gen_seed = 0;
    SolverFlags gen_solver;
    gen_cmd->add_option("--checkpoint", gen_ckpt, "checkpoint.bin")->required();
    gen_cmd->add_option("-n,--n", gen_n, "number of samples")->capture_default_str();
    gen_cmd->add_option("--seed", gen_seed, "source sampling seed")->capture_default_str();
    gen_cmd->add_option("--out", gen_out, "samples CSV")->capture_default_str();
    gen_cmd->add_option("--svg", gen_svg, "also write a trajectory figure");
    gen_cmd->add_option("--trajectories", gen_traj, "also write the trajectory grid as CSV");
    gen_solver.attach(gen_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on held-out batches");
    std::string eval_ckpt, eval_config, eval_out;
    std::optional<std::size_t> eval_n, eval_npe_n;
    std::optional<double> eval_npe_omega;
    std::optional<std::uint64_t> eval_seed;
    std::optional<std::string> eval_method;
    std::optional<int> eval_nfe;
    bool eval_json = false, eval_skip_npe = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint.bin")->required();
    eval_cmd->add_option("--config", eval_config, "JSON with an \"eval\" section overriding the checkpoint's protocol");
    eval_cmd->add_option("--n-eval", eval_n, "held-out batch size for W2");
    eval_cmd->add_option("--n-npe", eval_npe_n, "sub-batch size for NPE");
    eval_cmd->add_option("--npe-omega", eval_npe_omega, "reference frequency of NPE");
    eval_cmd->add_option("--seed", eval_seed, "evaluation seed (default: the run seed)");
    eval_cmd->add_option("--method", eval_method, "sampling solver");
    eval_cmd->add_option("--nfe", eval_nfe, "sampling budget");
    eval_cmd->add_flag("--no-npe", eval_skip_npe, "W2 only");
    eval_cmd->add_option("--out", eval_out, "write the report row to this CSV");
    eval_cmd->add_flag("--json", eval_json, "print the report as JSON instead of CSV");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "train/evaluate over an axis x seeds and aggregate");
    std::string sweep_config, sweep_axis = "omega", sweep_values, sweep_seeds = "0", sweep_methods = "rk4", sweep_out = "sweep";
    sweep_cmd->add_option("--config", sweep_config, "base run-config JSON");
    sweep_cmd->add_option("--axis", sweep_axis, "omega, nfe or ot_batch_size")->capture_default_str();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated axis values")->required();
    sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated seeds")->capture_default_str();
    sweep_cmd->add_option("--methods", sweep_methods, "nfe axis: comma-separated fixed-step methods")->capture_default_str();
    sweep_cmd->add_option("--out", sweep_out, "output directory")->capture_default_str();
    Overrides sweep_over;
    sweep_over.attach(sweep_cmd, false);
    sweep_cmd->footer("Cells run on LFM_WORKERS threads (default 1).");

    // dump-data
    auto* dump_cmd = app.add_subcommand("dump-data", "write a synthetic dataset sample as CSV");
    std::string dump_name = "moons", dump_out;
    std::size_t dump_n = 1000, dump_dim = 2;
    std::uint64_t dump_seed = 0;
    dump_cmd->add_option("--dataset", dump_name, "gaussian, eightgaussians, moons, scurve")->capture_default_str();
    dump_cmd->add_option("-n,--n", dump_n, "number of points")->capture_default_str();
    dump_cmd->add_option("--seed", dump_seed, "dataset seed")->capture_default_str();
    dump_cmd->add_option("--dim", dump_dim, "dimension (gaussian only)")->capture_default_str();
    dump_cmd->add_option("--out", dump_out, "CSV path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            const RunConfig cfg = resolve_config(train_config, train_over);
            std::cerr << "training " << cfg.train.lagrangian.name() << " -> " << cfg.output_dir << '\n';
            const auto run = run_training(cfg, !no_eval, &std::cerr);
            if (run.report) std::cout << kEvalCsvHeader << '\n' << eval_csv_row(*run.report) << '\n';
            return run.result.diverged ? 3 : 0;
        }

        if (*gen_cmd) {
            const auto ck = load_checkpoint(gen_ckpt);
            auto solver = gen_solver.spec();
            solver.record = !gen_svg.empty() || !gen_traj.empty();
            const auto g = generate(ck, solver, gen_n, gen_seed);
            write_points_csv(gen_out, g.solution.terminal, ck.config.train.source.dim());
            if (!gen_traj.empty()) write_trajectories_csv(gen_traj, g.solution);
            if (!gen_svg.empty()) {
                const auto tgt = Sampler(stream_spec(ck.config.train.target, gen_seed, "plot-target"), "plot-target").sample(1024);
                write_text(gen_svg, trajectory_svg(g.source.points(), tgt.points(), g.solution.states, 128,
                                                   to_string(solver.method) + ", NFE " + std::to_string(g.solution.nfe)));
            }
            std::cout << "samples " << gen_n << " nfe " << g.solution.nfe << '\n';
            return 0;
        }

        if (*eval_cmd) {
            const auto ck = load_checkpoint(eval_ckpt);
            RunConfig cfg = ck.config;
            if (!eval_config.empty()) {
                json j = to_json(cfg);
                const json extra = parse_json_text(read_text_file(eval_config), eval_config);
                require(extra.contains("eval"), eval_config + ": expected an \"eval\" section");
                j["eval"].update(extra.at("eval"));
                cfg = run_config_from_json(j);
            }
            if (eval_n) cfg.eval.n_eval = *eval_n;
            if (eval_npe_n) cfg.eval.n_npe = *eval_npe_n;
            if (eval_npe_omega) cfg.eval.npe_omega = *eval_npe_omega;
            if (eval_skip_npe) cfg.eval.compute_npe = false;
            if (eval_method || eval_nfe) {
                SolverFlags f;
                f.method = eval_method.value_or(to_string(cfg.eval.solver.method));
                f.nfe = eval_nfe.value_or(cfg.eval.solver.nfe_budget);
                cfg.eval.solver = f.spec();
            }
            if (eval_seed) cfg.train.seed = *eval_seed;
            cfg = run_config_from_json(to_json(cfg));
            const auto report = evaluate_model(ck.inference_model(), cfg);
            if (!eval_out.empty()) write_eval_csv(eval_out, report);
            if (eval_json) std::cout << report_json(report) << '\n';
            else std::cout << kEvalCsvHeader << '\n' << eval_csv_row(report) << '\n';
            return 0;
        }

        if (*sweep_cmd) {
            SweepSpec spec;
            spec.axis = parse_axis(sweep_axis);
            spec.values = parse_list<double>(sweep_values);
            spec.seeds = parse_list<std::uint64_t>(sweep_seeds);
            spec.methods.clear();
            std::stringstream ms(sweep_methods);
            for (std::string m; std::getline(ms, m, ',');)
                if (!m.empty()) spec.methods.push_back(parse_method(m));
            spec.base = resolve_config(sweep_config, sweep_over);
            spec.workers = workers_from_env();
            const auto rows = run_sweep(spec, sweep_out, &std::cerr);
            std::cout << read_text_file((fs::path(sweep_out) / "summary.csv").string());
            return std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.diverged; }) ? 3 : 0;
        }

        if (*dump_cmd) {
            const DatasetSpec ds{parse_dataset(dump_name), dump_seed, dump_dim};
            const RowMatrix x = dump_n ? sample(ds, dump_n).points() : RowMatrix(0, static_cast<Eigen::Index>(ds.dim()));
            if (dump_out.empty()) write_points_csv(std::cout, x, ds.dim());
            else write_points_csv(dump_out, x, ds.dim());
            return 0;
        }
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
