#pragma once

// Run configuration as a single JSON document. Every field is written out on
// emit, so a frozen config fully determines a run.

#include "lfm/metrics.hpp"
#include "lfm/trainer.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace lfm {

using json = nlohmann::ordered_json;

struct RunConfig {
    TrainConfig train;
    EvalProtocol eval;
    std::string output_dir = "runs/default";

    bool operator==(const RunConfig&) const;
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    require(j.is_object(), "config: '" + where + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        require(ok, "config: unknown key '" + key + "' in " + where);
    }
}

}  // namespace detail

inline json to_json(const SpectralPotential& s) {
    const auto d = static_cast<Eigen::Index>(s.dim());
    std::vector<double> frame;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) frame.push_back(s.frame()(i, j));
    std::vector<double> freq(s.frequencies().data(), s.frequencies().data() + d);
    return {{"dimension", d}, {"frame", frame}, {"frequencies", freq}};
}

inline SpectralPotential spectral_from_json(const json& j) {
    const auto d = detail::get_or<Eigen::Index>(j, "dimension", 0);
    require(d >= 1, "config: anisotropic potential needs a positive dimension");
    const auto frame = detail::get_or<std::vector<double>>(j, "frame", {});
    const auto freq = detail::get_or<std::vector<double>>(j, "frequencies", {});
    require(static_cast<Eigen::Index>(frame.size()) == d * d, "config: frame must hold dimension^2 entries (row-major)");
    require(static_cast<Eigen::Index>(freq.size()) == d, "config: frequencies must hold dimension entries");
    Eigen::MatrixXd q(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index k = 0; k < d; ++k) q(i, k) = frame[static_cast<std::size_t>(i * d + k)];
    return {q, Eigen::Map<const Vector>(freq.data(), d)};
}

inline json to_json(const LagrangianSpec& s) {
    if (s.is_free()) return {{"type", "free"}};
    if (s.is_harmonic()) return {{"type", "harmonic"}, {"omega", s.omega()}};
    json j = to_json(s.spectral());
    j["type"] = "anisotropic";
    return j;
}

/// Parses a Lagrangian. {"type": "pca", "omega_max", "alpha", "samples"}
/// fits an anisotropic potential to the target dataset and is stored resolved.
inline LagrangianSpec lagrangian_from_json(const json& j, const DatasetSpec& target) {
    require(j.is_object(), "config: 'lagrangian' must be an object");
    const auto type = detail::get_or<std::string>(j, "type", "");
    if (type == "free") return LagrangianSpec::free_particle();
    if (type == "harmonic") {
        require(j.contains("omega"), "config: harmonic Lagrangian needs 'omega'");
        return LagrangianSpec::harmonic(detail::get_or<double>(j, "omega", 0.0));
    }
    if (type == "anisotropic") return LagrangianSpec::anisotropic(spectral_from_json(j));
    if (type == "pca") {
        const auto n = detail::get_or<std::size_t>(j, "samples", 10000);
        const auto data = Sampler(target, "pca").sample(n);
        return LagrangianSpec::anisotropic(
            pca_potential(data, detail::get_or<double>(j, "omega_max", 1.0), detail::get_or<double>(j, "alpha", 1.0)));
    }
    throw InvalidArgument("config: unknown lagrangian type '" + type + "' (free, harmonic, anisotropic, pca)");
}

inline json to_json(const DatasetSpec& d) { return {{"name", to_string(d.name)}, {"seed", d.seed}, {"dimension", d.dimension}}; }

inline DatasetSpec dataset_from_json(const json& j, const DatasetSpec& fallback) {
    detail::reject_unknown(j, {"name", "seed", "dimension"}, "dataset");
    DatasetSpec d = fallback;
    if (j.contains("name")) d.name = parse_dataset(j.at("name").get<std::string>());
    d.seed = detail::get_or(j, "seed", d.seed);
    d.dimension = detail::get_or(j, "dimension", d.dimension);
    return d;
}

inline json to_json(const SolveSpec& s) {
    return {{"method", to_string(s.method)}, {"nfe_budget", s.nfe_budget}, {"rtol", s.rtol},           {"atol", s.atol},
            {"initial_step", s.initial_step}, {"max_step", s.max_step},   {"safety", s.safety}};
}

inline SolveSpec solve_spec_from_json(const json& j, SolveSpec s = {}) {
    detail::reject_unknown(j, {"method", "nfe_budget", "rtol", "atol", "initial_step", "max_step", "safety"}, "solver");
    if (j.contains("method")) s.method = parse_method(j.at("method").get<std::string>());
    s.nfe_budget = detail::get_or(j, "nfe_budget", s.nfe_budget);
    s.rtol = detail::get_or(j, "rtol", s.rtol);
    s.atol = detail::get_or(j, "atol", s.atol);
    s.initial_step = detail::get_or(j, "initial_step", s.initial_step);
    s.max_step = detail::get_or(j, "max_step", s.max_step);
    s.safety = detail::get_or(j, "safety", s.safety);
    s.validate();
    return s;
}

inline json to_json(const RunConfig& c) {
    const auto& t = c.train;
    json ema = t.ema_decay ? json(*t.ema_decay) : json(nullptr);
    return {
        {"lagrangian", to_json(t.lagrangian)},
        {"source", to_json(t.source)},
        {"target", to_json(t.target)},
        {"model", {{"width", t.arch.width}, {"depth", t.arch.depth}}},
        {"training",
         {{"ot_batch_size", t.ot_batch_size},
          {"train_batch_size", t.train_batch_size},
          {"steps", t.steps},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"weight_decay", t.adam.weight_decay},
          {"ema_decay", ema},
          {"seed", t.seed},
          {"log_every", t.log_every},
          {"eval_every", t.eval_every}}},
        {"eval",
         {{"n_eval", c.eval.n_eval},
          {"n_npe", c.eval.n_npe},
          {"npe_omega", c.eval.npe_omega},
          {"npe_steps", c.eval.npe_steps},
          {"compute_npe", c.eval.compute_npe},
          {"solver", to_json(c.eval.solver)}}},
        {"output_dir", c.output_dir},
    };
}

/// Missing keys take their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const json& j) {
    detail::reject_unknown(j, {"lagrangian", "source", "target", "model", "training", "eval", "output_dir"}, "config");
    RunConfig c;
    auto& t = c.train;
    if (j.contains("source")) t.source = dataset_from_json(j.at("source"), t.source);
    if (j.contains("target")) t.target = dataset_from_json(j.at("target"), t.target);
    if (j.contains("lagrangian")) t.lagrangian = lagrangian_from_json(j.at("lagrangian"), t.target);
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown(m, {"width", "depth"}, "model");
        t.arch.width = detail::get_or(m, "width", t.arch.width);
        t.arch.depth = detail::get_or(m, "depth", t.arch.depth);
    }
    t.arch.dim = t.source.dim();
    if (j.contains("training")) {
        const auto& r = j.at("training");
        detail::reject_unknown(r,
                               {"ot_batch_size", "train_batch_size", "steps", "lr", "beta1", "beta2", "eps", "weight_decay",
                                "ema_decay", "seed", "log_every", "eval_every"},
                               "training");
        t.ot_batch_size = detail::get_or(r, "ot_batch_size", t.ot_batch_size);
        t.train_batch_size = detail::get_or(r, "train_batch_size", t.train_batch_size);
        t.steps = detail::get_or(r, "steps", t.steps);
        t.adam.lr = detail::get_or(r, "lr", t.adam.lr);
        t.adam.beta1 = detail::get_or(r, "beta1", t.adam.beta1);
        t.adam.beta2 = detail::get_or(r, "beta2", t.adam.beta2);
        t.adam.eps = detail::get_or(r, "eps", t.adam.eps);
        t.adam.weight_decay = detail::get_or(r, "weight_decay", t.adam.weight_decay);
        if (r.contains("ema_decay") && !r.at("ema_decay").is_null()) t.ema_decay = detail::get_or<double>(r, "ema_decay", 0.0);
        t.seed = detail::get_or(r, "seed", t.seed);
        t.log_every = detail::get_or(r, "log_every", t.log_every);
        t.eval_every = detail::get_or(r, "eval_every", t.eval_every);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::reject_unknown(e, {"n_eval", "n_npe", "npe_omega", "npe_steps", "compute_npe", "solver"}, "eval");
        c.eval.n_eval = detail::get_or(e, "n_eval", c.eval.n_eval);
        c.eval.n_npe = detail::get_or(e, "n_npe", c.eval.n_npe);
        c.eval.npe_omega = detail::get_or(e, "npe_omega", c.eval.npe_omega);
        c.eval.npe_steps = detail::get_or(e, "npe_steps", c.eval.npe_steps);
        c.eval.compute_npe = detail::get_or(e, "compute_npe", c.eval.compute_npe);
        if (e.contains("solver")) c.eval.solver = solve_spec_from_json(e.at("solver"), c.eval.solver);
    }
    c.output_dir = detail::get_or(j, "output_dir", c.output_dir);
    c.train.validate();
    require(c.eval.npe_omega > 0.0 && c.eval.npe_omega < kMaxOmega, "config: npe_omega must lie in (0, pi)");
    require(c.eval.npe_steps >= 2 && c.eval.npe_steps % 2 == 0, "config: npe_steps must be even");
    c.eval.solver.validate();
    return c;
}

inline bool RunConfig::operator==(const RunConfig& o) const { return to_json(*this) == to_json(o); }

inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(origin + ": " + e.what());
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline RunConfig load_run_config(const std::string& path) { return run_config_from_json(parse_json_text(read_text_file(path), path)); }

inline std::string emit(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace lfm
