#pragma once

// Mini-batch Lagrangian flow matching: couple each OT batch under the action
// cost, draw one time per matched pair, and regress the network onto the
// closed-form least-action velocity at the interpolated position.

#include "lfm/coupling.hpp"
#include "lfm/lagrangian.hpp"
#include "lfm/neuralnet.hpp"
#include "lfm/synthdata.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <vector>

namespace lfm {

struct TrainConfig {
    LagrangianSpec lagrangian = LagrangianSpec::free_particle();
    DatasetSpec source{Dataset::Gaussian, 0, 2};
    DatasetSpec target{Dataset::Moons, 0, 2};
    Architecture arch{2, 64, 3};
    std::size_t ot_batch_size = 256;
    std::size_t train_batch_size = 256;
    std::size_t steps = 20000;
    AdamConfig adam{};
    std::optional<double> ema_decay;
    std::uint64_t seed = 0;
    std::size_t log_every = 1;
    std::size_t eval_every = 0;  // 0: no periodic evaluation

    void validate() const {
        require(ot_batch_size >= 1, "TrainConfig: ot_batch_size must be at least 1");
        require(train_batch_size >= 1, "TrainConfig: train_batch_size must be at least 1");
        require(train_batch_size % ot_batch_size == 0, "TrainConfig: train_batch_size must be a multiple of ot_batch_size");
        require(source.dim() == target.dim(), "TrainConfig: source and target dimensions differ");
        require(arch.dim == source.dim(), "TrainConfig: model dimension does not match data");
        require(log_every >= 1, "TrainConfig: log_every must be at least 1");
        if (lagrangian.is_anisotropic())
            require(lagrangian.spectral().dim() == source.dim(), "TrainConfig: potential dimension does not match data");
        if (ema_decay) require(*ema_decay >= 0.0 && *ema_decay <= 1.0, "TrainConfig: ema_decay must lie in [0, 1]");
    }
};

struct TrainRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double elapsed_seconds = 0.0;
    std::optional<double> w2;
    std::optional<double> npe;
};

struct Targets {
    RowMatrix positions;
    RowMatrix velocities;
};

/// Positions and velocities of the least-action paths of the matched pairs
/// (source i, target plan.assignment[i]) at the given times.
inline Targets make_targets(const LagrangianSpec& spec, const CouplingPlan& plan, const PointBatch& source,
                            const PointBatch& target, const Vector& times) {
    const std::size_t n = source.size();
    require(plan.assignment.size() == n && target.size() == n, "make_targets: plan does not pair the batches");
    require(static_cast<std::size_t>(times.size()) == n, "make_targets: one time per pair required");
    Targets out{RowMatrix(source.points().rows(), source.points().cols()), RowMatrix(source.points().rows(), source.points().cols())};
    for (std::size_t i = 0; i < n; ++i) {
        const Endpoints ep(source.row(i), target.row(plan.assignment[i]));
        const auto r = static_cast<Eigen::Index>(i);
        out.positions.row(r) = trajectory(spec, ep, times[r]).transpose();
        out.velocities.row(r) = trajectory_velocity(spec, ep, times[r]).transpose();
    }
    return out;
}

/// Seeds of the independent sampling streams of a training run.
inline DatasetSpec stream_spec(const DatasetSpec& ds, std::uint64_t run_seed, std::string_view role) {
    DatasetSpec s = ds;
    s.seed = derive_seed(run_seed ^ splitmix64(ds.seed), role);
    return s;
}

struct TrainResult {
    VelocityModel model;
    std::optional<EmaState> ema;
    std::vector<TrainRecord> records;
    std::size_t steps_done = 0;
    bool diverged = false;
    std::string diagnostic;

    /// Parameters used for inference: the EMA shadow when present.
    [[nodiscard]] VelocityModel inference_model() const {
        if (!ema) return model;
        return {model.architecture(), ema->shadow()};
    }
};

/// Periodic evaluation hook: returns (w2, npe) for the current model.
using EvalHook = std::function<std::pair<std::optional<double>, std::optional<double>>(const VelocityModel&, std::size_t step)>;

class Trainer {
public:
    explicit Trainer(TrainConfig cfg)
        : cfg_((cfg.validate(), std::move(cfg))),
          source_(stream_spec(cfg_.source, cfg_.seed, "train-source"), "train-source"),
          target_(stream_spec(cfg_.target, cfg_.seed, "train-target"), "train-target"),
          times_(make_engine(cfg_.seed, "train-time")),
          model_(VelocityModel::initialized(cfg_.arch, derive_seed(cfg_.seed, "model"))),
          adam_(cfg_.adam, model_.parameter_count()) {
        if (cfg_.ema_decay) ema_ = EmaState(*cfg_.ema_decay, model_.parameters());
    }

    [[nodiscard]] const VelocityModel& model() const { return model_; }
    [[nodiscard]] const TrainConfig& config() const { return cfg_; }

    /// Draws, couples and aggregates one training batch.
    Targets next_batch(Vector& times_out, std::vector<CouplingPlan>* plans = nullptr) {
        const std::size_t n = cfg_.ot_batch_size;
        const std::size_t groups = cfg_.train_batch_size / n;
        const auto d = static_cast<Eigen::Index>(cfg_.source.dim());
        const auto m = static_cast<Eigen::Index>(cfg_.train_batch_size);
        Targets all{RowMatrix(m, d), RowMatrix(m, d)};
        times_out.resize(m);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t g = 0; g < groups; ++g) {
            const PointBatch x0 = source_.sample(n);
            const PointBatch x1 = target_.sample(n);
            const CouplingPlan plan = couple(cfg_.lagrangian, x0, x1);
            Vector t(static_cast<Eigen::Index>(n));
            for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = unif(times_);
            const Targets part = make_targets(cfg_.lagrangian, plan, x0, x1, t);
            const auto off = static_cast<Eigen::Index>(g * n);
            all.positions.middleRows(off, t.size()) = part.positions;
            all.velocities.middleRows(off, t.size()) = part.velocities;
            times_out.segment(off, t.size()) = t;
            if (plans) plans->push_back(plan);
        }
        return all;
    }

    /// One optimization step; returns the batch loss before the update.
    double step() {
        Vector t;
        const Targets batch = next_batch(t);
        const auto lg = model_.loss_and_grad(batch.positions, t, batch.velocities);
        adam_.step(model_.mutable_parameters(), lg.grad);
        if (ema_) ema_->update(model_.parameters());
        return lg.loss;
    }

    TrainResult run(const EvalHook& hook = {}) {
        TrainResult res;
        const auto start = std::chrono::steady_clock::now();
        auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
        for (std::size_t s = 1; s <= cfg_.steps; ++s) {
            double loss = 0.0;
            try {
                loss = step();
            } catch (const NumericalError& e) {
                res.diverged = true;
                res.diagnostic = "diverged at step " + std::to_string(s) + ": " + e.what();
                break;
            }
            res.steps_done = s;
            const bool eval_now = hook && cfg_.eval_every > 0 && s % cfg_.eval_every == 0;
            if (s % cfg_.log_every == 0 || eval_now) {
                TrainRecord rec{s, loss, elapsed(), std::nullopt, std::nullopt};
                if (eval_now) {
                    const auto [w2, npe] = hook(ema_ ? VelocityModel(model_.architecture(), ema_->shadow()) : model_, s);
                    rec.w2 = w2;
                    rec.npe = npe;
                }
                res.records.push_back(rec);
            }
        }
        res.model = model_;
        res.ema = ema_;
        return res;
    }

private:
    TrainConfig cfg_;
    Sampler source_;
    Sampler target_;
    Engine times_;
    VelocityModel model_;
    AdamState adam_;
    std::optional<EmaState> ema_;
};

/// Runs the full training loop for a configuration.
inline TrainResult train(const TrainConfig& cfg, const EvalHook& hook = {}) { return Trainer(cfg).run(hook); }

}  // namespace lfm
