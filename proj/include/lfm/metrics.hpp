#pragma once

// Evaluation: empirical 2-Wasserstein distance, kinetic energy of a flow, the
// harmonic-OT reference cost, and the normalized path energy
//
//   NPE = |K / C - 1|,   K - C = (kbar - C) + (K - kbar)
//                                 coupling      path
//                                 excess        excess
//
// where K is the flow's kinetic energy, C the optimal mean harmonic-geodesic
// kinetic energy between the marginals and kbar the mean harmonic-geodesic
// kinetic energy of the pairs (x0, phi_1(x0)) the flow itself produces.

#include "lfm/coupling.hpp"
#include "lfm/odesolve.hpp"
#include "lfm/synthdata.hpp"
#include "lfm/trainer.hpp"

#include <chrono>
#include <optional>

namespace lfm {

struct EvalReport {
    std::optional<double> w2;
    std::optional<double> npe;  // absent when the reference cost vanishes
    double coupling_excess = 0.0;
    double path_excess = 0.0;
    double kinetic_energy = 0.0;
    double reference_cost = 0.0;
    double model_pair_energy = 0.0;  // kbar
    double npe_omega = 1.0;
    long nfe = 0;
    std::size_t n_eval = 0;
    std::size_t n_npe = 0;
    double runtime_seconds = 0.0;
};

/// Composite Simpson rule over uniformly spaced samples (odd sample count).
inline double composite_simpson(const Vector& f, double h) {
    const Eigen::Index n = f.size() - 1;
    require(n >= 2 && n % 2 == 0, "composite_simpson: need an even number of intervals");
    double s = f[0] + f[n];
    for (Eigen::Index i = 1; i < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f[i];
    return s * h / 3.0;
}

/// sqrt(mean |a_i - b_sigma(i)|^2) under the optimal assignment.
inline double wasserstein2(const PointBatch& a, const PointBatch& b) {
    require(a.size() == b.size(), "wasserstein2: batch sizes differ");
    require(a.dim() == b.dim(), "wasserstein2: dimension mismatch");
    const CostMatrix m{detail::gram_form(a.points(), b.points(), 1.0, 1.0, -2.0).cwiseMax(0.0)};
    return std::sqrt(std::max(0.0, solve_assignment(m).mean_cost));
}

struct FlowEnergy {
    double kinetic_energy = 0.0;
    PointBatch terminal;  // phi_1(x0), row-aligned with the source
    long nfe = 0;
};

/// Kinetic energy of the flow started at `source`: RK4 with `steps` steps,
/// 1/2 |v(phi_t, t)|^2 sampled on the step grid and integrated by composite
/// Simpson per point, then averaged over the batch.
template <VectorField Field>
FlowEnergy flow_kinetic_energy(const Field& field, const PointBatch& source, int steps = 200) {
    require(steps >= 2 && steps % 2 == 0, "flow_kinetic_energy: step count must be even");
    SolveSpec spec = SolveSpec::fixed(Method::RK4, 4 * steps);
    spec.record = true;
    const SolveResult sol = integrate(field, source.points(), spec);

    const auto n = source.points().rows();
    RowMatrix energy(n, steps + 1);  // per point, per grid node
    for (int k = 0; k <= steps; ++k) {
        const RowMatrix v = field(sol.states[static_cast<std::size_t>(k)], sol.times[static_cast<std::size_t>(k)]);
        if (!v.allFinite()) throw NumericalError("flow_kinetic_energy: non-finite field output");
        energy.col(k) = 0.5 * v.rowwise().squaredNorm();
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += composite_simpson(energy.row(i).transpose(), 1.0 / steps);
    return {total / static_cast<double>(n), PointBatch(sol.terminal), sol.nfe + steps + 1};
}

/// Optimal mean harmonic-geodesic kinetic energy between two batches.
inline double harmonic_ot_cost(double omega, const PointBatch& source, const PointBatch& target) {
    const auto spec = LagrangianSpec::harmonic(omega);
    return solve_assignment(cost_matrix(spec, source, target, CostKind::KineticEnergy)).mean_cost;
}

/// Mean harmonic-geodesic kinetic energy of row-aligned pairs.
inline double paired_kinetic_energy(double omega, const PointBatch& source, const PointBatch& terminal) {
    require(source.size() == terminal.size() && source.dim() == terminal.dim(), "paired_kinetic_energy: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) s += pair_kinetic_energy(omega, Endpoints(source.row(i), terminal.row(i)));
    return s / static_cast<double>(source.size());
}

/// Fills the energy fields of a report: K from the flow, C between `source`
/// and the independent `target`, and the decomposition.
template <VectorField Field>
EvalReport npe(const Field& field, double omega, const PointBatch& source, const PointBatch& target, int steps = 200) {
    const auto flow = flow_kinetic_energy(field, source, steps);
    EvalReport r;
    r.npe_omega = omega;
    r.n_npe = source.size();
    r.kinetic_energy = flow.kinetic_energy;
    r.reference_cost = harmonic_ot_cost(omega, source, target);
    r.model_pair_energy = paired_kinetic_energy(omega, source, flow.terminal);
    r.coupling_excess = r.model_pair_energy - r.reference_cost;
    r.path_excess = r.kinetic_energy - r.model_pair_energy;
    if (r.reference_cost >= 1e-12) r.npe = std::abs(r.kinetic_energy / r.reference_cost - 1.0);
    return r;
}

struct EvalProtocol {
    std::size_t n_eval = 2048;
    std::size_t n_npe = 512;
    double npe_omega = 1.0;
    int npe_steps = 200;
    SolveSpec solver = SolveSpec::fixed(Method::RK4, 400);
    bool compute_npe = true;
};

/// Held-out evaluation batches of a run, shared across methods with the same seed.
struct EvalBatches {
    PointBatch source;
    PointBatch target;
    PointBatch npe_target;
};

inline EvalBatches eval_batches(const DatasetSpec& source, const DatasetSpec& target, const EvalProtocol& p, std::uint64_t seed) {
    require(p.n_eval >= 1, "EvalProtocol: n_eval must be at least 1");
    require(p.n_npe >= 1 && p.n_npe <= p.n_eval, "EvalProtocol: n_npe must lie in [1, n_eval]");
    EvalBatches b;
    b.source = Sampler(stream_spec(source, seed, "eval-source"), "eval-source").sample(p.n_eval);
    b.target = Sampler(stream_spec(target, seed, "eval-target"), "eval-target").sample(p.n_eval);
    b.npe_target = Sampler(stream_spec(target, seed, "npe-target"), "npe-target").sample(p.n_npe);
    return b;
}

/// W2 of generated samples against held-out target samples, plus NPE on a
/// source sub-batch against fresh target samples.
template <VectorField Field>
EvalReport evaluate(const Field& field, const EvalBatches& batches, const EvalProtocol& p) {
    const auto start = std::chrono::steady_clock::now();
    EvalReport r;
    if (p.compute_npe) r = npe(field, p.npe_omega, batches.source.slice(0, p.n_npe), batches.npe_target, p.npe_steps);
    const SolveResult gen = integrate(field, batches.source.points(), p.solver);
    r.w2 = wasserstein2(PointBatch(gen.terminal), batches.target);
    r.nfe = gen.nfe;
    r.n_eval = batches.source.size();
    r.npe_omega = p.npe_omega;
    r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

}  // namespace lfm
