#pragma once

// Batched explicit integrators for dx/dt = v(x, t) on t in [0, 1].
//
// A field is any callable (const RowMatrix& x, double t) -> RowMatrix that
// evaluates the velocity of every row at a shared time. All rows advance with
// one shared step sequence; nfe counts calls to the field.

#include "lfm/common.hpp"
#include "lfm/neuralnet.hpp"

#include <algorithm>
#include <concepts>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lfm {

template <typename F>
concept VectorField = requires(const F& f, const RowMatrix& x, double t) {
    { f(x, t) } -> std::convertible_to<RowMatrix>;
};

/// Adapts a network to the field interface.
struct ModelField {
    const VelocityModel* model;
    RowMatrix operator()(const RowMatrix& x, double t) const { return model->forward(x, t); }
};

enum class Method { Euler, Midpoint, RK4, Adaptive };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::Euler: return "euler";
        case Method::Midpoint: return "midpoint";
        case Method::RK4: return "rk4";
        case Method::Adaptive: return "adaptive";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "euler") return Method::Euler;
    if (s == "midpoint") return Method::Midpoint;
    if (s == "rk4") return Method::RK4;
    if (s == "adaptive" || s == "dopri5") return Method::Adaptive;
    throw InvalidArgument("unknown solver method '" + s + "'");
}

/// Field evaluations per step of a fixed-step method.
inline int evals_per_step(Method m) {
    switch (m) {
        case Method::Euler: return 1;
        case Method::Midpoint: return 2;
        case Method::RK4: return 4;
        case Method::Adaptive: return 6;
    }
    return 1;
}

struct SolveSpec {
    Method method = Method::RK4;
    int nfe_budget = 400;  // fixed-step methods: steps = nfe_budget / k
    double rtol = 1e-5;
    double atol = 1e-5;
    double initial_step = 0.01;
    double max_step = 0.5;
    double safety = 0.9;
    bool record = false;

    [[nodiscard]] int steps() const { return nfe_budget / evals_per_step(method); }

    void validate() const {
        if (method == Method::Adaptive) {
            require(rtol > 0.0 && atol > 0.0, "SolveSpec: tolerances must be positive");
            require(initial_step > 0.0 && max_step > 0.0, "SolveSpec: step bounds must be positive");
        } else {
            const int k = evals_per_step(method);
            require(nfe_budget > 0 && nfe_budget % k == 0,
                    "SolveSpec: nfe_budget must be a positive multiple of " + std::to_string(k) + " for " + to_string(method));
        }
    }

    static SolveSpec fixed(Method m, int nfe) {
        SolveSpec s;
        s.method = m;
        s.nfe_budget = nfe;
        return s;
    }
    static SolveSpec adaptive(double rtol = 1e-5, double atol = 1e-5) {
        SolveSpec s;
        s.method = Method::Adaptive;
        s.rtol = rtol;
        s.atol = atol;
        return s;
    }
};

struct SolveResult {
    RowMatrix terminal;
    long nfe = 0;
    long accepted_steps = 0;
    long rejected_steps = 0;
    std::vector<double> times;        // filled when recording
    std::vector<RowMatrix> states;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // fifth-order minus embedded fourth-order weights
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

/// Integrates every row of x0 from t = 0 to t = 1.
template <VectorField Field>
SolveResult integrate(const Field& field, const RowMatrix& x0, const SolveSpec& spec) {
    spec.validate();
    SolveResult res;
    auto eval = [&](const RowMatrix& x, double t) {
        ++res.nfe;
        RowMatrix v = field(x, t);
        if (!v.allFinite()) throw NumericalError("integrate: field returned non-finite values");
        return v;
    };
    auto record = [&](double t, const RowMatrix& x) {
        if (!spec.record) return;
        res.times.push_back(t);
        res.states.push_back(x);
    };

    RowMatrix x = x0;
    record(0.0, x);

    if (spec.method != Method::Adaptive) {
        const int steps = spec.steps();
        const double h = 1.0 / steps;
        for (int s = 0; s < steps; ++s) {
            const double t = s * h;
            switch (spec.method) {
                case Method::Euler: x += h * eval(x, t); break;
                case Method::Midpoint: {
                    const RowMatrix k1 = eval(x, t);
                    x += h * eval(x + 0.5 * h * k1, t + 0.5 * h);
                    break;
                }
                case Method::RK4: {
                    const RowMatrix k1 = eval(x, t);
                    const RowMatrix k2 = eval(x + 0.5 * h * k1, t + 0.5 * h);
                    const RowMatrix k3 = eval(x + 0.5 * h * k2, t + 0.5 * h);
                    const RowMatrix k4 = eval(x + h * k3, t + h);
                    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    break;
                }
                case Method::Adaptive: break;
            }
            ++res.accepted_steps;
            record(s + 1 == steps ? 1.0 : t + h, x);
        }
        res.terminal = std::move(x);
        return res;
    }

    // Dormand-Prince 5(4) with PI step control; first-same-as-last reuse of k7.
    using DP = detail::DormandPrince;
    constexpr double alpha = 0.7 / 5.0;
    constexpr double beta = 0.4 / 5.0;
    double t = 0.0;
    double h = std::min(spec.initial_step, spec.max_step);
    double err_prev = 1e-4;
    RowMatrix k1 = eval(x, t);
    while (t < 1.0) {
        if (h < 1e-12) throw NumericalError("integrate: adaptive step size underflow at t = " + std::to_string(t));
        const bool last = t + h >= 1.0;
        if (last) h = 1.0 - t;
        const RowMatrix k2 = eval(x + h * DP::a21 * k1, t + DP::c2 * h);
        const RowMatrix k3 = eval(x + h * (DP::a31 * k1 + DP::a32 * k2), t + DP::c3 * h);
        const RowMatrix k4 = eval(x + h * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3), t + DP::c4 * h);
        const RowMatrix k5 = eval(x + h * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4), t + DP::c5 * h);
        const RowMatrix k6 =
            eval(x + h * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5), t + h);
        RowMatrix xn = x + h * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
        const RowMatrix k7 = eval(xn, t + h);
        const RowMatrix err = h * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 + DP::e6 * k6 + DP::e7 * k7);

        const RowMatrix scale = (spec.rtol * x.cwiseAbs().cwiseMax(xn.cwiseAbs())).cwiseMax(spec.atol);
        const double norm = std::sqrt(err.cwiseQuotient(scale).squaredNorm() / static_cast<double>(err.size()));

        if (norm <= 1.0) {
            t = last ? 1.0 : t + h;
            x = std::move(xn);
            k1 = k7;
            ++res.accepted_steps;
            record(t, x);
            double factor = norm == 0.0 ? 10.0 : spec.safety * std::pow(norm, -alpha) * std::pow(err_prev, beta);
            factor = std::clamp(factor, 0.2, 10.0);
            err_prev = std::max(norm, 1e-4);
            h = std::min(h * factor, spec.max_step);
        } else {
            ++res.rejected_steps;
            h *= std::max(0.2, spec.safety * std::pow(norm, -alpha));
        }
    }
    res.terminal = std::move(x);
    return res;
}

}  // namespace lfm
