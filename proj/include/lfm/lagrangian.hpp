#pragma once

// Closed-form least-action objects for three Lagrangian families:
//
//   free particle      L(x, v) = 1/2 |v|^2
//   isotropic harmonic L(x, v) = 1/2 |v|^2 - 1/2 w^2 |x|^2,       0 < w < pi
//   anisotropic        L(x, v) = 1/2 |v|^2 - 1/2 x^T A x,          A = Q diag(w_k^2) Q^T
//
// The anisotropic family is evaluated mode by mode in the eigenframe Q, where
// it decouples into scalar harmonic problems.

#include "lfm/common.hpp"
#include "lfm/linalg.hpp"

#include <variant>
#include <vector>

namespace lfm {

/// Frequencies at or above this are rejected; sin(w) vanishes at pi.
inline constexpr double kMaxOmega = kPi - 1e-6;
/// Below this frequency the harmonic ratios are replaced by their affine limits.
inline constexpr double kAffineOmega = 1e-6;

struct FreeParticle {};

struct Harmonic {
    double omega;
};

/// SPD potential A = Q diag(w_k^2) Q^T stored through its spectral data.
class SpectralPotential {
public:
    SpectralPotential(Eigen::MatrixXd frame, Vector frequencies) : frame_(std::move(frame)), frequencies_(std::move(frequencies)) {
        const auto d = frame_.rows();
        require(d >= 1, "SpectralPotential: dimension must be positive");
        require(frame_.cols() == d, "SpectralPotential: frame must be square");
        require(frequencies_.size() == d, "SpectralPotential: frequency count must match dimension");
        require(frame_.allFinite() && frequencies_.allFinite(), "SpectralPotential: non-finite entry");
        const double orth = (frame_.transpose() * frame_ - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
        require(orth <= 1e-10, "SpectralPotential: frame is not orthogonal");
        for (Eigen::Index k = 0; k < d; ++k)
            require(frequencies_[k] > 0.0 && frequencies_[k] < kMaxOmega, "SpectralPotential: frequencies must lie in (0, pi)");
    }

    static SpectralPotential isotropic(std::size_t dim, double omega) {
        const auto d = static_cast<Eigen::Index>(dim);
        return {Eigen::MatrixXd::Identity(d, d), Vector::Constant(d, omega)};
    }

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(frame_.rows()); }
    [[nodiscard]] const Eigen::MatrixXd& frame() const { return frame_; }
    [[nodiscard]] const Vector& frequencies() const { return frequencies_; }

    /// Q f(w_k) Q^T for a scalar function of the mode frequency.
    template <typename F>
    [[nodiscard]] Eigen::MatrixXd matrix_function(F&& f) const {
        Vector diag(frequencies_.size());
        for (Eigen::Index k = 0; k < diag.size(); ++k) diag[k] = f(frequencies_[k]);
        return frame_ * diag.asDiagonal() * frame_.transpose();
    }

    [[nodiscard]] Eigen::MatrixXd potential() const {
        return matrix_function([](double w) { return w * w; });
    }
    /// sqrt(A) cot(sqrt(A))
    [[nodiscard]] Eigen::MatrixXd phi() const {
        return matrix_function([](double w) { return w * std::cos(w) / std::sin(w); });
    }
    /// sqrt(A) csc(sqrt(A))
    [[nodiscard]] Eigen::MatrixXd psi() const {
        return matrix_function([](double w) { return w / std::sin(w); });
    }

private:
    Eigen::MatrixXd frame_;
    Vector frequencies_;
};

struct Anisotropic {
    SpectralPotential spectral;
};

/// Which Lagrangian a flow is built on.
class LagrangianSpec {
public:
    using Variant = std::variant<FreeParticle, Harmonic, Anisotropic>;

    LagrangianSpec(FreeParticle f) : v_(f) {}  // NOLINT(google-explicit-constructor)
    LagrangianSpec(Harmonic h) : v_(h) {       // NOLINT(google-explicit-constructor)
        require(std::isfinite(h.omega) && h.omega > 0.0 && h.omega < kMaxOmega,
                "harmonic frequency must lie in (0, pi); got " + std::to_string(h.omega));
    }
    LagrangianSpec(Anisotropic a) : v_(std::move(a)) {}  // NOLINT(google-explicit-constructor)

    static LagrangianSpec free_particle() { return FreeParticle{}; }
    static LagrangianSpec harmonic(double omega) { return Harmonic{omega}; }
    static LagrangianSpec anisotropic(SpectralPotential s) { return Anisotropic{std::move(s)}; }

    [[nodiscard]] const Variant& variant() const { return v_; }
    [[nodiscard]] bool is_free() const { return std::holds_alternative<FreeParticle>(v_); }
    [[nodiscard]] bool is_harmonic() const { return std::holds_alternative<Harmonic>(v_); }
    [[nodiscard]] bool is_anisotropic() const { return std::holds_alternative<Anisotropic>(v_); }
    [[nodiscard]] double omega() const { return std::get<Harmonic>(v_).omega; }
    [[nodiscard]] const SpectralPotential& spectral() const { return std::get<Anisotropic>(v_).spectral; }

    [[nodiscard]] std::string name() const {
        if (is_free()) return "free";
        if (is_harmonic()) return "harmonic(" + std::to_string(omega()) + ")";
        return "anisotropic";
    }

private:
    Variant v_;
};

/// Pair of boundary points for a least-action problem.
struct Endpoints {
    Vector x0;
    Vector x1;

    Endpoints(Vector a, Vector b) : x0(std::move(a)), x1(std::move(b)) {
        require(x0.size() == x1.size(), "Endpoints: dimension mismatch");
    }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(x0.size()); }
};

namespace detail {

inline void check_time(double t) {
    require(std::isfinite(t) && t >= 0.0 && t <= 1.0, "time must lie in [0, 1]; got " + std::to_string(t));
}

inline void check_dims(const LagrangianSpec& spec, const Endpoints& ep) {
    if (spec.is_anisotropic())
        require(spec.spectral().dim() == ep.dim(), "anisotropic potential dimension does not match endpoints");
}

// Interpolation weights (a, b) with gamma(t) = a x0 + b x1, and their time derivatives.
struct Weights {
    double a, b, da, db;
};

inline Weights harmonic_weights(double omega, double t) {
    if (omega < kAffineOmega) return {1.0 - t, t, -1.0, 1.0};
    const double s = std::sin(omega);
    return {std::sin(omega * (1.0 - t)) / s, std::sin(omega * t) / s, -omega * std::cos(omega * (1.0 - t)) / s,
            omega * std::cos(omega * t) / s};
}

// Scalar least-action cost of a harmonic mode with endpoints u0, u1.
inline double harmonic_cost(double omega, double sq0, double sq1, double cross) {
    if (omega < kAffineOmega) return 0.5 * (sq0 + sq1 - 2.0 * cross);
    return omega / (2.0 * std::sin(omega)) * (std::cos(omega) * (sq0 + sq1) - 2.0 * cross);
}

template <typename Combine>
Vector per_mode(const SpectralPotential& sp, const Endpoints& ep, double t, Combine&& combine) {
    const Vector y0 = sp.frame().transpose() * ep.x0;
    const Vector y1 = sp.frame().transpose() * ep.x1;
    Vector y(y0.size());
    for (Eigen::Index k = 0; k < y.size(); ++k) y[k] = combine(harmonic_weights(sp.frequencies()[k], t), y0[k], y1[k]);
    return sp.frame() * y;
}

}  // namespace detail

/// Least-action path gamma(t) between the endpoints.
inline Vector trajectory(const LagrangianSpec& spec, const Endpoints& ep, double t) {
    detail::check_time(t);
    detail::check_dims(spec, ep);
    if (spec.is_free()) return (1.0 - t) * ep.x0 + t * ep.x1;
    if (spec.is_harmonic()) {
        const auto w = detail::harmonic_weights(spec.omega(), t);
        return w.a * ep.x0 + w.b * ep.x1;
    }
    return detail::per_mode(spec.spectral(), ep, t,
                            [](const detail::Weights& w, double u0, double u1) { return w.a * u0 + w.b * u1; });
}

/// d/dt gamma(t).
inline Vector trajectory_velocity(const LagrangianSpec& spec, const Endpoints& ep, double t) {
    detail::check_time(t);
    detail::check_dims(spec, ep);
    if (spec.is_free()) return ep.x1 - ep.x0;
    if (spec.is_harmonic()) {
        const auto w = detail::harmonic_weights(spec.omega(), t);
        return w.da * ep.x0 + w.db * ep.x1;
    }
    return detail::per_mode(spec.spectral(), ep, t,
                            [](const detail::Weights& w, double u0, double u1) { return w.da * u0 + w.db * u1; });
}

/// The Lagrangian evaluated at a state.
inline double lagrangian_value(const LagrangianSpec& spec, const Vector& x, const Vector& v) {
    const double kinetic = 0.5 * v.squaredNorm();
    if (spec.is_free()) return kinetic;
    if (spec.is_harmonic()) return kinetic - 0.5 * spec.omega() * spec.omega() * x.squaredNorm();
    const Vector y = spec.spectral().frame().transpose() * x;
    return kinetic - 0.5 * (y.array().square() * spec.spectral().frequencies().array().square()).sum();
}

/// Minimal action between the endpoints.
inline double action_cost(const LagrangianSpec& spec, const Endpoints& ep) {
    detail::check_dims(spec, ep);
    if (spec.is_free()) return 0.5 * (ep.x1 - ep.x0).squaredNorm();
    if (spec.is_harmonic())
        return detail::harmonic_cost(spec.omega(), ep.x0.squaredNorm(), ep.x1.squaredNorm(), ep.x0.dot(ep.x1));
    const auto& sp = spec.spectral();
    const Vector y0 = sp.frame().transpose() * ep.x0;
    const Vector y1 = sp.frame().transpose() * ep.x1;
    double total = 0.0;
    for (Eigen::Index k = 0; k < y0.size(); ++k)
        total += detail::harmonic_cost(sp.frequencies()[k], y0[k] * y0[k], y1[k] * y1[k], y0[k] * y1[k]);
    return total;
}

/// Kinetic energy  int_0^1 1/2 |phi'(t)|^2 dt  along the harmonic geodesic at
/// frequency omega. This is not the action: the potential term is absent.
inline double pair_kinetic_energy(double omega, const Endpoints& ep) {
    require(std::isfinite(omega) && omega > 0.0 && omega < kMaxOmega, "pair_kinetic_energy: omega must lie in (0, pi)");
    const double s = std::sin(omega);
    const double c = std::cos(omega);
    const Vector b = (ep.x1 - c * ep.x0) / s;
    const double sin2 = std::sin(2.0 * omega) / (4.0 * omega);
    const double i_ss = 0.5 - sin2;
    const double i_cc = 0.5 + sin2;
    const double i_sc = s * s / (2.0 * omega);
    return 0.5 * omega * omega * (ep.x0.squaredNorm() * i_ss + b.squaredNorm() * i_cc - 2.0 * ep.x0.dot(b) * i_sc);
}

/// Spectral potential aligned with the principal axes of `data`, with
/// per-mode frequency omega_max * (lambda_min / lambda_k)^alpha. High-variance
/// directions get the smallest frequencies.
inline SpectralPotential pca_potential(const PointBatch& data, double omega_max, double alpha) {
    const auto d = static_cast<Eigen::Index>(data.dim());
    require(d >= 1, "pca_potential: empty dimension");
    require(data.size() >= data.dim() + 1, "pca_potential: need at least d+1 points");
    require(omega_max > 0.0 && omega_max < kMaxOmega, "pca_potential: omega_max must lie in (0, pi)");
    require(alpha >= 0.0 && std::isfinite(alpha), "pca_potential: alpha must be non-negative");

    const RowMatrix& x = data.points();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const RowMatrix centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);

    const auto eig = jacobi_eigen(cov);
    const double trace = cov.trace();
    for (Eigen::Index k = 0; k < d; ++k)
        if (!(eig.values[k] >= 1e-12 * trace) || trace <= 0.0)
            throw NumericalError("pca_potential: degenerate covariance; regularize the data");

    const double smallest = eig.values[d - 1];
    Vector freq(d);
    for (Eigen::Index k = 0; k < d; ++k) freq[k] = std::min(omega_max, omega_max * std::pow(smallest / eig.values[k], alpha));
    return {eig.vectors, freq};
}

}  // namespace lfm
