#pragma once

// Time-conditioned MLP velocity field v(x, t) with a hand-written backward
// pass, plus Adam and an EMA shadow of the parameters.
//
// Input is the concatenation [x, t]. Hidden layers use SiLU; the output layer
// is linear. Parameters are stored flat, layer by layer, each layer as its
// weight matrix (out x in, row-major) followed by its bias (out).

#include "lfm/common.hpp"
#include "lfm/rng.hpp"

#include <vector>

namespace lfm {

struct Architecture {
    std::size_t dim = 2;
    std::size_t width = 64;
    std::size_t depth = 3;  // hidden layers

    [[nodiscard]] std::size_t parameter_count() const {
        const std::size_t d = dim, w = width, l = depth;
        return (d + 1) * w + w + (l - 1) * (w * w + w) + w * d + d;
    }
    bool operator==(const Architecture&) const = default;
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct LayerShape {
    Eigen::Index in, out, offset;
};

}  // namespace detail

class VelocityModel {
public:
    using ConstMap = Eigen::Map<const RowMatrix>;
    using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;

    VelocityModel() = default;

    explicit VelocityModel(Architecture arch) : arch_(arch) {
        require(arch.dim >= 1 && arch.width >= 1 && arch.depth >= 1, "VelocityModel: dim, width and depth must be positive");
        Eigen::Index offset = 0;
        const auto d = static_cast<Eigen::Index>(arch.dim);
        const auto w = static_cast<Eigen::Index>(arch.width);
        for (std::size_t l = 0; l <= arch.depth; ++l) {
            const Eigen::Index in = l == 0 ? d + 1 : w;
            const Eigen::Index out = l == arch.depth ? d : w;
            layers_.push_back({in, out, offset});
            offset += in * out + out;
        }
        params_ = Vector::Zero(offset);
    }

    VelocityModel(Architecture arch, Vector params) : VelocityModel(arch) { set_parameters(std::move(params)); }

    /// Fan-in scaled uniform initialization U(-1/sqrt(in), 1/sqrt(in)).
    static VelocityModel initialized(Architecture arch, std::uint64_t seed) {
        VelocityModel m(arch);
        Engine eng = make_engine(seed, "init");
        for (const auto& layer : m.layers_) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
            std::uniform_real_distribution<double> unif(-bound, bound);
            for (Eigen::Index k = 0; k < layer.in * layer.out + layer.out; ++k) m.params_[layer.offset + k] = unif(eng);
        }
        return m;
    }

    [[nodiscard]] const Architecture& architecture() const { return arch_; }
    [[nodiscard]] const Vector& parameters() const { return params_; }
    [[nodiscard]] std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    void set_parameters(Vector p) {
        require(p.size() == params_.size(), "VelocityModel: parameter vector has the wrong length");
        params_ = std::move(p);
    }
    Vector& mutable_parameters() { return params_; }

    /// Rowwise v(x_i, t_i).
    [[nodiscard]] RowMatrix forward(const RowMatrix& x, const Vector& t) const {
        check_inputs(x, t);
        RowMatrix a = input(x, t);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            RowMatrix z = affine(l, a);
            if (l + 1 < layers_.size()) z = z.unaryExpr([](double v) { return v * detail::sigmoid(v); });
            a = std::move(z);
        }
        return a;
    }

    [[nodiscard]] RowMatrix forward(const RowMatrix& x, double t) const { return forward(x, Vector::Constant(x.rows(), t)); }

    [[nodiscard]] Vector forward(const Vector& x, double t) const {
        return forward(RowMatrix(x.transpose()), t).row(0).transpose();
    }

    struct LossGrad {
        double loss;
        Vector grad;
    };

    /// Mean squared regression loss (1/n) sum_i |v(x_i, t_i) - target_i|^2 and
    /// its exact gradient with respect to the flat parameter vector.
    [[nodiscard]] LossGrad loss_and_grad(const RowMatrix& x, const Vector& t, const RowMatrix& targets) const {
        check_inputs(x, t);
        require(targets.rows() == x.rows() && targets.cols() == x.cols(), "loss_and_grad: target shape mismatch");
        const auto n = x.rows();

        std::vector<RowMatrix> acts;  // inputs to each layer
        std::vector<RowMatrix> pre;   // pre-activations of hidden layers
        acts.reserve(layers_.size());
        pre.reserve(layers_.size());
        acts.push_back(input(x, t));
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            pre.push_back(affine(l, acts.back()));
            acts.push_back(pre.back().unaryExpr([](double v) { return v * detail::sigmoid(v); }));
        }
        const RowMatrix out = affine(layers_.size() - 1, acts.back());
        const RowMatrix diff = out - targets;
        const double loss = diff.squaredNorm() / static_cast<double>(n);
        if (!std::isfinite(loss)) throw NumericalError("loss_and_grad: non-finite loss");

        Vector grad = Vector::Zero(params_.size());
        RowMatrix delta = (2.0 / static_cast<double>(n)) * diff;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const auto& s = layers_[l];
            Eigen::Map<RowMatrix> gw(grad.data() + s.offset, s.out, s.in);
            Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + s.offset + s.in * s.out, s.out);
            gw.noalias() = delta.transpose() * acts[l];
            gb = delta.colwise().sum();
            if (l == 0) break;
            RowMatrix back = delta * weights(l);
            const RowMatrix& z = pre[l - 1];
            delta = back.cwiseProduct(z.unaryExpr([](double v) {
                const double sg = detail::sigmoid(v);
                return sg * (1.0 + v * (1.0 - sg));
            }));
        }
        return {loss, std::move(grad)};
    }

    [[nodiscard]] double loss(const RowMatrix& x, const Vector& t, const RowMatrix& targets) const {
        return (forward(x, t) - targets).squaredNorm() / static_cast<double>(x.rows());
    }

private:
    void check_inputs(const RowMatrix& x, const Vector& t) const {
        require(!layers_.empty(), "VelocityModel: uninitialized model");
        require(static_cast<std::size_t>(x.cols()) == arch_.dim, "VelocityModel: input dimension mismatch");
        require(t.size() == x.rows(), "VelocityModel: one time per row required");
    }

    [[nodiscard]] RowMatrix input(const RowMatrix& x, const Vector& t) const {
        RowMatrix in(x.rows(), x.cols() + 1);
        in.leftCols(x.cols()) = x;
        in.col(x.cols()) = t;
        return in;
    }

    [[nodiscard]] ConstMap weights(std::size_t l) const {
        const auto& s = layers_[l];
        return {params_.data() + s.offset, s.out, s.in};
    }
    [[nodiscard]] ConstVecMap bias(std::size_t l) const {
        const auto& s = layers_[l];
        return {params_.data() + s.offset + s.in * s.out, s.out};
    }

    [[nodiscard]] RowMatrix affine(std::size_t l, const RowMatrix& a) const {
        RowMatrix z = a * weights(l).transpose();
        z.rowwise() += bias(l);
        return z;
    }

    Architecture arch_;
    std::vector<detail::LayerShape> layers_;
    Vector params_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 term added to the gradient
};

class AdamState {
public:
    AdamState() = default;
    AdamState(AdamConfig cfg, std::size_t n) : cfg_(cfg), m_(Vector::Zero(static_cast<Eigen::Index>(n))), v_(Vector::Zero(static_cast<Eigen::Index>(n))) {}

    [[nodiscard]] std::uint64_t step_count() const { return step_; }
    [[nodiscard]] const AdamConfig& config() const { return cfg_; }
    [[nodiscard]] const Vector& first_moment() const { return m_; }
    [[nodiscard]] const Vector& second_moment() const { return v_; }

    /// One bias-corrected Adam update of `params` in place.
    void step(Vector& params, const Vector& grad) {
        require(params.size() == m_.size() && grad.size() == m_.size(), "adam_step: shape mismatch");
        require(grad.allFinite(), "adam_step: non-finite gradient");
        Vector g = grad;
        if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * params;
        ++step_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        params.array() -= cfg_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
    }

private:
    AdamConfig cfg_;
    Vector m_;
    Vector v_;
    std::uint64_t step_ = 0;
};

class EmaState {
public:
    EmaState() = default;
    EmaState(double decay, Vector shadow) : decay_(decay), shadow_(std::move(shadow)) {
        require(decay >= 0.0 && decay <= 1.0, "EmaState: decay must lie in [0, 1]");
    }

    [[nodiscard]] double decay() const { return decay_; }
    [[nodiscard]] const Vector& shadow() const { return shadow_; }

    void update(const Vector& params) {
        require(params.size() == shadow_.size(), "ema_update: shape mismatch");
        shadow_ = decay_ * shadow_ + (1.0 - decay_) * params;
    }

private:
    double decay_ = 0.0;
    Vector shadow_;
};

}  // namespace lfm
