#pragma once

// Seeded 2D benchmark distributions and the Gaussian source.

#include "lfm/common.hpp"
#include "lfm/rng.hpp"

#include <array>
#include <optional>
#include <string>

namespace lfm {

enum class Dataset { Gaussian, EightGaussians, Moons, SCurve };

inline std::string to_string(Dataset ds) {
    switch (ds) {
        case Dataset::Gaussian: return "gaussian";
        case Dataset::EightGaussians: return "eightgaussians";
        case Dataset::Moons: return "moons";
        case Dataset::SCurve: return "scurve";
    }
    return "?";
}

inline Dataset parse_dataset(const std::string& name) {
    if (name == "gaussian") return Dataset::Gaussian;
    if (name == "eightgaussians" || name == "8gaussians") return Dataset::EightGaussians;
    if (name == "moons") return Dataset::Moons;
    if (name == "scurve") return Dataset::SCurve;
    throw InvalidArgument("unknown dataset '" + name + "'");
}

struct DatasetSpec {
    Dataset name = Dataset::Gaussian;
    std::uint64_t seed = 0;
    std::size_t dimension = 2;  // only the Gaussian may differ from 2

    [[nodiscard]] std::size_t dim() const { return name == Dataset::Gaussian ? dimension : 2; }
};

namespace detail {

struct SCurveRaw {
    double a, b;
};

// Coordinates 0 and 2 of the 3D S-curve, t uniform on [-3pi/2, 3pi/2].
inline SCurveRaw scurve_raw(Engine& eng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double t = 3.0 * kPi * (unif(eng) - 0.5);
    const double sign = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
    return {std::sin(t), sign * (std::cos(t) - 1.0)};
}

struct Standardizer {
    double mean[2];
    double std[2];
};

inline const Standardizer& scurve_standardizer() {
    static const Standardizer s = [] {
        constexpr int n = 100000;
        Engine eng = make_engine(0x5c0e5eedULL, "scurve-calibration");
        double sum[2] = {0, 0};
        double sq[2] = {0, 0};
        for (int i = 0; i < n; ++i) {
            const auto p = scurve_raw(eng);
            sum[0] += p.a;
            sum[1] += p.b;
            sq[0] += p.a * p.a;
            sq[1] += p.b * p.b;
        }
        Standardizer out{};
        for (int k = 0; k < 2; ++k) {
            out.mean[k] = sum[k] / n;
            out.std[k] = std::sqrt(sq[k] / n - out.mean[k] * out.mean[k]);
        }
        return out;
    }();
    return s;
}

}  // namespace detail

/// Stateful sampler: successive draws continue the same stream; a new sampler
/// with the same spec replays it.
class Sampler {
public:
    explicit Sampler(DatasetSpec spec, std::string_view stream = "data")
        : spec_(spec), eng_(make_engine(spec.seed, stream)) {
        require(spec_.dim() >= 1, "Sampler: dimension must be positive");
    }

    [[nodiscard]] const DatasetSpec& spec() const { return spec_; }

    PointBatch sample(std::size_t n) {
        require(n >= 1, "sample: n must be at least 1");
        const std::size_t d = spec_.dim();
        RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            switch (spec_.name) {
                case Dataset::Gaussian:
                    for (Eigen::Index k = 0; k < x.cols(); ++k) x(i, k) = normal(eng_);
                    break;
                case Dataset::EightGaussians: {
                    const int mode = static_cast<int>(std::uniform_int_distribution<int>(0, 7)(eng_));
                    const double angle = 2.0 * kPi * mode / 8.0;
                    x(i, 0) = 5.0 * std::cos(angle) + 0.5 * normal(eng_);
                    x(i, 1) = 5.0 * std::sin(angle) + 0.5 * normal(eng_);
                    break;
                }
                case Dataset::Moons: {
                    const bool upper = unif(eng_) < 0.5;
                    const double theta = kPi * unif(eng_);
                    if (upper) {
                        x(i, 0) = std::cos(theta);
                        x(i, 1) = std::sin(theta);
                    } else {
                        x(i, 0) = 1.0 - std::cos(theta);
                        x(i, 1) = 0.5 - std::sin(theta);
                    }
                    x(i, 0) += 0.1 * normal(eng_);
                    x(i, 1) += 0.1 * normal(eng_);
                    break;
                }
                case Dataset::SCurve: {
                    const auto& st = detail::scurve_standardizer();
                    const auto p = detail::scurve_raw(eng_);
                    x(i, 0) = 7.0 * (p.a - st.mean[0]) / st.std[0];
                    x(i, 1) = 7.0 * (p.b - st.mean[1]) / st.std[1];
                    break;
                }
            }
        }
        return PointBatch(std::move(x));
    }

private:
    DatasetSpec spec_;
    Engine eng_;
};

/// One-shot draw of n points from a fresh stream.
inline PointBatch sample(const DatasetSpec& spec, std::size_t n) { return Sampler(spec).sample(n); }

}  // namespace lfm
