#pragma once

#include "lfm/common.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace lfm {

struct SymmetricEigen {
    Vector values;          // sorted descending
    Eigen::MatrixXd vectors;  // column k pairs with values[k]
    int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for a symmetric matrix. Rotations sweep the
/// strict upper triangle row by row, so the result is reproducible bit for
/// bit. Stops when the off-diagonal Frobenius norm drops below
/// tol * max(1, ||A||_F).
inline SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, double tol = 1e-12, int max_sweeps = 100) {
    const Eigen::Index n = input.rows();
    require(input.cols() == n, "jacobi_eigen: matrix must be square");
    require(input.allFinite(), "jacobi_eigen: non-finite entry");
    require((input - input.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, input.cwiseAbs().maxCoeff()),
            "jacobi_eigen: matrix must be symmetric");

    Eigen::MatrixXd a = 0.5 * (input + input.transpose());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    const double threshold = tol * std::max(1.0, a.norm());

    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    int sweep = 0;
    while (off_norm() >= threshold) {
        if (sweep >= max_sweeps) throw NumericalError("jacobi_eigen: no convergence");
        ++sweep;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values[k] = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
        out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
    }
    out.sweeps = sweep;
    return out;
}

}  // namespace lfm
