#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised when an argument violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a meaningful result
/// (divergence, degenerate data, step-size underflow).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidArgument(message);
}

inline constexpr double kPi = 3.14159265358979323846;

/// A set of d-dimensional points, one per row.
class PointBatch {
public:
    PointBatch() = default;

    explicit PointBatch(RowMatrix points) : points_(std::move(points)) {
        require(points_.allFinite(), "PointBatch: non-finite entry");
    }

    PointBatch(std::size_t n, std::size_t dim) : points_(RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim))) {}

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
    [[nodiscard]] bool empty() const { return points_.rows() == 0; }

    [[nodiscard]] const RowMatrix& points() const { return points_; }
    RowMatrix& points() { return points_; }

    [[nodiscard]] Vector row(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }

    /// Rows [first, first + count).
    [[nodiscard]] PointBatch slice(std::size_t first, std::size_t count) const {
        require(first + count <= size(), "PointBatch::slice: out of range");
        return PointBatch(RowMatrix(points_.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count))));
    }

private:
    RowMatrix points_;
};

}  // namespace lfm
