#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace fsmle {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Row-major so that one sample is one contiguous row.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ParamVec = Vector<double>;
using DataVec = Vector<double>;
using DataMatrix = RowMatrix<double>;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Every optimization attempted by a grid search diverged.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a linear system that must be inverted is numerically singular.
class SingularMatrixError : public std::runtime_error {
public:
    SingularMatrixError(const std::string& what, double condition_estimate)
        : std::runtime_error(what + " (condition estimate " + std::to_string(condition_estimate) + ")"),
          condition_estimate_(condition_estimate) {}

    [[nodiscard]] double condition_estimate() const noexcept { return condition_estimate_; }

private:
    double condition_estimate_;
};

template <typename Derived>
[[nodiscard]] bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

inline void require_dim(Index got, Index want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                             std::to_string(got));
    }
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
    if (!m.allFinite()) {
        throw DomainError(std::string(what) + ": non-finite entry");
    }
}

/// Reciprocal condition number estimate of a symmetric matrix from its eigenvalues.
template <typename Derived>
[[nodiscard]] typename Derived::Scalar symmetric_condition(const Eigen::MatrixBase<Derived>& a) {
    using Scalar = typename Derived::Scalar;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(a, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    const Scalar lo = ev.cwiseAbs().minCoeff();
    const Scalar hi = ev.cwiseAbs().maxCoeff();
    if (lo == Scalar(0)) {
        return std::numeric_limits<Scalar>::infinity();
    }
    return hi / lo;
}

}  // namespace fsmle
