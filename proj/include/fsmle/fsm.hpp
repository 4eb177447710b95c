#pragma once

// Local Fisher score matching with a linear score model.
//
// Proposal draws theta_j ~ N(center, sigma^2 I) and simulations x_{j,k} ~ p(x | theta_j)
// train S_W(x) = W^T phi(x), phi(x) = x or (x, 1), by minimizing
//
//   J(W) = mean_{j,k} [ |S_W(x_{j,k})|^2 + 2 S_W(x_{j,k})^T grad log q(theta_j | center) ]
//
// whose minimizer solves (sum_j G_j + ridge I) W = - sum_{j,k} phi(x_{j,k}) grad log q(theta_j)^T.

#include "fsmle/core.hpp"
#include "fsmle/model.hpp"
#include "fsmle/rng.hpp"

#include <algorithm>
#include <optional>
#include <string>

namespace fsmle {

struct ProposalSpec {
    ParamVec center;
    double sigma = 0.1;

    void validate() const;
};

/// Training set for one local fit. data stacks the m per-proposal matrices (each n x k)
/// so that rows [j*n, (j+1)*n) were simulated at thetas.row(j).
template <typename Scalar>
struct BasicSimBatch {
    Matrix<Scalar> thetas;
    RowMatrix<Scalar> data;
    Index n_per_proposal = 0;
    Vector<Scalar> center;
    Scalar sigma = Scalar(0);

    [[nodiscard]] Index m() const noexcept { return thetas.rows(); }
    [[nodiscard]] Index n() const noexcept { return n_per_proposal; }
    [[nodiscard]] Index param_dim() const noexcept { return thetas.cols(); }
    [[nodiscard]] Index data_dim() const noexcept { return data.cols(); }

    [[nodiscard]] auto block(Index j) const { return data.middleRows(j * n_per_proposal, n_per_proposal); }

    void validate() const {
        if (m() < 1 || n() < 1) {
            throw DomainError("sim batch must have m >= 1 and n >= 1");
        }
        require_dim(data.rows(), m() * n(), "sim batch rows");
        require_dim(center.size(), param_dim(), "sim batch center");
        if (!(sigma > Scalar(0))) {
            throw DomainError("sim batch sigma must be positive");
        }
    }
};

using SimBatch = BasicSimBatch<double>;

template <typename Scalar>
struct BasicLinearScoreModel {
    Matrix<Scalar> weights;  // feature_dim x d
    Scalar ridge = Scalar(0);
    bool affine = true;
    Scalar gram_condition = Scalar(0);

    [[nodiscard]] Index feature_dim() const noexcept { return weights.rows(); }
    [[nodiscard]] Index data_dim() const noexcept { return weights.rows() - (affine ? 1 : 0); }
    [[nodiscard]] Index param_dim() const noexcept { return weights.cols(); }
};

using LinearScoreModel = BasicLinearScoreModel<double>;

struct FitOptions {
    // Unset means 1e-6 * trace(sum G_j) / feature_dim.
    std::optional<double> ridge;
    bool affine = true;
    // Rescale each feature to unit root-mean-square before solving.
    bool standardize = false;
};

/// grad_theta log N(theta_j; center, sigma^2 I) = -(theta_j - center) / sigma^2.
template <typename DerivedA, typename DerivedB>
[[nodiscard]] auto proposal_log_grad(const Eigen::MatrixBase<DerivedA>& theta_j,
                                     const Eigen::MatrixBase<DerivedB>& center,
                                     typename DerivedA::Scalar sigma) {
    using Scalar = typename DerivedA::Scalar;
    if (!(sigma > Scalar(0))) {
        throw DomainError("proposal sigma must be positive");
    }
    require_dim(theta_j.size(), center.size(), "proposal_log_grad");
    return Vector<Scalar>(-(theta_j - center) / (sigma * sigma));
}

/// phi(x): x itself, or x with a trailing 1 when affine.
template <typename Derived>
[[nodiscard]] Vector<typename Derived::Scalar> features(const Eigen::MatrixBase<Derived>& x, bool affine) {
    using Scalar = typename Derived::Scalar;
    Vector<Scalar> f(x.size() + (affine ? 1 : 0));
    f.head(x.size()) = x;
    if (affine) {
        f[x.size()] = Scalar(1);
    }
    return f;
}

/// Stacked feature matrix, one row per data row.
template <typename Derived>
[[nodiscard]] RowMatrix<typename Derived::Scalar> feature_rows(const Eigen::MatrixBase<Derived>& data, bool affine) {
    using Scalar = typename Derived::Scalar;
    RowMatrix<Scalar> f(data.rows(), data.cols() + (affine ? 1 : 0));
    f.leftCols(data.cols()) = data;
    if (affine) {
        f.col(data.cols()).setOnes();
    }
    return f;
}

/// Per-proposal log-gradients, one row per proposal.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> proposal_log_grads(const BasicSimBatch<Scalar>& batch) {
    return -(batch.thetas.rowwise() - batch.center.transpose()) / (batch.sigma * batch.sigma);
}

/// The system of the normal equations: A = sum_j G_j (features), B = sum_{j,k} phi(x_jk) g_j^T.
template <typename Scalar>
struct NormalEquations {
    Matrix<Scalar> gram;
    Matrix<Scalar> cross;
};

template <typename Scalar>
[[nodiscard]] NormalEquations<Scalar> assemble_normal_equations(const BasicSimBatch<Scalar>& batch, bool affine) {
    batch.validate();
    const RowMatrix<Scalar> phi = feature_rows(batch.data, affine);
    const Index p = phi.cols();
    NormalEquations<Scalar> eq;
    eq.gram = Matrix<Scalar>::Zero(p, p);
    eq.gram.template selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
    eq.gram = eq.gram.template selfadjointView<Eigen::Lower>();

    const Matrix<Scalar> g = proposal_log_grads(batch);
    // sum_k phi(x_jk) per proposal, then outer product with g_j
    Matrix<Scalar> block_sums(batch.m(), p);
    for (Index j = 0; j < batch.m(); ++j) {
        block_sums.row(j) = phi.middleRows(j * batch.n(), batch.n()).colwise().sum();
    }
    eq.cross = block_sums.transpose() * g;
    return eq;
}

template <typename Scalar>
[[nodiscard]] Scalar default_ridge(const Matrix<Scalar>& gram) {
    return Scalar(1e-6) * gram.trace() / static_cast<Scalar>(gram.rows());
}

namespace detail {
void warn(const std::string& message);
}

/// Solves (gram + ridge I) W = -cross. Ridge-free singular systems raise SingularMatrixError;
/// a failed Cholesky factorization otherwise falls back to a least-squares solve.
template <typename Scalar>
[[nodiscard]] BasicLinearScoreModel<Scalar> solve_normal_equations(const NormalEquations<Scalar>& eq, Scalar ridge,
                                                                   bool affine, bool standardize = false) {
    if (ridge < Scalar(0) || !std::isfinite(static_cast<double>(ridge))) {
        throw DomainError("ridge must be nonnegative and finite");
    }
    const Index p = eq.gram.rows();
    Vector<Scalar> scale = Vector<Scalar>::Ones(p);
    if (standardize) {
        scale = eq.gram.diagonal().cwiseSqrt();
        for (Index i = 0; i < p; ++i) {
            if (!(scale[i] > Scalar(0))) {
                scale[i] = Scalar(1);
            }
        }
    }
    const Vector<Scalar> inv_scale = scale.cwiseInverse();
    Matrix<Scalar> a = inv_scale.asDiagonal() * eq.gram * inv_scale.asDiagonal();
    a.diagonal().array() += ridge;
    const Matrix<Scalar> rhs = -(inv_scale.asDiagonal() * eq.cross);

    BasicLinearScoreModel<Scalar> out;
    out.ridge = ridge;
    out.affine = affine;

    Eigen::LLT<Matrix<Scalar>> llt(a);
    const bool factored = llt.info() == Eigen::Success;
    const Scalar rcond = factored ? llt.rcond() : Scalar(0);
    out.gram_condition = rcond > Scalar(0) ? Scalar(1) / rcond : std::numeric_limits<Scalar>::infinity();

    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    if (ridge == Scalar(0) && (!factored || rcond < Scalar(16) * eps)) {
        throw SingularMatrixError("fit_linear_fsm: Gram sum is singular and ridge is zero",
                                  static_cast<double>(symmetric_condition(a)));
    }
    Matrix<Scalar> w;
    if (factored) {
        w = llt.solve(rhs);
    } else {
        detail::warn("fit_linear_fsm: Cholesky factorization failed, using least-squares solve");
        w = a.completeOrthogonalDecomposition().solve(rhs);
        out.gram_condition = symmetric_condition(a);
    }
    out.weights = inv_scale.asDiagonal() * w;
    return out;
}

template <typename Scalar>
[[nodiscard]] BasicLinearScoreModel<Scalar> fit_linear_fsm(const BasicSimBatch<Scalar>& batch,
                                                           const FitOptions& options = {}) {
    const auto eq = assemble_normal_equations(batch, options.affine);
    const Scalar ridge = options.ridge ? static_cast<Scalar>(*options.ridge) : default_ridge(eq.gram);
    return solve_normal_equations(eq, ridge, options.affine, options.standardize);
}

/// max|(gram + ridge I) W + cross| relative to the magnitude of the terms.
template <typename Scalar>
[[nodiscard]] Scalar normal_equation_residual(const BasicSimBatch<Scalar>& batch,
                                              const BasicLinearScoreModel<Scalar>& model) {
    const auto eq = assemble_normal_equations(batch, model.affine);
    Matrix<Scalar> a = eq.gram;
    a.diagonal().array() += model.ridge;
    const Matrix<Scalar> r = a * model.weights + eq.cross;
    const Scalar scale = std::max({(a.cwiseAbs() * model.weights.cwiseAbs()).maxCoeff(), eq.cross.cwiseAbs().maxCoeff(),
                                   std::numeric_limits<Scalar>::min()});
    return r.cwiseAbs().maxCoeff() / scale;
}

/// S(x) = W^T phi(x).
template <typename Scalar, typename Derived>
[[nodiscard]] Vector<Scalar> evaluate_score(const BasicLinearScoreModel<Scalar>& model,
                                            const Eigen::MatrixBase<Derived>& x) {
    require_dim(x.size(), model.data_dim(), "evaluate_score");
    Vector<Scalar> s = model.weights.topRows(x.size()).transpose() * x;
    if (model.affine) {
        s += model.weights.row(x.size()).transpose();
    }
    return s;
}

/// One score per data row (N x d).
template <typename Scalar, typename Derived>
[[nodiscard]] Matrix<Scalar> evaluate_scores(const BasicLinearScoreModel<Scalar>& model,
                                             const Eigen::MatrixBase<Derived>& data) {
    require_dim(data.cols(), model.data_dim(), "evaluate_scores");
    Matrix<Scalar> s = data * model.weights.topRows(data.cols());
    if (model.affine) {
        s.rowwise() += model.weights.row(data.cols());
    }
    return s;
}

/// The Monte-Carlo objective, averaged over proposals and simulations, evaluated sample by sample.
template <typename Scalar, typename DerivedW>
[[nodiscard]] Scalar empirical_objective(const BasicSimBatch<Scalar>& batch, const Eigen::MatrixBase<DerivedW>& weights,
                                         bool affine) {
    batch.validate();
    require_dim(weights.rows(), batch.data_dim() + (affine ? 1 : 0), "empirical_objective feature dim");
    require_dim(weights.cols(), batch.param_dim(), "empirical_objective param dim");
    Scalar outer = Scalar(0);
    for (Index j = 0; j < batch.m(); ++j) {
        const Vector<Scalar> g = proposal_log_grad(batch.thetas.row(j).transpose(), batch.center, batch.sigma);
        Scalar inner = Scalar(0);
        for (Index r = 0; r < batch.n(); ++r) {
            const Vector<Scalar> s = weights.transpose() * features(batch.block(j).row(r).transpose(), affine);
            inner += s.squaredNorm() + Scalar(2) * s.dot(g);
        }
        outer += inner / static_cast<Scalar>(batch.n());
    }
    return outer / static_cast<Scalar>(batch.m());
}

template <typename Scalar>
[[nodiscard]] Scalar empirical_objective(const BasicSimBatch<Scalar>& batch, const BasicLinearScoreModel<Scalar>& model) {
    return empirical_objective(batch, model.weights, model.affine);
}

// --- simulation-backed operations --------------------------------------------

/// thetas[j] = center + sigma z_j; data block j simulated at thetas[j].
/// Proposal j draws z_j from stream.child({0, j}) and its data from stream.child({1, j}).
[[nodiscard]] SimBatch sample_batch(const SimulatorModel& model, const ProposalSpec& proposal, Index m, Index n,
                                    const RngStream& stream);

struct FsmSettings {
    double sigma = 0.1;
    Index m = 100;
    Index n = 1;
    FitOptions fit;

    void validate() const;
};

struct GradEstimate {
    Vector<double> gradient;
    Matrix<double> per_observation_scores;  // N x d
    double gram_condition = 0.0;
    Index m = 0;
    Index n = 0;
    double sigma = 0.0;
};

/// Fits a local score model at center and sums its scores over the observations.
[[nodiscard]] GradEstimate estimate_gradient(const SimulatorModel& model, const DataMatrix& observations,
                                             const ParamVec& center, const FsmSettings& settings,
                                             const RngStream& stream);

/// The fitted model only, for callers that need per-sample scores (e.g. Fisher information).
[[nodiscard]] LinearScoreModel fit_local_score(const SimulatorModel& model, const ParamVec& center,
                                               const FsmSettings& settings, const RngStream& stream);

}  // namespace fsmle
