#include "fsmle/model.hpp"

#include <limits>
#include <numbers>
#include <random>

namespace fsmle {

void SimulatorModel::check_param(const ParamVec& theta) const {
    require_dim(theta.size(), param_dim(), "theta");
    require_finite(theta, "theta");
}

DataMatrix SimulatorModel::simulate(const ParamVec& theta, Index n, RngStream stream) const {
    if (n < 1) {
        throw DomainError("simulate: n must be >= 1");
    }
    DataMatrix out(n, data_dim());
    simulate_into(theta, out, stream);
    return out;
}

void SimulatorModel::simulate_into(const ParamVec& theta, Eigen::Ref<DataMatrix> out, RngStream stream) const {
    check_param(theta);
    require_dim(out.cols(), data_dim(), "simulate output");
    draw(theta, out, stream);
}

Vector<double> SimulatorModel::closed_form_score(const ParamVec&, const DataVec&) const {
    throw UnsupportedError("model '" + id() + "' has no closed-form score");
}

double SimulatorModel::log_density(const ParamVec&, const DataVec&) const {
    throw UnsupportedError("model '" + id() + "' has no tractable density");
}

std::optional<ParamVec> SimulatorModel::exact_mle(const DataMatrix&) const { return std::nullopt; }

// --- GaussianMeanModel -------------------------------------------------------

GaussianMeanModel::GaussianMeanModel(Index dim) : GaussianMeanModel(Matrix<double>::Identity(dim, dim)) {}

GaussianMeanModel::GaussianMeanModel(Matrix<double> covariance) : covariance_(std::move(covariance)) {
    if (covariance_.rows() < 1 || covariance_.rows() != covariance_.cols()) {
        throw DimensionError("gaussian covariance must be square and non-empty");
    }
    require_finite(covariance_, "gaussian covariance");
    if (!covariance_.isApprox(covariance_.transpose(), 1e-12)) {
        throw DomainError("gaussian covariance must be symmetric");
    }
    Eigen::LLT<Matrix<double>> llt(covariance_);
    if (llt.info() != Eigen::Success) {
        throw DomainError("gaussian covariance must be positive definite");
    }
    cholesky_ = llt.matrixL();
    precision_ = llt.solve(Matrix<double>::Identity(covariance_.rows(), covariance_.cols()));
    const double log_det = 2.0 * cholesky_.diagonal().array().log().sum();
    log_norm_ = -0.5 * (static_cast<double>(covariance_.rows()) * std::log(2.0 * std::numbers::pi) + log_det);
}

void GaussianMeanModel::draw(const ParamVec& theta, Eigen::Ref<DataMatrix> out, RngStream& stream) const {
    std::normal_distribution<double> normal;
    const Index k = data_dim();
    Vector<double> z(k);
    for (Index r = 0; r < out.rows(); ++r) {
        for (Index i = 0; i < k; ++i) {
            z[i] = normal(stream);
        }
        out.row(r) = (theta + cholesky_.triangularView<Eigen::Lower>() * z).transpose();
    }
}

Vector<double> GaussianMeanModel::closed_form_score(const ParamVec& theta, const DataVec& x) const {
    check_param(theta);
    require_dim(x.size(), data_dim(), "x");
    return precision_ * (x - theta);
}

double GaussianMeanModel::log_density(const ParamVec& theta, const DataVec& x) const {
    const Vector<double> r = x - theta;
    return log_norm_ - 0.5 * r.dot(precision_ * r);
}

std::optional<ParamVec> GaussianMeanModel::exact_mle(const DataMatrix& data) const {
    require_dim(data.cols(), data_dim(), "data");
    if (data.rows() == 0) {
        return std::nullopt;
    }
    return ParamVec(data.colwise().mean().transpose());
}

// --- ShiftedExponentialModel -------------------------------------------------

ShiftedExponentialModel::ShiftedExponentialModel(double rate) : rate_(rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
        throw DomainError("shifted exponential rate must be positive and finite");
    }
}

void ShiftedExponentialModel::draw(const ParamVec& theta, Eigen::Ref<DataMatrix> out, RngStream& stream) const {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (Index r = 0; r < out.rows(); ++r) {
        // 1 - u lies in (0, 1], so the log is finite
        out(r, 0) = theta[0] - std::log(1.0 - uniform(stream)) / rate_;
    }
}

Vector<double> ShiftedExponentialModel::closed_form_score(const ParamVec& theta, const DataVec& x) const {
    check_param(theta);
    require_dim(x.size(), 1, "x");
    if (!(x[0] > theta[0])) {
        throw DomainError("shifted exponential score is undefined outside the support x > theta");
    }
    return Vector<double>::Constant(1, rate_);
}

double ShiftedExponentialModel::log_density(const ParamVec& theta, const DataVec& x) const {
    if (x[0] < theta[0]) {
        return -std::numeric_limits<double>::infinity();
    }
    return std::log(rate_) - rate_ * (x[0] - theta[0]);
}

std::optional<ParamVec> ShiftedExponentialModel::exact_mle(const DataMatrix& data) const {
    require_dim(data.cols(), 1, "data");
    if (data.rows() == 0) {
        return std::nullopt;
    }
    return ParamVec::Constant(1, data.col(0).minCoeff());
}

}  // namespace fsmle
