#pragma once

#include "fsmle/core.hpp"
#include "fsmle/rng.hpp"

#include <memory>
#include <optional>
#include <string>

namespace fsmle {

/// A simulator P_theta over R^k parameterized by theta in R^d.
///
/// Instances are immutable after construction; concurrent callers each pass their own
/// stream. Oracle-capable models additionally expose their density and analytic score.
class SimulatorModel {
public:
    virtual ~SimulatorModel() = default;

    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual Index param_dim() const = 0;
    [[nodiscard]] virtual Index data_dim() const = 0;

    /// n draws at theta, one per row. Identical (theta, n, stream) gives identical output.
    [[nodiscard]] DataMatrix simulate(const ParamVec& theta, Index n, RngStream stream) const;

    /// Writes out.rows() draws into out. Used for batched simulation without reallocation.
    void simulate_into(const ParamVec& theta, Eigen::Ref<DataMatrix> out, RngStream stream) const;

    [[nodiscard]] virtual bool has_closed_form_score() const { return false; }
    [[nodiscard]] virtual Vector<double> closed_form_score(const ParamVec& theta, const DataVec& x) const;

    [[nodiscard]] virtual bool has_log_density() const { return false; }
    [[nodiscard]] virtual double log_density(const ParamVec& theta, const DataVec& x) const;

    [[nodiscard]] virtual std::optional<ParamVec> exact_mle(const DataMatrix& data) const;

    void check_param(const ParamVec& theta) const;

protected:
    virtual void draw(const ParamVec& theta, Eigen::Ref<DataMatrix> out, RngStream& stream) const = 0;
};

/// Multivariate normal location model x ~ N(theta, Sigma) with fixed SPD Sigma.
class GaussianMeanModel final : public SimulatorModel {
public:
    explicit GaussianMeanModel(Index dim);
    explicit GaussianMeanModel(Matrix<double> covariance);

    [[nodiscard]] std::string id() const override { return "gaussian"; }
    [[nodiscard]] Index param_dim() const override { return covariance_.rows(); }
    [[nodiscard]] Index data_dim() const override { return covariance_.rows(); }

    [[nodiscard]] bool has_closed_form_score() const override { return true; }
    [[nodiscard]] Vector<double> closed_form_score(const ParamVec& theta, const DataVec& x) const override;

    [[nodiscard]] bool has_log_density() const override { return true; }
    [[nodiscard]] double log_density(const ParamVec& theta, const DataVec& x) const override;

    [[nodiscard]] std::optional<ParamVec> exact_mle(const DataMatrix& data) const override;

    [[nodiscard]] const Matrix<double>& covariance() const noexcept { return covariance_; }
    [[nodiscard]] const Matrix<double>& precision() const noexcept { return precision_; }

protected:
    void draw(const ParamVec& theta, Eigen::Ref<DataMatrix> out, RngStream& stream) const override;

private:
    Matrix<double> covariance_;
    Matrix<double> cholesky_;  // lower factor
    Matrix<double> precision_;
    double log_norm_ = 0.0;
};

/// p(x | theta) = rate * exp(-rate (x - theta)) for x >= theta, zero otherwise.
class ShiftedExponentialModel final : public SimulatorModel {
public:
    explicit ShiftedExponentialModel(double rate = 1.0);

    [[nodiscard]] std::string id() const override { return "shifted_exp"; }
    [[nodiscard]] Index param_dim() const override { return 1; }
    [[nodiscard]] Index data_dim() const override { return 1; }

    // Defined on the support x > theta only.
    [[nodiscard]] bool has_closed_form_score() const override { return true; }
    [[nodiscard]] Vector<double> closed_form_score(const ParamVec& theta, const DataVec& x) const override;

    [[nodiscard]] bool has_log_density() const override { return true; }
    [[nodiscard]] double log_density(const ParamVec& theta, const DataVec& x) const override;

    [[nodiscard]] std::optional<ParamVec> exact_mle(const DataMatrix& data) const override;

    [[nodiscard]] double rate() const noexcept { return rate_; }

protected:
    void draw(const ParamVec& theta, Eigen::Ref<DataMatrix> out, RngStream& stream) const override;

private:
    double rate_;
};

}  // namespace fsmle
