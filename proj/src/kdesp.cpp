#include "fsmle/kdesp.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace fsmle {

Index KdeSpConfig::stability_offset() const {
    return A ? *A : static_cast<Index>(std::floor(0.1 * static_cast<double>(T)));
}

void KdeSpConfig::validate() const {
    if (!(a > 0.0) || !(c > 0.0) || !std::isfinite(a) || !std::isfinite(c)) {
        throw DomainError("kdesp: a and c must be positive and finite");
    }
    if (A && *A < 0) {
        throw DomainError("kdesp: A must be nonnegative");
    }
    if (T < 0) {
        throw DomainError("kdesp: T must be nonnegative");
    }
    if (n_sim < 2) {
        throw DomainError("kdesp: n_sim must be >= 2");
    }
    if (bandwidth.rule == BandwidthRule::fixed && !(bandwidth.h > 0.0)) {
        throw DomainError("kdesp: fixed bandwidth must be positive");
    }
}

SpsaGains spsa_schedules(const KdeSpConfig& cfg, Index t) {
    if (t < 1) {
        throw DomainError("spsa_schedules: iteration must be >= 1");
    }
    const double td = static_cast<double>(t);
    return {cfg.a / std::pow(td + static_cast<double>(cfg.stability_offset()), cfg.alpha),
            cfg.c / std::pow(td, cfg.gamma)};
}

Vector<double> kde_bandwidths(const DataMatrix& sims, const Bandwidth& rule) {
    const Index k = sims.cols();
    if (rule.rule == BandwidthRule::fixed) {
        if (!(rule.h > 0.0)) {
            throw DomainError("kde: bandwidth must be positive");
        }
        return Vector<double>::Constant(k, rule.h);
    }
    const Index n = sims.rows();
    if (n < 2) {
        throw DomainError("kde: at least two simulations are needed for a bandwidth rule");
    }
    const Eigen::RowVectorXd mean = sims.colwise().mean();
    const Vector<double> sd =
        ((sims.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    const double factor = rule.rule == BandwidthRule::silverman
                              ? std::pow(4.0 / ((kd + 2.0) * nd), 1.0 / (kd + 4.0))
                              : std::pow(nd, -1.0 / (kd + 4.0));
    Vector<double> h = factor * sd;
    if (!(h.minCoeff() > 0.0)) {
        throw DomainError("kde: degenerate simulations (zero spread) give a zero bandwidth");
    }
    return h;
}

double kde_log_density_sum(const DataMatrix& sims, const Vector<double>& bandwidths, const DataMatrix& observations) {
    require_dim(observations.cols(), sims.cols(), "kde observations");
    require_dim(bandwidths.size(), sims.cols(), "kde bandwidths");
    if (sims.rows() < 1) {
        throw DomainError("kde: no simulations");
    }
    if (!(bandwidths.minCoeff() > 0.0)) {
        throw DomainError("kde: bandwidth must be positive");
    }
    const Vector<double> inv_h = bandwidths.cwiseInverse();
    const DataMatrix scaled_sims = sims * inv_h.asDiagonal();
    const double log_norm = -std::log(static_cast<double>(sims.rows())) -
                            (bandwidths.array() * std::sqrt(2.0 * std::numbers::pi)).log().sum();

    Vector<double> exponents(sims.rows());
    double total = 0.0;
    for (Index i = 0; i < observations.rows(); ++i) {
        const Eigen::RowVectorXd x = observations.row(i).cwiseProduct(inv_h.transpose());
        exponents = -0.5 * (scaled_sims.rowwise() - x).rowwise().squaredNorm();
        const double peak = exponents.maxCoeff();
        total += peak + std::log((exponents.array() - peak).exp().sum()) + log_norm;
    }
    return total;
}

double kde_loglik(const SimulatorModel& model, const ParamVec& theta, const DataMatrix& observations, Index n_sim,
                  const Bandwidth& rule, const RngStream& stream) {
    if (n_sim < 2) {
        throw DomainError("kde_loglik: n_sim must be >= 2");
    }
    require_dim(observations.cols(), model.data_dim(), "observations");
    const DataMatrix sims = model.simulate(theta, n_sim, stream);
    return kde_log_density_sum(sims, kde_bandwidths(sims, rule), observations);
}

Vector<double> rademacher(Index d, RngStream stream) {
    Vector<double> delta(d);
    std::uint64_t bits = 0;
    for (Index i = 0; i < d; ++i) {
        if (i % 64 == 0) {
            bits = stream();
        }
        delta[i] = (bits >> (i % 64)) & 1U ? 1.0 : -1.0;
    }
    return delta;
}

Vector<double> spsa_difference(const LogLikSurrogate& loglik, const ParamVec& theta, const Vector<double>& delta,
                               double c, const RngStream& plus_stream, const RngStream& minus_stream) {
    require_dim(delta.size(), theta.size(), "spsa perturbation");
    const double plus = loglik(theta + c * delta, plus_stream);
    const double minus = loglik(theta - c * delta, minus_stream);
    return delta * ((plus - minus) / (2.0 * c));
}

Vector<double> spsa_gradient(const LogLikSurrogate& loglik, const ParamVec& theta, const KdeSpConfig& cfg, Index t,
                             const RngStream& stream) {
    const SpsaGains gains = spsa_schedules(cfg, t);
    const Vector<double> delta = rademacher(theta.size(), stream.child(0));
    const RngStream plus = stream.child(1);
    const RngStream minus = cfg.common_random_numbers ? plus : stream.child(2);
    return spsa_difference(loglik, theta, delta, gains.perturbation, plus, minus);
}

Vector<double> spsa_gradient(const SimulatorModel& model, const ParamVec& theta, const DataMatrix& observations,
                             const KdeSpConfig& cfg, Index t, const RngStream& stream) {
    model.check_param(theta);
    const LogLikSurrogate kde = [&](const ParamVec& at, const RngStream& s) {
        return kde_loglik(model, at, observations, cfg.n_sim, cfg.bandwidth, s);
    };
    return spsa_gradient(kde, theta, cfg, t, stream);
}

}  // namespace fsmle
