#pragma once

// KDE-SP baseline: a product-Gaussian-kernel density estimate of the likelihood from fresh
// simulations, differentiated by simultaneous perturbation (SPSA) with decaying gains
//   step_t = a / (t + A)^alpha,   c_t = c / t^gamma.

#include "fsmle/core.hpp"
#include "fsmle/model.hpp"
#include "fsmle/rng.hpp"

#include <functional>
#include <optional>

namespace fsmle {

enum class BandwidthRule { silverman, scott, fixed };

struct Bandwidth {
    BandwidthRule rule = BandwidthRule::silverman;
    double h = 0.0;  // used by BandwidthRule::fixed only
};

struct KdeSpConfig {
    double a = 1.0;
    double c = 1.0;
    double alpha = 1.0;
    double gamma = 1.0 / 6.0;
    std::optional<Index> A;  // unset means floor(0.1 T)
    Index T = 100;
    Bandwidth bandwidth;
    Index n_sim = 50;  // simulations per likelihood evaluation
    bool common_random_numbers = false;

    [[nodiscard]] Index stability_offset() const;
    void validate() const;
};

struct SpsaGains {
    double step;
    double perturbation;
};

[[nodiscard]] SpsaGains spsa_schedules(const KdeSpConfig& cfg, Index t);

/// Per-dimension bandwidths for the given simulated sample (rows are samples).
[[nodiscard]] Vector<double> kde_bandwidths(const DataMatrix& sims, const Bandwidth& rule);

/// sum_i log p_hat(x_i) for a product Gaussian kernel centred on each simulated row.
[[nodiscard]] double kde_log_density_sum(const DataMatrix& sims, const Vector<double>& bandwidths,
                                         const DataMatrix& observations);

/// Simulates n_sim draws at theta and returns the KDE log-likelihood of the observations.
[[nodiscard]] double kde_loglik(const SimulatorModel& model, const ParamVec& theta, const DataMatrix& observations,
                                Index n_sim, const Bandwidth& rule, const RngStream& stream);

/// Log-likelihood surrogate evaluated at a parameter with its own random stream.
using LogLikSurrogate = std::function<double(const ParamVec&, const RngStream&)>;

/// Rademacher vector with entries +-1.
[[nodiscard]] Vector<double> rademacher(Index d, RngStream stream);

/// delta * (l(theta + c delta) - l(theta - c delta)) / (2 c) for a fixed perturbation.
[[nodiscard]] Vector<double> spsa_difference(const LogLikSurrogate& loglik, const ParamVec& theta,
                                             const Vector<double>& delta, double c, const RngStream& plus_stream,
                                             const RngStream& minus_stream);

/// SPSA gradient at iteration t >= 1 with a Rademacher perturbation drawn from stream.
[[nodiscard]] Vector<double> spsa_gradient(const LogLikSurrogate& loglik, const ParamVec& theta,
                                           const KdeSpConfig& cfg, Index t, const RngStream& stream);

/// SPSA gradient of the KDE log-likelihood.
[[nodiscard]] Vector<double> spsa_gradient(const SimulatorModel& model, const ParamVec& theta,
                                           const DataMatrix& observations, const KdeSpConfig& cfg, Index t,
                                           const RngStream& stream);

}  // namespace fsmle
