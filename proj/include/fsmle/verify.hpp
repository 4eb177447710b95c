#pragma once

#include "fsmle/fsm.hpp"
#include "fsmle/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fsmle {

struct CheckResult {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    [[nodiscard]] bool passed() const;
};

using Fitter = std::function<LinearScoreModel(const SimBatch&, const FitOptions&)>;

/// Synthetic training batch with data x = A theta + noise, A random; d, k, m, n as given.
[[nodiscard]] SimBatch random_batch(Index d, Index k, Index m, Index n, const RngStream& stream);

/// Oracle identities and estimator invariants. `fitter` replaces fit_linear_fsm so that a
/// broken solver can be shown to fail.
[[nodiscard]] VerifyReport run_verification(Index trials, std::uint64_t seed, const Fitter& fitter = {});

}  // namespace fsmle
