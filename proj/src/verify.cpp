#include "fsmle/verify.hpp"

#include "fsmle/kdesp.hpp"
#include "fsmle/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fsmle {

bool VerifyReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

SimBatch random_batch(Index d, Index k, Index m, Index n, const RngStream& stream) {
    RngStream rng = stream;
    std::normal_distribution<double> normal;
    auto fill = [&](auto& mat) {
        for (Index r = 0; r < mat.rows(); ++r) {
            for (Index c = 0; c < mat.cols(); ++c) {
                mat(r, c) = normal(rng);
            }
        }
    };
    SimBatch batch;
    batch.center = ParamVec(d);
    fill(batch.center);
    batch.sigma = 0.05 + std::uniform_real_distribution<double>(0.0, 0.5)(rng);
    Matrix<double> z(m, d);
    fill(z);
    batch.thetas = (batch.sigma * z).rowwise() + batch.center.transpose();
    Matrix<double> mixing(k, d);
    fill(mixing);
    batch.n_per_proposal = n;
    batch.data.resize(m * n, k);
    fill(batch.data);
    for (Index j = 0; j < m; ++j) {
        batch.data.middleRows(j * n, n).rowwise() += (mixing * batch.thetas.row(j).transpose()).transpose();
    }
    return batch;
}

namespace {

CheckResult check(std::string name, double residual, double tolerance) {
    return {std::move(name), residual, tolerance, residual <= tolerance && std::isfinite(residual)};
}

double objective_gradient_max(const SimBatch& batch, const LinearScoreModel& model) {
    double worst = 0.0;
    Matrix<double> w = model.weights;
    for (Index r = 0; r < w.rows(); ++r) {
        for (Index c = 0; c < w.cols(); ++c) {
            const double h = 1e-5;
            const double saved = w(r, c);
            w(r, c) = saved + h;
            const double plus = empirical_objective(batch, w, model.affine);
            w(r, c) = saved - h;
            const double minus = empirical_objective(batch, w, model.affine);
            w(r, c) = saved;
            worst = std::max(worst, std::abs(plus - minus) / (2.0 * h));
        }
    }
    return worst;
}

}  // namespace

VerifyReport run_verification(Index trials, std::uint64_t seed, const Fitter& fitter) {
    const Fitter fit = fitter ? fitter : Fitter([](const SimBatch& b, const FitOptions& o) { return fit_linear_fsm(b, o); });
    const RngStream master(seed);
    VerifyReport report;

    // normal equations on random batches
    {
        double worst = 0.0;
        for (Index i = 0; i < trials; ++i) {
            RngStream rng = master.child({1, static_cast<std::uint64_t>(i)});
            std::uniform_int_distribution<Index> dim(1, 5);
            std::uniform_int_distribution<Index> mm(1, 50);
            std::uniform_int_distribution<Index> nn(1, 10);
            const Index d = dim(rng), k = dim(rng), m = mm(rng), n = nn(rng);
            const SimBatch batch = random_batch(d, k, m, n, rng.child(99));
            worst = std::max(worst, normal_equation_residual(batch, fit(batch, FitOptions{})));
        }
        report.checks.push_back(check("normal_equation_residual", worst, 1e-8));
    }

    // stationarity of the Monte-Carlo objective without ridge
    {
        const SimBatch batch = random_batch(2, 3, 200, 5, master.child(2));
        FitOptions options;
        options.ridge = 0.0;
        const LinearScoreModel model = fit(batch, options);
        report.checks.push_back(check("objective_first_order_optimality", objective_gradient_max(batch, model), 1e-4));
    }

    // posterior-mean score equals the smoothed-likelihood gradient
    {
        double worst = 0.0;
        RngStream rng = master.child(3);
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unit(0.05, 2.0);
        for (Index i = 0; i < trials; ++i) {
            const Index d = 1 + i % 3;
            Matrix<double> a(d, d);
            for (Index r = 0; r < d; ++r)
                for (Index c = 0; c < d; ++c) a(r, c) = normal(rng);
            const Matrix<double> cov = a * a.transpose() + Matrix<double>::Identity(d, d);
            ParamVec x(d), center(d);
            for (Index r = 0; r < d; ++r) {
                x[r] = normal(rng);
                center[r] = normal(rng);
            }
            const double sigma = unit(rng);
            const Vector<double> lhs = bayes_optimal_score_gaussian(cov, sigma, center, x);
            const Vector<double> rhs = smoothed_grad_exact(cov, sigma, center, x);
            worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
        }
        report.checks.push_back(check("posterior_mean_score_equals_smoothed_gradient", worst, 1e-12));
    }

    // quadrature against the exact smoothed gradient, d = 1 and d = 2
    {
        double worst = 0.0;
        const GaussianMeanModel one(Matrix<double>::Identity(1, 1));
        Matrix<double> cov2(2, 2);
        cov2 << 1.5, 0.3, 0.3, 0.8;
        const GaussianMeanModel two(cov2);
        for (double sigma : {0.1, 0.5, 1.0}) {
            const ParamVec c1 = ParamVec::Constant(1, 0.3);
            const DataVec x1 = DataVec::Constant(1, 1.3);
            worst = std::max(worst, (smoothed_grad_quadrature(one, c1, sigma, x1) -
                                     smoothed_grad_exact(one.covariance(), sigma, c1, x1))
                                        .cwiseAbs()
                                        .maxCoeff());
            ParamVec c2(2);
            c2 << 0.2, -0.4;
            DataVec x2(2);
            x2 << 1.0, 0.5;
            worst = std::max(worst, (smoothed_grad_quadrature(two, c2, sigma, x2) -
                                     smoothed_grad_exact(two.covariance(), sigma, c2, x2))
                                        .cwiseAbs()
                                        .maxCoeff());
        }
        report.checks.push_back(check("quadrature_matches_exact_smoothed_gradient", worst, 1e-4));
    }

    // quadrature self-consistency on the non-smooth model: halving the grid step
    {
        const ShiftedExponentialModel model(1.0);
        const ParamVec center = ParamVec::Constant(1, 2.0);
        const DataVec x = DataVec::Constant(1, 1.0);
        // the grid ends at the support boundary theta = x, so the integrand is smooth on it
        ParameterGrid coarse{ParamVec::Constant(1, -9.0), ParamVec::Constant(1, 1.0), 4001};
        ParameterGrid fine = coarse;
        fine.points = 2 * coarse.points - 1;
        const double diff = std::abs(smoothed_grad_quadrature(model, center, 0.5, x, coarse)[0] -
                                     smoothed_grad_quadrature(model, center, 0.5, x, fine)[0]);
        report.checks.push_back(check("quadrature_grid_refinement", diff, 1e-5));
    }

    // the intractable and tractable objectives differ by a W-independent constant
    {
        RngStream rng = master.child(5);
        std::normal_distribution<double> normal;
        std::vector<double> gaps;
        for (int i = 0; i < 10; ++i) {
            const ObjectivePair pair = score_matching_objectives_1d(1.0, 0.3, 0.5, normal(rng), normal(rng));
            gaps.push_back(pair.intractable - pair.tractable);
        }
        const auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
        report.checks.push_back(check("objective_constant_offset", *hi - *lo, 1e-6));
    }

    // smoothing bias: zero at sigma = 0, increasing, below the bound
    {
        const GaussianMeanModel model(2);
        const ParamVec theta = ParamVec::Ones(2);
        const auto rows = bias_scaling_probe(model, theta, theta, {0.0, 0.01, 0.1, 0.5, 1.0}, 10000, seed);
        bool shape_ok = rows.front().bias == 0.0;
        double excess = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0 && !(rows[i].bias > rows[i - 1].bias)) {
                shape_ok = false;
            }
            excess = std::max(excess, rows[i].bias - 1.05 * rows[i].bound);
        }
        CheckResult c = check("smoothing_bias_scaling", excess, 0.0);
        c.passed = c.passed && shape_ok;
        report.checks.push_back(c);
    }

    // SPSA on exact surrogates
    {
        KdeSpConfig cfg;
        cfg.c = 0.3;
        cfg.T = 100;
        const LogLikSurrogate linear = [](const ParamVec& t, const RngStream&) { return 2.5 * t[0]; };
        const LogLikSurrogate bowl = [](const ParamVec& t, const RngStream&) { return -t.squaredNorm(); };
        double worst = 0.0;
        for (Index t = 1; t <= 20; ++t) {
            const RngStream s = master.child({6, static_cast<std::uint64_t>(t)});
            worst = std::max(worst, std::abs(spsa_gradient(linear, ParamVec::Constant(1, 0.7), cfg, t, s)[0] - 2.5));
            worst = std::max(worst, spsa_gradient(bowl, ParamVec::Zero(3), cfg, t, s).cwiseAbs().maxCoeff());
        }
        report.checks.push_back(check("spsa_exact_on_linear_and_symmetric", worst, 1e-12));
    }

    return report;
}

}  // namespace fsmle
