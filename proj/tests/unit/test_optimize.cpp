#include "fsmle/experiments.hpp"
#include "fsmle/optimize.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace fsmle;

TEST_CASE("polyak averaging") {
    Matrix<double> c = Matrix<double>::Constant(7, 2, 3.25);
    CHECK(polyak_average(c, 4) == Vector<double>::Constant(2, 3.25));

    Matrix<double> seq(10, 1);
    for (int i = 0; i < 10; ++i) seq(i, 0) = i + 1;
    CHECK(polyak_average(seq, 10)[0] == doctest::Approx(5.5));
    CHECK(polyak_average(seq, 1)[0] == 10.0);
    CHECK(polyak_average(seq, 4)[0] == doctest::Approx(8.5));
    CHECK_THROWS_AS((void)polyak_average(seq, 0), DomainError);
    CHECK_THROWS_AS((void)polyak_average(seq, 11), DomainError);
}

TEST_CASE("adam matches its published update on a fixed gradient sequence") {
    Updater u(UpdateRule::adam, 0.1, 1);
    const double g[] = {1.0, 2.0, -1.0};
    // hand-evolved moments with beta1 0.9, beta2 0.999, eps 1e-8
    const double m1 = 0.1, v1 = 0.001;
    const double m2 = 0.9 * m1 + 0.1 * 2.0, v2 = 0.999 * v1 + 0.001 * 4.0;
    const double m3 = 0.9 * m2 - 0.1, v3 = 0.999 * v2 + 0.001;
    const double expected[] = {
        0.1 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8),
        0.1 * (m2 / 0.19) / (std::sqrt(v2 / (1 - 0.998001)) + 1e-8),
        0.1 * (m3 / (1 - 0.729)) / (std::sqrt(v3 / (1 - 0.997002999)) + 1e-8),
    };
    CHECK(expected[0] == doctest::Approx(0.1));
    for (int t = 0; t < 3; ++t) {
        CHECK(u.step(Vector<double>::Constant(1, g[t]))[0] == doctest::Approx(expected[t]).epsilon(1e-12));
    }
}

TEST_CASE("rmsprop matches its published update on a fixed gradient sequence") {
    Updater u(UpdateRule::rmsprop, 0.1, 1);
    // v: 0.1, 0.49, 0.541
    const double expected[] = {0.1 / (std::sqrt(0.1) + 1e-8), 0.2 / (0.7 + 1e-8), -0.1 / (std::sqrt(0.541) + 1e-8)};
    const double g[] = {1.0, 2.0, -1.0};
    for (int t = 0; t < 3; ++t) {
        CHECK(u.step(Vector<double>::Constant(1, g[t]))[0] == doctest::Approx(expected[t]).epsilon(1e-12));
    }
}

TEST_CASE("sgd with the exact score follows the linear recurrence") {
    Matrix<double> cov = Matrix<double>::Zero(2, 2);
    cov.diagonal() << 2.0, 0.5;
    GaussianMeanModel model(cov);
    const DataMatrix obs = model.simulate(ParamVec::Ones(2), 10, RngStream(1));
    const ParamVec xbar = obs.colwise().mean().transpose();
    const double N = 10, eta = 0.02;

    OptConfig cfg;
    cfg.update_rule = UpdateRule::sgd;
    cfg.step_size = eta;
    cfg.T = 25;
    cfg.avg_window = 5;
    cfg.theta0 = ParamVec::Constant(2, -3.0);
    const GradientFn exact = [&](const ParamVec& theta, Index, const RngStream&) {
        Vector<double> g = Vector<double>::Zero(2);
        for (Index i = 0; i < obs.rows(); ++i) g += model.closed_form_score(theta, obs.row(i).transpose());
        return g;
    };
    const OptTrace trace = run_optimizer(exact, cfg, 0);
    REQUIRE(trace.completed() == 25);
    // theta_t - xbar = (I - eta N Sigma^-1)^t (theta_0 - xbar), contraction 0.9 and 0.6
    const double rate[] = {1 - eta * N / 2.0, 1 - eta * N / 0.5};
    for (Index t = 0; t <= 25; ++t) {
        for (Index i = 0; i < 2; ++i) {
            const double want = xbar[i] + std::pow(rate[i], double(t)) * (cfg.theta0[i] - xbar[i]);
            CHECK(trace.iterates(t, i) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("T = 0 returns theta0") {
    GaussianMeanModel model(2);
    OptConfig cfg;
    cfg.T = 0;
    cfg.avg_window = 1;
    cfg.theta0 = ParamVec::Constant(2, 0.75);
    const OptTrace trace = run_mle(model, DataMatrix::Ones(3, 2), cfg, 1);
    CHECK(trace.completed() == 0);
    CHECK(trace.averaged == cfg.theta0);
}

TEST_CASE("divergence stops the run and keeps the trace so far") {
    OptConfig cfg;
    cfg.update_rule = UpdateRule::sgd;
    cfg.step_size = 1.0;
    cfg.T = 50;
    cfg.avg_window = 10;
    cfg.theta0 = ParamVec::Ones(1);
    const GradientFn explode = [](const ParamVec& theta, Index, const RngStream&) { return Vector<double>(99.0 * theta); };
    const OptTrace trace = run_optimizer(explode, cfg, 0);
    CHECK(trace.diverged);
    CHECK(trace.completed() == 3);  // 100, 10^4, 10^6; the fourth step passes 10^6
    CHECK(trace.iterates.rows() == 4);
    CHECK(trace.averaged.allFinite());

    const GradientFn nan = [](const ParamVec& theta, Index t, const RngStream&) {
        return Vector<double>(t == 3 ? Vector<double>::Constant(theta.size(), std::nan("")) : Vector<double>::Ones(1));
    };
    const OptTrace t2 = run_optimizer(nan, cfg, 0);
    CHECK(t2.diverged);
    CHECK(t2.completed() == 2);
}

TEST_CASE("optimizer config validation") {
    OptConfig cfg;
    cfg.theta0 = ParamVec::Zero(2);
    cfg.T = 10;
    cfg.avg_window = 11;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.avg_window = 5;
    cfg.method = Method::kdesp;
    cfg.update_rule = UpdateRule::adam;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.update_rule = UpdateRule::sgd;
    CHECK_NOTHROW(cfg.validate());
    cfg.T = -1;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("FSM-MLE is reproducible and improves on the initial error") {
    GaussianMeanModel model(3);
    OptConfig cfg;
    cfg.update_rule = UpdateRule::adam;
    cfg.step_size = 0.1;
    cfg.T = 60;
    cfg.avg_window = 20;
    cfg.theta0 = ParamVec::Zero(3);
    cfg.fsm.sigma = 0.1;
    cfg.fsm.m = 200;
    std::vector<double> errors;
    double initial = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
        const DataMatrix obs = model.simulate(ParamVec::Ones(3), 50, RngStream(seed).child(99));
        const ParamVec mle = *model.exact_mle(obs);
        initial = (cfg.theta0 - mle).norm();
        const OptTrace trace = run_mle(model, obs, cfg, seed);
        errors.push_back((trace.averaged - mle).norm());
        if (seed == 0) {
            CHECK(run_mle(model, obs, cfg, seed).iterates == trace.iterates);
        }
    }
    CHECK(median(errors) < 0.25 * initial);
}

TEST_CASE("KDE-SP runs under its gain schedule") {
    GaussianMeanModel model(2);
    const DataMatrix obs = model.simulate(ParamVec::Ones(2), 20, RngStream(3));
    OptConfig cfg;
    cfg.method = Method::kdesp;
    cfg.update_rule = UpdateRule::sgd;
    cfg.T = 40;
    cfg.avg_window = 10;
    cfg.theta0 = ParamVec::Zero(2);
    cfg.kdesp.a = 0.05;
    cfg.kdesp.c = 0.2;
    const OptTrace trace = run_mle(model, obs, cfg, 5);
    CHECK_FALSE(trace.diverged);
    CHECK(trace.completed() == 40);
    CHECK((trace.averaged - *model.exact_mle(obs)).norm() < (cfg.theta0 - *model.exact_mle(obs)).norm());
}

namespace {

OptConfig tune_base() {
    OptConfig cfg;
    cfg.update_rule = UpdateRule::adam;
    cfg.T = 100;
    cfg.avg_window = 50;
    cfg.theta0 = ParamVec::Zero(2);
    cfg.fsm.m = 100;
    return cfg;
}

}  // namespace

TEST_CASE("tune_grid selection rules") {
    GaussianMeanModel model(2);
    const DataMatrix obs = model.simulate(ParamVec::Ones(2), 100, RngStream(4));
    const OptConfig base = tune_base();
    CHECK(trial_iterations(100) == 20);
    CHECK(trial_iterations(1000) == 200);

    const TuneResult single = tune_grid(model, obs, base, {{0.05, 0.3}}, 1);
    CHECK(single.best == 0);
    CHECK(single.best_tuple().first == 0.05);

    std::vector<HyperTuple> grid;
    for (double s : {1e-3, 1e-2, 1e-1})
        for (double e : {1e-2, 1e-1, 1.0}) grid.push_back({s, e});
    const TuneResult full = tune_grid(model, obs, base, grid, 2);
    REQUIRE(full.table.size() == 9);
    double lowest = full.table[0].score;
    for (const auto& row : full.table) lowest = std::min(lowest, row.score);
    CHECK(full.table[static_cast<std::size_t>(full.best)].score == lowest);

    const TuneResult dup = tune_grid(model, obs, base, {{0.1, 0.1}, {0.1, 0.1}}, 3);
    CHECK(dup.table[0].score == dup.table[1].score);
    CHECK(dup.best == 0);

    CHECK(tune_grid(model, obs, base, grid, 2).best == full.best);
    CHECK_THROWS((void)tune_grid(model, obs, base, {}, 1));
}

TEST_CASE("tune_grid reports when every cell diverged") {
    GaussianMeanModel model(1);
    const DataMatrix obs = model.simulate(ParamVec::Ones(1), 100, RngStream(5));
    OptConfig base = tune_base();
    base.update_rule = UpdateRule::sgd;
    base.theta0 = ParamVec::Zero(1);
    try {
        (void)tune_grid(model, obs, base, {{0.1, 1e6}, {0.2, 1e7}}, 1);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("diverged") != std::string::npos);
    }
}
