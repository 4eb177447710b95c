#include "fsmle/inference.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace fsmle;

namespace {

// Independent quantile: bisection on Phi(z) = erfc(-z / sqrt 2) / 2.
double quantile_by_bisection(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

FisherInfoEstimate identity_info(Index d) { return make_fisher_info(Matrix<double>::Identity(d, d), 1000, ParamVec::Zero(d)); }

}  // namespace

TEST_CASE("normal quantile against a bisection oracle") {
    for (double p : {1e-10, 1e-6, 0.001, 0.01, 0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975, 0.995, 0.999999}) {
        CHECK(normal_quantile(p) == doctest::Approx(quantile_by_bisection(p)).epsilon(1e-10));
    }
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK_THROWS_AS((void)normal_quantile(0.0), DomainError);
    CHECK_THROWS_AS((void)normal_quantile(1.0), DomainError);
}

TEST_CASE("score outer product is symmetric and PSD") {
    Matrix<double> scores = Matrix<double>::Random(50, 3);
    const Matrix<double> info = score_outer_product(scores);
    CHECK(info == info.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(info);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
    CHECK(info(0, 1) == doctest::Approx(scores.col(0).dot(scores.col(1)) / 50.0));
}

TEST_CASE("closed-form Fisher information of Gaussian location models") {
    GaussianMeanModel iso(2);
    const FisherInfoEstimate a =
        estimate_fisher_info(iso, ParamVec::Ones(2), 100000, ScoreSource::closed_form, {}, RngStream(1));
    CHECK((a.matrix - Matrix<double>::Identity(2, 2)).cwiseAbs().maxCoeff() <= 0.05);
    CHECK(a.matrix == a.matrix.transpose());
    CHECK_FALSE(a.rank_deficient);

    Matrix<double> cov = Matrix<double>::Zero(2, 2);
    cov.diagonal() << 4.0, 1.0;
    GaussianMeanModel aniso(cov);
    const FisherInfoEstimate b =
        estimate_fisher_info(aniso, ParamVec::Zero(2), 100000, ScoreSource::closed_form, {}, RngStream(2));
    const Matrix<double> truth = cov.inverse();
    CHECK(b.matrix(0, 0) == doctest::Approx(0.25).epsilon(0.05));
    CHECK(b.matrix(1, 1) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::abs(b.matrix(0, 1)) < 0.02);
    CHECK((b.matrix - truth).norm() < 0.05);
}

TEST_CASE("a single simulation gives a rank-one estimate") {
    GaussianMeanModel g(3);
    const FisherInfoEstimate one =
        estimate_fisher_info(g, ParamVec::Zero(3), 1, ScoreSource::closed_form, {}, RngStream(3));
    CHECK(one.rank_deficient);
    Eigen::FullPivLU<Matrix<double>> lu(one.matrix);
    CHECK(lu.rank() == 1);
    CHECK_THROWS_AS((void)confidence_interval(ParamVec::Zero(3), one, 10, 0.95), SingularMatrixError);
}

TEST_CASE("FSM and closed-form score sources agree") {
    GaussianMeanModel g(2);
    FsmSettings fsm;
    fsm.sigma = 0.1;
    fsm.m = 20000;  // the local fit needs a budget well above 1 / sigma^2 for 10% accuracy
    fsm.n = 10;
    const ParamVec at = ParamVec::Ones(2);
    std::vector<double> rel;
    for (int r = 0; r < 5; ++r) {
        const FisherInfoEstimate exact =
            estimate_fisher_info(g, at, 10000, ScoreSource::closed_form, fsm, RngStream(4).child(r));
        const FisherInfoEstimate fitted = estimate_fisher_info(g, at, 10000, ScoreSource::fsm, fsm, RngStream(4).child(r));
        rel.push_back((fitted.matrix - exact.matrix).norm() / exact.matrix.norm());
    }
    std::sort(rel.begin(), rel.end());
    CHECK(rel[2] <= 0.1);
}

TEST_CASE("confidence interval arithmetic") {
    const ConfidenceInterval ci = confidence_interval(ParamVec::Zero(2), identity_info(2), 100, 0.95);
    CHECK(ci.upper[0] == doctest::Approx(0.1959963984540054));
    CHECK(ci.lower[1] == doctest::Approx(-0.1959963984540054));

    const ConfidenceInterval half = confidence_interval(ParamVec::Zero(1), identity_info(1), 1, 0.5);
    CHECK(half.upper[0] == doctest::Approx(quantile_by_bisection(0.75)).epsilon(1e-10));
    CHECK(half.upper[0] == doctest::Approx(0.674).epsilon(1e-3));

    // halving the information doubles the inverse diagonal: widths scale by sqrt 2
    const FisherInfoEstimate halved = make_fisher_info(0.5 * Matrix<double>::Identity(2, 2), 1000, ParamVec::Zero(2));
    const ConfidenceInterval wide = confidence_interval(ParamVec::Zero(2), halved, 100, 0.95);
    CHECK(wide.upper[0] / ci.upper[0] == doctest::Approx(std::sqrt(2.0)));

    Vector<double> inside(2), outside(2);
    inside << 0.1, -0.19;
    outside << 0.1, 0.2;
    CHECK(ci.contains(inside).all());
    CHECK_FALSE(ci.contains(outside).all());
    CHECK(ci.contains(outside)[0]);

    CHECK_THROWS_AS((void)confidence_interval(ParamVec::Zero(2), identity_info(2), 100, 1.0), DomainError);
    CHECK_THROWS_AS((void)confidence_interval(ParamVec::Zero(2), identity_info(2), 0, 0.9), DomainError);
}

TEST_CASE("higher level gives wider intervals") {
    Matrix<double> m(2, 2);
    m << 2.0, 0.3, 0.3, 0.5;
    const FisherInfoEstimate info = make_fisher_info(m, 100, ParamVec::Zero(2));
    double prev = 0.0;
    for (double level : {0.1, 0.5, 0.8, 0.9, 0.95, 0.99, 0.9999}) {
        const ConfidenceInterval ci = confidence_interval(ParamVec::Zero(2), info, 50, level);
        CHECK(ci.upper[1] > prev);
        prev = ci.upper[1];
        CHECK((ci.upper + ci.lower).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("singular information advises on remedies") {
    Matrix<double> m = Matrix<double>::Zero(2, 2);
    m(0, 0) = 1.0;
    try {
        (void)confidence_interval(ParamVec::Zero(2), make_fisher_info(m, 10, ParamVec::Zero(2)), 10, 0.9);
        FAIL("expected SingularMatrixError");
    } catch (const SingularMatrixError& e) {
        CHECK(std::string(e.what()).find("n_sim") != std::string::npos);
    }
}

namespace {

CoverageSettings cheap_settings() {
    CoverageSettings s;
    s.optimizer.update_rule = UpdateRule::adam;
    s.optimizer.step_size = 0.1;
    s.optimizer.T = 60;
    s.optimizer.avg_window = 30;
    s.optimizer.theta0 = ParamVec::Zero(2);
    s.optimizer.fsm.m = 200;
    s.fisher_sims = 2000;
    s.source = ScoreSource::closed_form;
    return s;
}

}  // namespace

TEST_CASE("coverage with one run is zero or one") {
    GaussianMeanModel g(2);
    const CoverageResult r = coverage_experiment(g, ParamVec::Ones(2), 50, 1, cheap_settings(), 0.95, 7);
    REQUIRE(r.runs.size() == 1);
    CHECK((r.averaged == 0.0 || r.averaged == 0.5 || r.averaged == 1.0));
    for (Index i = 0; i < 2; ++i) CHECK((r.per_coordinate[i] == 0.0 || r.per_coordinate[i] == 1.0));
}

TEST_CASE("near-total intervals cover almost always, independent of thread count") {
    GaussianMeanModel g(2);
    const CoverageResult r = coverage_experiment(g, ParamVec::Ones(2), 50, 100, cheap_settings(), 0.9999, 8, 2);
    CHECK(r.averaged >= 0.99);
    const CoverageResult serial = coverage_experiment(g, ParamVec::Ones(2), 50, 100, cheap_settings(), 0.9999, 8, 1);
    for (std::size_t i = 0; i < r.runs.size(); ++i) CHECK(r.runs[i].estimate == serial.runs[i].estimate);
}
