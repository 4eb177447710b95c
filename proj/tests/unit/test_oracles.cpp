#include "fsmle/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace fsmle;

namespace {

// log of the 1-d convolution int N(x; theta, 1) N(theta; c, s^2) dtheta by a fine trapezoid rule.
double convolved_log_density(double x, double c, double s) {
    const int n = 40001;
    const double lo = c - 12 * s, hi = c + 12 * s, h = (hi - lo) / (n - 1);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = lo + i * h;
        const double f = std::exp(-0.5 * (x - t) * (x - t)) * std::exp(-0.5 * (t - c) * (t - c) / (s * s)) /
                         (2 * std::numbers::pi * s);
        total += (i == 0 || i == n - 1 ? 0.5 : 1.0) * f;
    }
    return std::log(total * h);
}

Matrix<double> random_spd(Index d, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Matrix<double> a(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) a(i, j) = z(rng);
    return a * a.transpose() + 0.5 * Matrix<double>::Identity(d, d);
}

}  // namespace

TEST_CASE("Gauss-Hermite rule integrates normal moments") {
    const GaussHermiteRule r = gauss_hermite(20);
    CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.weights.dot(r.nodes) == doctest::Approx(0.0));
    CHECK(r.weights.dot(r.nodes.array().square().matrix()) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(r.weights.dot(r.nodes.array().pow(4).matrix()) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.weights.dot(r.nodes.array().pow(6).matrix()) == doctest::Approx(15.0).epsilon(1e-12));
    CHECK_THROWS((void)gauss_hermite(0));
}

TEST_CASE("exact smoothed gradient") {
    const Matrix<double> I = Matrix<double>::Identity(2, 2);
    Vector<double> c(2), x(2);
    c << 0.3, -1.0;
    CHECK(smoothed_grad_exact(I, 0.7, c, c).isZero(0.0));

    GaussianMeanModel g(2);
    x << 1.5, 2.0;
    CHECK(smoothed_grad_exact(I, 0.0, c, x) == g.closed_form_score(c, x));

    c.setZero();
    x << 2.0, 0.0;
    const Vector<double> s = smoothed_grad_exact(I, 1.0, c, x);
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] == 0.0);
    // numerical integration of the convolution, differentiated in the centre
    const double h = 1e-4;
    const double numeric = (convolved_log_density(2.0, h, 1.0) - convolved_log_density(2.0, -h, 1.0)) / (2 * h);
    CHECK(numeric == doctest::Approx(1.0).epsilon(1e-6));

    SmoothedGaussianOracle o{I, 1.0, c};
    CHECK(smoothed_grad_exact(o, x) == s);
    CHECK_THROWS_AS((void)smoothed_grad_exact(I, 1.0, c, Vector<double>::Zero(3)), DimensionError);
}

TEST_CASE("posterior-mean score equals the smoothed gradient") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.01, 2.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index d = 1 + trial % 4;
        const Matrix<double> cov = random_spd(d, rng);
        Vector<double> c(d), x(d);
        for (Index i = 0; i < d; ++i) {
            c[i] = z(rng);
            x[i] = c[i] + 2 * z(rng);
        }
        const double sigma = u(rng);
        worst = std::max(worst, (bayes_optimal_score_gaussian(cov, sigma, c, x) - smoothed_grad_exact(cov, sigma, c, x))
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("posterior-mean score limits") {
    const Matrix<double> I = Matrix<double>::Identity(2, 2);
    Vector<double> c = Vector<double>::Zero(2), x(2);
    x << 1.0, -2.0;
    CHECK(bayes_optimal_score_gaussian(I, 0.4, c, c).isZero(0.0));
    CHECK(bayes_optimal_score_gaussian(I, 0.0, c, x) == x);
    double prev = bayes_optimal_score_gaussian(I, 1.0, c, x).norm();
    for (double sigma : {10.0, 100.0, 1e4}) {
        const double v = bayes_optimal_score_gaussian(I, sigma, c, x).norm();
        CHECK(v < prev);
        CHECK(v == doctest::Approx(x.norm() / (1 + sigma * sigma)));
        prev = v;
    }
    CHECK(prev < 1e-7);
}

TEST_CASE("quadrature smoothed gradient") {
    GaussianMeanModel g(1);
    const ParamVec c = ParamVec::Constant(1, 0.2);
    const DataVec x = DataVec::Constant(1, 1.2);
    CHECK(smoothed_grad_quadrature(g, c, 0.5, x)[0] == doctest::Approx(0.8).epsilon(1e-6));

    // small sigma recovers the unsmoothed score
    CHECK(std::abs(smoothed_grad_quadrature(g, c, 1e-3, x)[0] - g.closed_form_score(c, x)[0]) <= 1e-3);

    Matrix<double> cov(2, 2);
    cov << 2.0, 0.4, 0.4, 0.7;
    GaussianMeanModel g2(cov);
    Vector<double> c2(2), x2(2);
    c2 << 0.5, -0.5;
    x2 << 1.0, 0.8;
    const Vector<double> exact = smoothed_grad_exact(cov, 0.3, c2, x2);
    CHECK((smoothed_grad_quadrature(g2, c2, 0.3, x2) - exact).cwiseAbs().maxCoeff() <= 1e-4);

    GaussianMeanModel g3(3);
    CHECK_THROWS_AS((void)smoothed_grad_quadrature(g3, ParamVec::Zero(3), 0.1, DataVec::Zero(3)), UnsupportedError);
}

TEST_CASE("grid quadrature is stable under refinement") {
    ShiftedExponentialModel se(1.0);
    const ParamVec c = ParamVec::Constant(1, -1.0);
    const DataVec x = DataVec::Constant(1, 1.0);
    const ParameterGrid coarse{ParamVec::Constant(1, -9.0), ParamVec::Constant(1, 1.0), 4001};
    const ParameterGrid fine{ParamVec::Constant(1, -9.0), ParamVec::Constant(1, 1.0), 8001};
    const double a = smoothed_grad_quadrature(se, c, 1.0, x, coarse)[0];
    const double b = smoothed_grad_quadrature(se, c, 1.0, x, fine)[0];
    CHECK(std::abs(a - b) <= 1e-5);

    GaussianMeanModel g(2);
    const ParameterGrid g_coarse{ParamVec::Constant(2, -4.0), ParamVec::Constant(2, 4.0), 201};
    const ParameterGrid g_fine{ParamVec::Constant(2, -4.0), ParamVec::Constant(2, 4.0), 401};
    const Vector<double> ga = smoothed_grad_quadrature(g, ParamVec::Zero(2), 0.5, DataVec::Ones(2), g_coarse);
    const Vector<double> gb = smoothed_grad_quadrature(g, ParamVec::Zero(2), 0.5, DataVec::Ones(2), g_fine);
    CHECK((ga - gb).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(gb[0] == doctest::Approx(0.8).epsilon(1e-4));
}

TEST_CASE("tractable and intractable objectives differ by a constant") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    double first = 0.0, spread = 0.0;
    for (int i = 0; i < 10; ++i) {
        const ObjectivePair p = score_matching_objectives_1d(1.3, 0.4, 0.2, z(rng), z(rng));
        const double diff = p.intractable - p.tractable;
        if (i == 0) first = diff;
        spread = std::max(spread, std::abs(diff - first));
    }
    CHECK(spread <= 1e-6);
}

TEST_CASE("bias scaling probe") {
    GaussianMeanModel g(3);
    const ParamVec star = ParamVec::Ones(3);
    const std::vector<double> sigmas{0.0, 0.01, 0.1, 0.5, 1.0};
    const auto rows = bias_scaling_probe(g, star, star, sigmas, 10000, 4);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].bias == 0.0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].bias > rows[i - 1].bias);
        CHECK(rows[i].bias <= 1.05 * rows[i].bound);
    }
    // With Sigma = I the bias is (1 - 1/(1 + sigma^2)) E|x - theta|, a chi mean for d = 3.
    const double chi_mean = std::sqrt(2.0) * std::tgamma(2.0) / std::tgamma(1.5);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double s2 = sigmas[i] * sigmas[i];
        CHECK(rows[i].bias == doctest::Approx(s2 / (1 + s2) * chi_mean).epsilon(0.03));
    }
    CHECK(rows[2].lipschitz == doctest::Approx(1.0));
    CHECK(rows[2].mean_ratio == doctest::Approx(1.0));
}
