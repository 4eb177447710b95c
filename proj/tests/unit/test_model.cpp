#include "fsmle/model.hpp"

#include <doctest.h>

#include <cmath>

using namespace fsmle;

TEST_CASE("gaussian simulate shape and zero-mean sanity") {
    GaussianMeanModel model(2);
    const DataMatrix small = model.simulate(ParamVec::Zero(2), 3, RngStream(1));
    CHECK(small.rows() == 3);
    CHECK(small.cols() == 2);

    const Index n = 20000;
    const DataMatrix big = model.simulate(ParamVec::Zero(2), n, RngStream(2));
    const Vector<double> mean = big.colwise().mean().transpose();
    for (Index i = 0; i < 2; ++i) {
        CHECK(std::abs(mean[i]) <= 4.0 * std::sqrt(1.0 / n));
    }
}

TEST_CASE("gaussian sample mean within four standard errors for a general covariance") {
    Matrix<double> cov(3, 3);
    cov << 4, 1, 0, 1, 2, 0.5, 0, 0.5, 1;
    GaussianMeanModel model(cov);
    ParamVec theta(3);
    theta << 1, -2, 0.5;
    const Index n = 10000;
    const DataMatrix x = model.simulate(theta, n, RngStream(3));
    const Vector<double> mean = x.colwise().mean().transpose();
    const double tol = 4.0 * std::sqrt(cov.diagonal().maxCoeff() / n);
    for (Index i = 0; i < 3; ++i) {
        CHECK(std::abs(mean[i] - theta[i]) <= tol);
    }
    // empirical covariance against the configured one
    const DataMatrix centered = x.rowwise() - x.colwise().mean();
    const Matrix<double> emp = centered.transpose() * centered / double(n - 1);
    CHECK((emp - cov).cwiseAbs().maxCoeff() < 0.25);
}

TEST_CASE("shifted exponential support and mean") {
    ShiftedExponentialModel model(1.0);
    const DataMatrix x = model.simulate(ParamVec::Constant(1, 5.0), 1000, RngStream(4));
    CHECK(x.minCoeff() >= 5.0);
    // E[x] = theta + 1/rate, standard error 1/sqrt(1000)
    CHECK(std::abs(x.mean() - 6.0) < 4.0 / std::sqrt(1000.0));

    ShiftedExponentialModel fast(4.0);
    const DataMatrix y = fast.simulate(ParamVec::Constant(1, -1.0), 5000, RngStream(5));
    CHECK(y.minCoeff() >= -1.0);
    CHECK(std::abs(y.mean() - (-1.0 + 0.25)) < 4.0 * 0.25 / std::sqrt(5000.0));
}

TEST_CASE("simulate is a pure function of its arguments") {
    GaussianMeanModel g(2);
    const ParamVec theta = ParamVec::Constant(2, 0.3);
    CHECK(g.simulate(theta, 50, RngStream(9)) == g.simulate(theta, 50, RngStream(9)));
    CHECK(g.simulate(theta, 50, RngStream(9)) != g.simulate(theta, 50, RngStream(10)));

    ShiftedExponentialModel s;
    CHECK(s.simulate(ParamVec::Constant(1, 2.0), 20, RngStream(1).child(7)) ==
          s.simulate(ParamVec::Constant(1, 2.0), 20, RngStream(1).child(7)));
}

TEST_CASE("simulate validates its parameter") {
    GaussianMeanModel g(2);
    CHECK_THROWS_AS((void)g.simulate(ParamVec::Zero(3), 2, RngStream(1)), DimensionError);
    ParamVec bad(2);
    bad << 0.0, std::nan("");
    CHECK_THROWS_AS((void)g.simulate(bad, 2, RngStream(1)), DomainError);
    CHECK_THROWS_AS((void)g.simulate(ParamVec::Zero(2), -1, RngStream(1)), DomainError);
}

TEST_CASE("gaussian closed-form score") {
    GaussianMeanModel g(2);
    ParamVec theta(2), x(2);
    theta << 1, 1;
    x << 1, 1;
    CHECK(g.closed_form_score(theta, x).isZero(0.0));

    theta << 0, 0;
    x << 2, -1;
    const Vector<double> s = g.closed_form_score(theta, x);
    CHECK(s[0] == doctest::Approx(2.0));
    CHECK(s[1] == doctest::Approx(-1.0));

    Matrix<double> cov = Matrix<double>::Zero(2, 2);
    cov.diagonal() << 4, 1;
    GaussianMeanModel aniso(cov);
    x << 2, 2;
    // independent solve of Sigma s = x - theta
    const Vector<double> expected = cov.fullPivLu().solve(x - theta);
    const Vector<double> got = aniso.closed_form_score(theta, x);
    CHECK(got[0] == doctest::Approx(0.5));
    CHECK(got[1] == doctest::Approx(2.0));
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("shifted exponential score and density") {
    ShiftedExponentialModel s(2.0);
    const ParamVec theta = ParamVec::Constant(1, 1.0);
    CHECK(s.closed_form_score(theta, DataVec::Constant(1, 3.0))[0] == doctest::Approx(2.0));
    CHECK_THROWS_AS((void)s.closed_form_score(theta, DataVec::Constant(1, 0.5)), DomainError);
    CHECK(s.log_density(theta, DataVec::Constant(1, 1.5)) == doctest::Approx(std::log(2.0) - 1.0));
    CHECK(std::isinf(s.log_density(theta, DataVec::Constant(1, 0.5))));

    DataMatrix obs(3, 1);
    obs << 4.0, 2.5, 3.0;
    CHECK((*s.exact_mle(obs))[0] == 2.5);
}

TEST_CASE("gaussian exact mle is the sample mean") {
    GaussianMeanModel g(2);
    DataMatrix obs(2, 2);
    obs << 1, 2, 3, 6;
    const ParamVec mle = *g.exact_mle(obs);
    CHECK(mle[0] == doctest::Approx(2.0));
    CHECK(mle[1] == doctest::Approx(4.0));
}

TEST_CASE("gaussian rejects a covariance that is not SPD") {
    Matrix<double> cov(2, 2);
    cov << 1, 2, 2, 1;
    CHECK_THROWS_AS(GaussianMeanModel{cov}, DomainError);
    CHECK_THROWS(GaussianMeanModel{Index(0)});
    CHECK_THROWS(ShiftedExponentialModel{0.0});
}

TEST_CASE("child streams are independent of derivation order") {
    RngStream master(42);
    const auto a = master.child({3, 5});
    const auto b = master.child(3).child(5);
    CHECK(a.key() == b.key());
    CHECK(master.child(1).key() != master.child(2).key());
    RngStream s1 = a, s2 = b;
    for (int i = 0; i < 10; ++i) CHECK(s1() == s2());
}
