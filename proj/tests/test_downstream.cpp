#include "test_util.hpp"

#include "mead/downstream.hpp"

#include <cmath>

using namespace mead;
using testutil::max_abs;

namespace {

Matrix two_group_proportions() {
    Vector p1(8);
    p1 << 0.60, 0.55, 0.65, 0.62, 0.30, 0.35, 0.28, 0.33;
    Matrix p(8, 2);
    p.col(0) = p1;
    p.col(1) = Vector::Ones(8) - p1;
    return p;
}

Matrix group_indicator() {
    Matrix z(8, 1);
    z << 1, 1, 1, 1, 0, 0, 0, 0;
    return z;
}

}  // namespace

TEST_CASE("constant proportions give zero effects") {
    Matrix p(6, 3);
    for (Index i = 0; i < 6; ++i) p.row(i) << 0.2, 0.3, 0.5;
    Matrix z(6, 2);
    z << 1, 0.5, 2, -1, 3, 0, 4, 2, 5, 1, 6, -2;
    DownstreamFit fit = fit_regression(p, z);
    CHECK(max_abs(fit.a_hat) < 1e-12);
    CHECK(max_abs(fit.p0_hat - p.row(0).transpose()) < 1e-12);
    regression_inference(fit, 0.95, 1000, 6);
    CHECK(max_abs(fit.se) < 1e-12);
    CHECK(max_abs(fit.upper - fit.lower) < 1e-12);
}

TEST_CASE("two-group design matches the pooled t test") {
    DownstreamFit fit = fit_regression(two_group_proportions(), group_indicator());
    CHECK(fit.a_hat(0, 0) == doctest::Approx(0.29).epsilon(1e-12));
    CHECK(fit.a_hat(0, 1) == doctest::Approx(-0.29).epsilon(1e-12));
    regression_inference(fit, 0.95, 1000, 8);
    CHECK(fit.se(0, 0) == doctest::Approx(0.026140645235596862).epsilon(1e-10));
    const double half = 2.4469118511449692 * 0.026140645235596862;
    CHECK(fit.upper(0, 0) - 0.29 == doctest::Approx(half).epsilon(1e-9));
    CHECK(fit.global_wald.dropped_last_type);
    CHECK(fit.global_wald.dof == 1);
    CHECK(fit.global_wald.statistic == doctest::Approx(123.07317073170739).epsilon(1e-10));
    CHECK(fit.global_wald.p_value == doctest::Approx(1.3439995371316545e-28).epsilon(1e-6));
    CHECK_FALSE(fit.regime_warning);
}

TEST_CASE("regime warning fires for many samples per gene with a rejected null") {
    DownstreamFit fit = fit_regression(two_group_proportions(), group_indicator());
    regression_inference(fit, 0.95, 40, 8);  // N / G = 0.2
    CHECK(fit.regime_warning);
    CHECK_FALSE(fit.warning.empty());
}

TEST_CASE("too few samples") {
    Matrix p = Matrix::Constant(2, 2, 0.5);
    Matrix z(2, 1);
    z << 0, 1;
    CHECK_THROWS_AS(fit_regression(p, z), ParameterError);
}

TEST_CASE("collinear covariates") {
    Matrix p = two_group_proportions();
    Matrix z(8, 2);
    z.col(0) = group_indicator().col(0);
    z.col(1) = 2.0 * z.col(0);
    CHECK_THROWS_AS(fit_regression(p, z), DegenerateError);
}

TEST_CASE("effects match least squares on random data") {
    Matrix p = Matrix::Random(30, 3).cwiseAbs();
    for (Index i = 0; i < 30; ++i) p.row(i) /= p.row(i).sum();
    const Matrix z = Matrix::Random(30, 2);
    DownstreamFit fit = fit_regression(p, z);
    Matrix x(30, 3);
    x.col(0).setOnes();
    x.rightCols(2) = z;
    const Matrix coef = x.colPivHouseholderQr().solve(p);
    CHECK(max_abs(fit.a_hat - coef.bottomRows(2)) < 1e-12);
    CHECK(max_abs(fit.a_hat * Vector::Ones(3)) < 1e-12);
    regression_inference(fit, 0.9, 5000, 30);
    CHECK(fit.global_wald.dof == 4);
    CHECK(fit.global_wald.p_value >= 0.0);
    CHECK(fit.global_wald.p_value <= 1.0);
}

TEST_CASE("residuals are orthogonal to the covariates") {
    Matrix p = Matrix::Random(25, 4).cwiseAbs();
    for (Index i = 0; i < 25; ++i) p.row(i) /= p.row(i).sum();
    const Matrix z = Matrix::Random(25, 3);
    const DownstreamFit fit = fit_regression(p, z);
    CHECK(max_abs(fit.centered_z.transpose() * fit.residuals) < 1e-10);
    CHECK(max_abs(fit.residuals.colwise().sum()) < 1e-10);
}
