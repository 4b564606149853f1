#include "test_util.hpp"

#include "mead/reference.hpp"

using namespace mead;

namespace {

ReferencePanel panel(std::vector<Matrix> means) {
    ReferencePanel r;
    const Index G = means.front().rows(), K = means.front().cols();
    for (Index g = 0; g < G; ++g) r.gene_ids.push_back("g" + std::to_string(g));
    for (Index k = 0; k < K; ++k) r.cell_types.push_back("t" + std::to_string(k));
    for (std::size_t j = 0; j < means.size(); ++j) {
        r.individual_ids.push_back("i" + std::to_string(j));
        r.cell_counts.push_back(Eigen::VectorXi::Constant(K, 10));
    }
    r.means = std::move(means);
    return r;
}

}  // namespace

TEST_CASE("scaling factor is the grand mean of each individual") {
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    const Vector gamma = estimate_scaling(panel({a, Matrix::Constant(2, 2, 7.0)}));
    CHECK(gamma(0) == doctest::Approx(2.5));
    CHECK(gamma(1) == doctest::Approx(7.0));

    const Vector doubled = estimate_scaling(panel({2.0 * a, Matrix::Constant(2, 2, 7.0)}));
    CHECK(doubled(0) == doctest::Approx(5.0));
    CHECK(doubled(1) == doctest::Approx(7.0));
}

TEST_CASE("signature from proportional individuals") {
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    const ReferencePanel r = panel({a, 2.0 * a});
    const SignatureEstimate s = estimate_reference(r);
    CHECK(testutil::max_abs(s.u_hat - a / 2.5) < 1e-12);
    for (const Matrix& v : s.v_hat) CHECK(testutil::max_abs(v) < 1e-12);
    CHECK(s.u_hat.mean() == doctest::Approx(1.0));
}

TEST_CASE("single individual") {
    Matrix a(2, 2);
    a << 0.5, 1.5, 1, 1;
    const ReferencePanel r = panel({a});
    CHECK_THROWS(estimate_reference(r));
    const SignatureEstimate s = estimate_reference(r, true);
    CHECK(testutil::max_abs(s.u_hat - a) < 1e-12);
    CHECK(s.m == 1);
}

TEST_CASE("covariance uses the M(M-1) divisor") {
    // Gene 0 scales to 0 and 2 after each individual's factor of 1; gene 1 pins the grand mean.
    Matrix a(2, 1), b(2, 1);
    a << 0, 2;
    b << 2, 0;
    const ReferencePanel r = panel({a, b});
    const Vector gamma = estimate_scaling(r);
    REQUIRE(gamma(0) == doctest::Approx(1.0));
    const Matrix u = estimate_signature(r, gamma);
    const auto v = estimate_covariances(r, gamma, u);
    CHECK(v[0](0, 0) == doctest::Approx(1.0));
    CHECK(v[1](0, 0) == doctest::Approx(1.0));
}

TEST_CASE("grand mean of the signature is one on random panels") {
    std::vector<Matrix> means;
    for (int j = 0; j < 5; ++j) means.push_back(Matrix::Random(30, 3).cwiseAbs() * (j + 1));
    const SignatureEstimate s = estimate_reference(panel(means));
    CHECK(s.u_hat.mean() == doctest::Approx(1.0).epsilon(1e-12));
    for (const Matrix& v : s.v_hat) {
        CHECK(testutil::max_abs(v - v.transpose()) < 1e-14);
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(v).eigenvalues().minCoeff() > -1e-12);
    }
}

TEST_CASE("zero rows are flagged") {
    Matrix a = Matrix::Ones(3, 2), b = Matrix::Ones(3, 2);
    a.row(1).setZero();
    b.row(1).setZero();
    const SignatureEstimate s = estimate_reference(panel({a, b}));
    CHECK(s.zero_signal == std::vector<bool>{false, true, false});
}
