#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "riskmpc/matlib.hpp"

using namespace riskmpc;

namespace {

// Closed-form eigenvalues of a symmetric 2x2 [[a, b], [b, d]].
std::pair<double, double> eig2x2(double a, double b, double d) {
    const double mean = 0.5 * (a + d);
    const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
    return {mean - disc, mean + disc};
}

Eigen::MatrixXd random_symmetric(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g(i, j) = nd(rng);
    return 0.5 * (g + g.transpose());
}

}  // namespace

TEST_CASE("sym_eig identity and diagonal") {
    auto r = sym_eig(SymMatrix::identity(3));
    for (int i = 0; i < 3; ++i) CHECK(r.values(i) == doctest::Approx(1.0));

    Eigen::VectorXd d(2);
    d << -2.0, 5.0;
    auto r2 = sym_eig(SymMatrix::diagonal(d));
    CHECK(r2.values(0) == doctest::Approx(-2.0));
    CHECK(r2.values(1) == doctest::Approx(5.0));
}

TEST_CASE("sym_eig 2x2 against hand oracle") {
    Eigen::MatrixXd m(2, 2);
    m << 2, 1, 1, 2;
    auto [lo, hi] = eig2x2(2, 1, 2);
    auto r = sym_eig(SymMatrix(m));
    CHECK(r.values(0) == doctest::Approx(lo).epsilon(1e-12));
    CHECK(r.values(1) == doctest::Approx(hi).epsilon(1e-12));
    CHECK(lo == doctest::Approx(1.0));
    CHECK(hi == doctest::Approx(3.0));
}

TEST_CASE("sym_eig reconstruction and orthogonality on random matrices") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 1 + static_cast<int>(rng() % 8);
        Eigen::MatrixXd m = random_symmetric(dim, rng);
        auto r = sym_eig(SymMatrix(m));
        const Eigen::MatrixXd rec =
            r.vectors * r.values.asDiagonal() * r.vectors.transpose();
        CHECK((rec - m).norm() <= 1e-9 * (1.0 + m.norm()));
        const Eigen::MatrixXd vtv = r.vectors.transpose() * r.vectors;
        CHECK((vtv - Eigen::MatrixXd::Identity(dim, dim)).norm() <= 1e-9);
        for (int i = 0; i + 1 < dim; ++i) CHECK(r.values(i) <= r.values(i + 1));
    }
}

TEST_CASE("sym_eig rejects non-finite and asymmetric input") {
    Eigen::MatrixXd bad(2, 2);
    bad << 1, 2, 3, 4;
    CHECK_THROWS_AS(SymMatrix{bad}, InvalidMatrix);
    Eigen::MatrixXd nan2 = Eigen::MatrixXd::Constant(2, 2, std::nan(""));
    CHECK_THROWS_AS(SymMatrix{nan2}, InvalidMatrix);
}

TEST_CASE("psd_sqrt diagonal and identity") {
    Eigen::VectorXd d(2);
    d << 4.0, 9.0;
    auto s = psd_sqrt(SymMatrix::diagonal(d));
    CHECK(s(0, 0) == doctest::Approx(2.0));
    CHECK(s(1, 1) == doctest::Approx(3.0));
    CHECK(s(0, 1) == doctest::Approx(0.0));

    auto i2 = psd_sqrt(SymMatrix::identity(2));
    CHECK((i2.mat() - Eigen::MatrixXd::Identity(2, 2)).norm() ==
          doctest::Approx(0.0));
}

TEST_CASE("psd_sqrt multiply-back oracle") {
    Eigen::MatrixXd m(2, 2);
    m << 2, 1, 1, 2;
    auto s = psd_sqrt(SymMatrix(m));
    CHECK((s.mat() * s.mat() - m).norm() <= 1e-10);
}

TEST_CASE("psd_sqrt on random Gram matrices") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        const int dim = 1 + static_cast<int>(rng() % 8);
        Eigen::MatrixXd g(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) g(i, j) = nd(rng);
        Eigen::MatrixXd m = g.transpose() * g;
        auto s = psd_sqrt(SymMatrix(m));
        CHECK((s.mat() * s.mat() - m).norm() <= 1e-8 * (1.0 + m.norm()));
        CHECK(min_eigenvalue(s) >= -1e-12);
    }
}

TEST_CASE("psd_sqrt rejects indefinite input") {
    Eigen::VectorXd d(2);
    d << 1.0, -1.0;
    CHECK_THROWS_AS(psd_sqrt(SymMatrix::diagonal(d)), NotPositiveSemidefinite);
}

TEST_CASE("is_neg_def basics") {
    CHECK(is_neg_def(SymMatrix(-Eigen::MatrixXd::Identity(2, 2)), 1e-8));
    CHECK_FALSE(is_neg_def(SymMatrix::zero(2), 1e-8));

    Eigen::MatrixXd m(2, 2);
    m << -1, 2, 2, -1;  // eigenvalues -3 and 1
    auto [lo, hi] = eig2x2(-1, 2, -1);
    CHECK(lo == doctest::Approx(-3.0));
    CHECK(hi == doctest::Approx(1.0));
    CHECK_FALSE(is_neg_def(SymMatrix(m), 0.0));
}

TEST_CASE("is_neg_def agrees with max eigenvalue sign") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 1 + static_cast<int>(rng() % 6);
        SymMatrix m(random_symmetric(dim, rng));
        CHECK(is_neg_def(m, 0.0) == (max_eigenvalue(m) < 0.0));
    }
}

TEST_CASE("cholesky and spd_inverse") {
    Eigen::MatrixXd m(3, 3);
    m << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    SymMatrix sm(m);
    const Eigen::MatrixXd l = cholesky_lower(sm);
    CHECK((l * l.transpose() - m).norm() <= 1e-12);
    const SymMatrix inv = spd_inverse(sm);
    CHECK((inv.mat() * m - Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-12);
    CHECK_THROWS_AS(cholesky_lower(SymMatrix::zero(2)), NotPositiveSemidefinite);
}
