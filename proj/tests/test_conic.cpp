#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "riskmpc/conic.hpp"

using namespace riskmpc;

namespace {

// Brute-force LP oracle: minimize c'x subject to G x <= h by enumerating all
// basic solutions (n active rows), checking feasibility of each.
double lp_oracle(const Eigen::MatrixXd& g, const Eigen::VectorXd& h,
                 const Eigen::VectorXd& c) {
    const int m = static_cast<int>(g.rows());
    const int n = static_cast<int>(g.cols());
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> idx(n);
    std::function<void(int, int)> rec = [&](int start, int k) {
        if (k == n) {
            Eigen::MatrixXd act(n, n);
            Eigen::VectorXd rhs(n);
            for (int i = 0; i < n; ++i) {
                act.row(i) = g.row(idx[i]);
                rhs(i) = h(idx[i]);
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(act);
            if (!lu.isInvertible()) return;
            const Eigen::VectorXd x = lu.solve(rhs);
            if (((g * x - h).array() <= 1e-9).all()) {
                best = std::min(best, c.dot(x));
            }
            return;
        }
        for (int i = start; i < m; ++i) {
            idx[k] = i;
            rec(i + 1, k + 1);
        }
    };
    rec(0, 0);
    return best;
}

}  // namespace

TEST_CASE("min x subject to x >= 1") {
    ConicProgram p;
    const int x = p.add_variables(1);
    p.add_objective(x, 1.0);
    p.add_cone(ConeKind::NonNeg, {LinExpr::variable(x).add_constant(-1.0)});
    auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sol.primal_objective >= sol.dual_objective - 1e-6);
}

TEST_CASE("SOC: min t subject to ||(3,4)|| <= t") {
    ConicProgram p;
    const int t = p.add_variables(1);
    p.add_objective(t, 1.0);
    p.add_cone(ConeKind::Soc,
               {LinExpr::variable(t), LinExpr(3.0), LinExpr(4.0)});
    auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x(0) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("PSD: max t subject to [[1,t],[t,1]] >= 0") {
    ConicProgram p;
    const int t = p.add_variables(1);
    p.add_objective(t, -1.0);  // maximize t
    std::vector<LinExpr> sv(3);
    sv[0] = LinExpr(1.0);
    sv[1] = LinExpr::variable(t, std::sqrt(2.0));
    sv[2] = LinExpr(1.0);
    p.add_psd(std::move(sv), 2);
    auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("rotated SOC: min u subject to 2*t*u >= z^2, t = 2, z = 4") {
    // optimal u = z^2 / (2 t) = 4
    ConicProgram p;
    const int u = p.add_variables(1);
    p.add_objective(u, 1.0);
    p.add_cone(ConeKind::RotatedSoc,
               {LinExpr(2.0), LinExpr::variable(u), LinExpr(4.0)});
    auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x(0) == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("equality constraints") {
    // min x + y subject to x + 2y = 3, x >= 0, y >= 0 -> (0, 1.5)
    ConicProgram p;
    const int x = p.add_variables(2);
    p.add_objective(x, 1.0);
    p.add_objective(x + 1, 1.0);
    LinExpr eq;
    eq.add(x, 1.0).add(x + 1, 2.0).add_constant(-3.0);
    p.add_equality(eq);
    p.add_cone(ConeKind::NonNeg,
               {LinExpr::variable(x), LinExpr::variable(x + 1)});
    auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x(0) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(sol.x(1) == doctest::Approx(1.5).epsilon(1e-5));
}

TEST_CASE("infeasible program is detected with a certificate") {
    // x >= 1 and x <= 0
    ConicProgram p;
    const int x = p.add_variables(1);
    p.add_objective(x, 1.0);
    p.add_cone(ConeKind::NonNeg, {LinExpr::variable(x).add_constant(-1.0)});
    p.add_cone(ConeKind::NonNeg, {LinExpr::variable(x, -1.0)});
    auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Infeasible);
    CHECK(sol.certificate_residual <= 1e-7);
}

TEST_CASE("unbounded program is detected") {
    ConicProgram p;
    const int x = p.add_variables(1);
    p.add_objective(x, -1.0);
    p.add_cone(ConeKind::NonNeg, {LinExpr::variable(x).add_constant(-1.0)});
    auto sol = solve(p);
    REQUIRE(sol.status == SolveStatus::Unbounded);
}

TEST_CASE("psd_project examples") {
    // diag(1, -1) -> diag(1, 0)
    Eigen::MatrixXd m(2, 2);
    m << 1, 0, 0, -1;
    Eigen::VectorXd pr = psd_project(sym_to_svec(m));
    Eigen::MatrixXd back = svec_to_sym(pr, 2);
    CHECK(back(0, 0) == doctest::Approx(1.0));
    CHECK(back(1, 1) == doctest::Approx(0.0));

    // [[0,1],[1,0]] -> [[.5,.5],[.5,.5]] (eigenvalues +-1)
    m << 0, 1, 1, 0;
    back = svec_to_sym(psd_project(sym_to_svec(m)), 2);
    CHECK(back(0, 0) == doctest::Approx(0.5));
    CHECK(back(0, 1) == doctest::Approx(0.5));
    CHECK(back(1, 1) == doctest::Approx(0.5));

    // already PSD input unchanged
    m << 2, 1, 1, 2;
    const Eigen::VectorXd sv = sym_to_svec(m);
    CHECK((psd_project(sv) - sv).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("psd_project idempotence") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + static_cast<int>(rng() % 6);
        Eigen::MatrixXd m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) m(i, j) = nd(rng);
        m = 0.5 * (m + m.transpose()).eval();
        const Eigen::VectorXd once = psd_project(sym_to_svec(m));
        const Eigen::VectorXd twice = psd_project(once);
        CHECK((once - twice).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
}

TEST_CASE("random LPs agree with enumeration oracle") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> ndist(2, 5);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = ndist(rng);
        const int extra = ndist(rng);
        // box [-1, 1]^n plus `extra` random cuts keeps the LP bounded
        Eigen::MatrixXd g(2 * n + extra, n);
        Eigen::VectorXd h(2 * n + extra);
        g.topRows(n) = Eigen::MatrixXd::Identity(n, n);
        g.middleRows(n, n) = -Eigen::MatrixXd::Identity(n, n);
        h.head(2 * n).setOnes();
        for (int i = 0; i < extra; ++i) {
            for (int j = 0; j < n; ++j) g(2 * n + i, j) = nd(rng);
            h(2 * n + i) = 0.5 + std::abs(nd(rng));  // keeps origin feasible
        }
        Eigen::VectorXd c(n);
        for (int j = 0; j < n; ++j) c(j) = nd(rng);

        const double expected = lp_oracle(g, h, c);

        ConicProgram p;
        const int x0 = p.add_variables(n);
        for (int j = 0; j < n; ++j) p.add_objective(x0 + j, c(j));
        std::vector<LinExpr> rows;
        for (int i = 0; i < g.rows(); ++i) {
            LinExpr e(h(i));
            for (int j = 0; j < n; ++j) e.add(x0 + j, -g(i, j));
            rows.push_back(std::move(e));
        }
        p.add_cone(ConeKind::NonNeg, std::move(rows));
        auto sol = solve(p, {1e-9, 200000, nullptr});
        REQUIRE(sol.status == SolveStatus::Optimal);
        CHECK(sol.primal_objective == doctest::Approx(expected).epsilon(1e-6));
        CHECK(sol.primal_objective >= sol.dual_objective - 1e-6);
    }
}

TEST_CASE("warm start from a solution converges in <= 5 iterations") {
    ConicProgram p;
    const int x = p.add_variables(2);
    p.add_objective(x, 1.0);
    p.add_objective(x + 1, 2.0);
    p.add_cone(ConeKind::NonNeg,
               {LinExpr::variable(x).add_constant(-1.0),
                LinExpr::variable(x + 1).add_constant(-2.0)});
    auto first = solve(p);
    REQUIRE(first.status == SolveStatus::Optimal);
    SolveOptions opts;
    opts.warm_start = &first;
    auto second = solve(p, opts);
    REQUIRE(second.status == SolveStatus::Optimal);
    CHECK(second.iterations <= 5);
}

TEST_CASE("determinism: identical inputs give identical outputs") {
    auto build = []() {
        ConicProgram p;
        const int x = p.add_variables(3);
        p.add_objective(x, 1.0);
        p.add_objective(x + 2, -0.5);
        p.add_cone(ConeKind::Soc,
                   {LinExpr::variable(x).add_constant(2.0),
                    LinExpr::variable(x + 1), LinExpr::variable(x + 2)});
        p.add_cone(ConeKind::NonNeg,
                   {LinExpr::variable(x + 1).add_constant(1.0)});
        return p;
    };
    auto a = solve(build());
    auto b = solve(build());
    REQUIRE(a.status == b.status);
    CHECK(a.iterations == b.iterations);
    CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.y - b.y).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("non-finite data rejected") {
    ConicProgram p;
    const int x = p.add_variables(1);
    p.add_objective(x, 1.0);
    CHECK_THROWS_AS(
        p.add_cone(ConeKind::NonNeg,
                   {LinExpr::variable(x, std::nan(""))}),
        InvalidProgram);
}
