#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "riskmpc/stability.hpp"
#include "riskmpc/synthesis.hpp"
#include "test_instances.hpp"

using namespace riskmpc;
using riskmpc::testing::demo_system;
using riskmpc::testing::scalar_two_mode;

TEST_CASE("risk of squared state basics") {
    auto sys = scalar_two_mode(0.5, 0.8);
    auto wc = make_envelope(RiskSpec::worst_case(), sys.pmf());
    auto zero_policy = linear_policy(Eigen::MatrixXd::Zero(1, 1));

    CHECK(risk_of_squared_state(sys, wc, zero_policy,
                                Eigen::VectorXd::Zero(1), 3) ==
          doctest::Approx(0.0));

    // worst branch squared after two steps: 0.8^4
    CHECK(risk_of_squared_state(sys, wc, zero_policy, Eigen::VectorXd::Ones(1),
                                2) == doctest::Approx(0.4096));

    // deterministic scalar contraction: (0.5^3)^2 from x0 = 1
    auto det = riskmpc::testing::scalar_system(0.5, 0.0);
    auto exp_env = make_envelope(RiskSpec::expectation(), det.pmf());
    CHECK(risk_of_squared_state(det, exp_env, zero_policy,
                                Eigen::VectorXd::Ones(1), 3) ==
          doctest::Approx(0.015625));
}

TEST_CASE("decay estimates for contraction and expansion") {
    auto zero_policy = linear_policy(Eigen::MatrixXd::Zero(1, 1));

    auto contraction = riskmpc::testing::scalar_system(0.5, 0.0);
    auto env = make_envelope(RiskSpec::expectation(), contraction.pmf());
    auto est =
        estimate_decay(contraction, env, zero_policy, Eigen::VectorXd::Ones(1), 6);
    CHECK(est.lambda_fit == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(est.stable());
    CHECK(est.envelope_bounded);

    auto expansion = riskmpc::testing::scalar_system(2.0, 0.0);
    auto env2 = make_envelope(RiskSpec::expectation(), expansion.pmf());
    auto bad =
        estimate_decay(expansion, env2, zero_policy, Eigen::VectorXd::Ones(1), 6);
    CHECK(bad.lambda_fit == doctest::Approx(4.0).epsilon(1e-6));
    CHECK_FALSE(bad.stable());
}

TEST_CASE("decay under the synthesized terminal law") {
    auto sys = demo_system();
    auto env = make_envelope(RiskSpec::worst_case(), sys.pmf());
    auto cert = synthesize_terminal(sys, env);
    Eigen::VectorXd x0(2);
    x0 << 1.0, 1.0;
    auto est = estimate_decay(sys, env, linear_policy(cert.F), x0, 6);
    CHECK(est.lambda_fit < 1.0);
    for (std::size_t k = 1; k < est.r.size(); ++k) {
        CHECK(est.r[k] <= est.r[k - 1] + 1e-12);
    }
}

TEST_CASE("exact-zero trajectories are reported stable") {
    auto det = riskmpc::testing::scalar_system(0.0, 0.0);  // x+ = 0
    auto env = make_envelope(RiskSpec::expectation(), det.pmf());
    auto est = estimate_decay(det, env, linear_policy(Eigen::MatrixXd::Zero(1, 1)),
                              Eigen::VectorXd::Ones(1), 4);
    CHECK(est.reached_origin);
    CHECK(est.stable());
}

TEST_CASE("lyapunov check scalar cases") {
    auto zero_policy = linear_policy(Eigen::MatrixXd::Zero(1, 1));

    auto good = riskmpc::testing::scalar_system(0.5, 0.0);
    auto env = make_envelope(RiskSpec::expectation(), good.pmf());
    auto rep = check_lyapunov(good, env, SymMatrix::identity(1), zero_policy,
                              100, 7);
    CHECK(rep.b1 == doctest::Approx(1.0));
    CHECK(rep.b2 == doctest::Approx(1.0));
    CHECK(rep.b3 == doctest::Approx(0.75));
    CHECK(rep.valid);

    auto bad = riskmpc::testing::scalar_system(1.1, 0.0);
    auto env2 = make_envelope(RiskSpec::expectation(), bad.pmf());
    auto rep2 = check_lyapunov(bad, env2, SymMatrix::identity(1), zero_policy,
                               100, 7);
    CHECK(rep2.b3 == doctest::Approx(-0.21));
    CHECK_FALSE(rep2.valid);

    CHECK_THROWS_AS(check_lyapunov(good, env, SymMatrix::zero(1), zero_policy,
                                   10, 7),
                    InvalidLyapunov);
}

TEST_CASE("sampled decrement matches the closed form") {
    auto sys = demo_system();
    auto env = make_envelope(RiskSpec::mean_upper_semideviation(0.5), sys.pmf());
    auto cert = synthesize_terminal(sys, env);

    const double exact = lyapunov_decrement_bound(sys, env, cert.P, cert.F);
    auto rep = check_lyapunov(sys, env, cert.P, linear_policy(cert.F), 10000,
                              2024);
    CHECK(rep.b3 >= exact - 1e-12);           // sampling can only miss the min
    CHECK(rep.b3 <= exact + 0.02 * std::abs(exact) + 1e-9);
    CHECK(rep.valid);

    // the certificate margin lower-bounds the decrement rate
    CHECK(exact >= cert.margin - 1e-9);
}

TEST_CASE("expectation envelope matches direct Monte Carlo") {
    auto sys = demo_system();
    auto env = make_envelope(RiskSpec::expectation(), sys.pmf());
    auto cert = synthesize_terminal(sys, env);
    auto policy = linear_policy(cert.F);
    Eigen::VectorXd x0(2);
    x0 << 1.0, -0.5;
    const int k = 4;
    const double exact = risk_of_squared_state(sys, env, policy, x0, k);

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int runs = 10000;
    double sum = 0.0, sumsq = 0.0;
    for (int r = 0; r < runs; ++r) {
        Eigen::VectorXd x = x0;
        for (int step_i = 0; step_i < k; ++step_i) {
            const double u = u01(rng);
            int j = 0;
            double acc = sys.pmf()(0);
            while (u > acc && j + 1 < sys.scenario_count()) acc += sys.pmf()(++j);
            x = step(sys, x, policy(x), j);
        }
        const double v = x.squaredNorm();
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / runs;
    const double se =
        std::sqrt((sumsq / runs - mean * mean) / (runs - 1));
    CHECK(std::abs(exact - mean) <= 3.0 * se + 1e-12);
}

TEST_CASE("wider envelopes dominate the expectation") {
    auto sys = demo_system();
    auto cert = synthesize_terminal(
        sys, make_envelope(RiskSpec::worst_case(), sys.pmf()));
    auto policy = linear_policy(cert.F);
    Eigen::VectorXd x0(2);
    x0 << 0.7, 1.1;
    auto exp_env = make_envelope(RiskSpec::expectation(), sys.pmf());
    for (const auto& spec :
         {RiskSpec::mean_upper_semideviation(0.5), RiskSpec::worst_case(),
          RiskSpec::cvar(0.4)}) {
        auto env = make_envelope(spec, sys.pmf());
        for (int k = 1; k <= 5; ++k) {
            CHECK(risk_of_squared_state(sys, env, policy, x0, k) >=
                  risk_of_squared_state(sys, exp_env, policy, x0, k) - 1e-12);
        }
    }
}
