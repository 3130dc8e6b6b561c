#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "riskmpc/sysmodel.hpp"
#include "test_instances.hpp"

using namespace riskmpc;
using riskmpc::testing::demo_system;
using riskmpc::testing::scalar_system;

namespace {

nlohmann::json demo_config() {
    return nlohmann::json{
        {"Nx", 2},
        {"Nu", 2},
        {"scenarios",
         {{{"A", {{2.0, 0.5}, {-0.5, 2.0}}}, {"B", {{3.0, 0.1}, {0.1, 3.0}}}},
          {{"A", {{0.01, 0.1}, {0.05, 0.01}}}, {"B", {{1.0, 0.5}, {0.5, 1.0}}}},
          {{"A", {{1.5, -0.3}, {0.2, 1.5}}}, {"B", {{2.0, 0.3}, {0.3, 2.0}}}}}},
        {"pmf", {1.0 / 3, 1.0 / 3, 1.0 / 3}},
        {"Q", {{1.0, 0.0}, {0.0, 1.0}}},
        {"R", {{1e-4, 0.0}, {0.0, 1e-4}}}};
}

}  // namespace

TEST_CASE("load_system accepts the benchmark config") {
    auto sys = load_system(demo_config());
    CHECK(sys.nx() == 2);
    CHECK(sys.nu() == 2);
    CHECK(sys.scenario_count() == 3);
    CHECK(sys.a(1)(0, 1) == doctest::Approx(0.1));
    CHECK(sys.r()(0, 0) == doctest::Approx(1e-4));
}

TEST_CASE("load_system validates") {
    auto cfg = demo_config();
    cfg["Q"] = {{1.0, 0.0}, {0.0, 0.0}};  // zero eigenvalue
    CHECK_THROWS_AS(load_system(cfg), ConfigError);

    cfg = demo_config();
    cfg["pmf"] = {0.5, 0.5};  // wrong length
    CHECK_THROWS_AS(load_system(cfg), ConfigError);

    cfg = demo_config();
    cfg["scenarios"][0]["B"] = {{1.0}, {2.0}};  // wrong shape
    CHECK_THROWS_AS(load_system(cfg), ConfigError);
}

TEST_CASE("degenerate scalar system is valid") {
    auto sys = scalar_system(0.5, 1.0);
    CHECK(sys.scenario_count() == 1);
    CHECK(sys.nx() == 1);
}

TEST_CASE("tree node counts") {
    auto sys = demo_system();
    auto t = build_tree(sys, 3);
    CHECK(t.node_count() == 40);
    CHECK(t.leaf_count() == 27);

    auto path = ScenarioTree(1, 5);
    CHECK(path.node_count() == 6);
    CHECK(path.leaf_count() == 1);

    auto small = ScenarioTree(2, 1);
    CHECK(small.node_count() == 3);

    CHECK_THROWS_AS(ScenarioTree(3, 14), CapacityExceeded);
}

TEST_CASE("tree indexing round trips") {
    ScenarioTree t(3, 3);
    for (int node = 0; node < t.node_count(); ++node) {
        const auto h = t.history(node);
        CHECK(t.node_at(h) == node);
        CHECK(static_cast<int>(h.size()) == t.node_depth(node));
    }
    CHECK(t.is_leaf(t.node_count() - 1));
    CHECK_FALSE(t.is_leaf(0));
}

TEST_CASE("step basics") {
    auto sys = demo_system();
    const Eigen::VectorXd zero2 = Eigen::VectorXd::Zero(2);
    for (int j = 0; j < 3; ++j) {
        CHECK(step(sys, zero2, zero2, j).norm() == doctest::Approx(0.0));
    }

    auto sc = scalar_system(0.5, 1.0);
    Eigen::VectorXd x(1), u(1);
    x << 2.0;
    u << 1.0;
    CHECK(step(sc, x, u, 0)(0) == doctest::Approx(2.0));

    // direct multiply oracle for the second scenario
    Eigen::VectorXd x2(2), u2(2);
    x2 << 1.0, 1.0;
    u2 << 0.0, 0.0;
    const Eigen::VectorXd expect = sys.a(1) * x2 + sys.b(1) * u2;
    const Eigen::VectorXd got = step(sys, x2, u2, 1);
    CHECK(got(0) == doctest::Approx(0.11));
    CHECK(got(1) == doctest::Approx(0.06));
    CHECK((got - expect).norm() == doctest::Approx(0.0));

    CHECK_THROWS_AS(step(sys, x2, u2, 3), InvalidScenario);
    CHECK_THROWS_AS(step(sys, x2, u2, -1), InvalidScenario);
}

TEST_CASE("step is linear") {
    auto sys = demo_system();
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd x1(2), x2(2), u1(2), u2(2);
        for (int i = 0; i < 2; ++i) {
            x1(i) = nd(rng);
            x2(i) = nd(rng);
            u1(i) = nd(rng);
            u2(i) = nd(rng);
        }
        const int j = static_cast<int>(rng() % 3);
        const Eigen::VectorXd lhs = step(sys, x1 + x2, u1 + u2, j);
        const Eigen::VectorXd rhs = step(sys, x1, u1, j) + step(sys, x2, u2, j);
        CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}
