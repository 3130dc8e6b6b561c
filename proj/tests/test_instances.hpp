#pragma once

// Shared test fixtures.

#include <Eigen/Core>

#include "riskmpc/sysmodel.hpp"

namespace riskmpc::testing {

/// Two-state, two-input, three-scenario benchmark plant with one strongly
/// unstable mode, one nearly-dead mode and one mildly unstable mode;
/// uniform disturbance pmf, Q = I, R = 1e-4 I. Used across the test suites
/// and by the acceptance runner.
inline UncertainLinearSystem demo_system() {
    Eigen::MatrixXd a1(2, 2), a2(2, 2), a3(2, 2);
    a1 << 2.0, 0.5, -0.5, 2.0;
    a2 << 0.01, 0.1, 0.05, 0.01;
    a3 << 1.5, -0.3, 0.2, 1.5;
    Eigen::MatrixXd b1(2, 2), b2(2, 2), b3(2, 2);
    b1 << 3.0, 0.1, 0.1, 3.0;
    b2 << 1.0, 0.5, 0.5, 1.0;
    b3 << 2.0, 0.3, 0.3, 2.0;
    return UncertainLinearSystem(
        {a1, a2, a3}, {b1, b2, b3}, Pmf(Eigen::VectorXd::Constant(3, 1.0 / 3)),
        SymMatrix::identity(2),
        SymMatrix(1e-4 * Eigen::MatrixXd::Identity(2, 2)));
}

/// Scalar deterministic plant x+ = a x + b u.
inline UncertainLinearSystem scalar_system(double a, double b, double q = 1.0,
                                           double r = 1.0) {
    Eigen::MatrixXd am(1, 1), bm(1, 1);
    am << a;
    bm << b;
    return UncertainLinearSystem({am}, {bm}, Pmf(Eigen::VectorXd::Ones(1)),
                                 SymMatrix(Eigen::MatrixXd::Constant(1, 1, q)),
                                 SymMatrix(Eigen::MatrixXd::Constant(1, 1, r)));
}

/// Scalar plant with two autonomous scenarios (B = 0).
inline UncertainLinearSystem scalar_two_mode(double a1, double a2,
                                             double p1 = 0.5) {
    Eigen::MatrixXd m1(1, 1), m2(1, 1), b(1, 1);
    m1 << a1;
    m2 << a2;
    b << 0.0;
    Eigen::VectorXd p(2);
    p << p1, 1.0 - p1;
    return UncertainLinearSystem({m1, m2}, {b, b}, Pmf(p),
                                 SymMatrix::identity(1), SymMatrix::identity(1));
}

}  // namespace riskmpc::testing
