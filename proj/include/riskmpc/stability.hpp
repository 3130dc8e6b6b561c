#pragma once

/// Risk-sensitive stability tooling: exact nested-risk evaluation of the
/// squared state under a policy, exponential-decay estimation, and numeric
/// checking of the quadratic Lyapunov conditions.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "riskmpc/matlib.hpp"
#include "riskmpc/riskcore.hpp"
#include "riskmpc/sysmodel.hpp"

namespace riskmpc {

using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// u = F x. The cheap policy kind for tree evaluation; full receding-horizon
/// closures also fit the Policy signature but cost one conic solve per tree
/// node, so keep horizons small with those.
Policy linear_policy(const Eigen::MatrixXd& f);

/// Nested risk of the squared state norm k steps ahead under the closed
/// loop: tree costs are zero off the leaves and |x_k|^2 at the leaves.
double risk_of_squared_state(const UncertainLinearSystem& sys,
                             const RiskEnvelope& env, const Policy& policy,
                             const Eigen::VectorXd& x0, int k);

struct DecayEstimate {
    int horizon = 0;
    std::vector<double> r;  ///< r[k-1] = nested risk of |x_k|^2, k = 1..K
    double c_fit = 0.0;
    double lambda_fit = 0.0;
    /// Trajectory hit the origin exactly; reported stable with no fit.
    bool reached_origin = false;
    /// max_k r_k / (lambda_fit^k x0'x0) <= 1.1 * c_fit held on the sample.
    bool envelope_bounded = false;

    bool stable() const { return reached_origin || lambda_fit < 1.0; }
};

/// Fits log r_k = log(c x0'x0) + k log(lambda) by least squares over
/// k = 1..K and reports the exponential-decay estimate.
DecayEstimate estimate_decay(const UncertainLinearSystem& sys,
                             const RiskEnvelope& env, const Policy& policy,
                             const Eigen::VectorXd& x0, int K);

struct LyapunovCheckReport {
    double b1 = 0.0;  ///< lambda_min of the Lyapunov matrix
    double b2 = 0.0;  ///< lambda_max of the Lyapunov matrix
    double b3 = 0.0;  ///< min sampled decrement rate -(rho(V(x+)) - V(x))/|x|^2
    double worst_violation = 0.0;  ///< max over samples of rho(V(x+)) - V(x) + b3|x|^2
    int samples = 0;
    bool valid = false;  ///< b1, b2, b3 all positive
};

/// Samples unit-sphere states (quadratic V and homogeneous policies make
/// sphere sampling sufficient) and evaluates the one-step risk decrement.
LyapunovCheckReport check_lyapunov(const UncertainLinearSystem& sys,
                                   const RiskEnvelope& env, const SymMatrix& m,
                                   const Policy& policy, int samples,
                                   std::uint64_t seed);

/// Closed-form decrement rate for a linear policy u = Fx:
/// b3 = -max over vertices l of lambda_max( sum_j q_l(j) Phi_j' M Phi_j - M ).
double lyapunov_decrement_bound(const UncertainLinearSystem& sys,
                                const RiskEnvelope& env, const SymMatrix& m,
                                const Eigen::MatrixXd& f);

}  // namespace riskmpc
