#pragma once

/// Offline terminal-cost synthesis. Builds the per-vertex semidefinite
/// feasibility system whose solution yields a terminal weight P and linear
/// gain F making the receding-horizon law risk-sensitive stabilizing,
/// solves it, recovers (P, F) and re-verifies the underlying spectral
/// condition independently before returning a certificate.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "riskmpc/conic.hpp"
#include "riskmpc/matlib.hpp"
#include "riskmpc/riskcore.hpp"
#include "riskmpc/sysmodel.hpp"

namespace riskmpc {

struct SynthesisStats {
    int iterations = 0;
    double solve_seconds = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

struct TerminalCertificate {
    SymMatrix P;        ///< terminal weight, positive definite
    Eigen::MatrixXd F;  ///< terminal linear feedback, Nu x Nx
    SymMatrix Qbar;     ///< LMI witness, P = Qbar^-1
    Eigen::MatrixXd Y;  ///< LMI witness, F = Y G^-1
    Eigen::MatrixXd G;  ///< LMI witness, square, not necessarily symmetric
    /// min over envelope vertices of -lambda_max of the closed-loop
    /// decrement matrix; positive means the stability condition holds.
    double margin = 0.0;
    SynthesisStats stats;
};

struct SynthesisOptions {
    double tol = 1e-7;
    int max_iters = 200000;
    /// Off by default (pure feasibility); when set, maximizes trace(Qbar)
    /// as a tie-break among feasible witnesses.
    bool maximize_trace_qbar = false;
};

/// One strict-feasibility PSD block per envelope vertex, with decision
/// variables Qbar (symmetric), Y (Nu x Nx) and G (Nx x Nx, full). Variable
/// layout: [lower triangle of Qbar column-major | Y row-major | G row-major].
/// Strictness is realized as M >= eps*I with eps = 1e-6 * (1 + ||Q||_2).
ConicProgram assemble_lmi(const UncertainLinearSystem& sys,
                          const RiskEnvelope& env);

/// Solves the LMI and returns a verified certificate. Throws
/// SynthesisInfeasible (carrying the dual certificate) when the system is
/// infeasible, SolverFailed when the solver stops undecided, and
/// VerificationFailed when a claimed-optimal witness fails the independent
/// spectral re-check with margin > 1e-8.
TerminalCertificate synthesize_terminal(const UncertainLinearSystem& sys,
                                        const RiskEnvelope& env,
                                        const SynthesisOptions& opts = {});

/// Stability margin of a candidate pair (P, F): min over envelope vertices
/// q_l of -lambda_max( sum_j q_l(j) (A_j+B_j F)' P (A_j+B_j F) - P
///                     + F'RF + Q ). Positive iff the condition holds.
double verify_condition9(const UncertainLinearSystem& sys,
                         const RiskEnvelope& env, const SymMatrix& P,
                         const Eigen::MatrixXd& F);

struct TrialInstance {
    bool feasible = false;
    bool undecided = false;  ///< solver stopped without a certificate
    double margin = 0.0;
    int iterations = 0;
};

struct TrialReport {
    double rate = 0.0;  ///< fraction of instances with a verified certificate
    std::vector<TrialInstance> instances;
};

/// Draws `count` random systems (A_j entries iid N(0,1)/sqrt(nx), B_j
/// entries iid N(0,1), Q = R = I, uniform pmf, expectation envelope) and
/// reports the fraction for which synthesis succeeds. Fully seeded and
/// deterministic; instances are independent of each other.
TrialReport random_feasibility_trial(int nx, int nu, int L, int count,
                                     std::uint64_t seed,
                                     const SynthesisOptions& opts = {});

}  // namespace riskmpc
