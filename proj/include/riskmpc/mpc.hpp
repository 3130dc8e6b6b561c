#pragma once

/// Online receding-horizon control: the scenario-tree convex program with
/// history-dependent controls, per-node stage-cost epigraphs, a terminal
/// quadratic epigraph against the synthesized weight P, and the nested-risk
/// epigraph recursion over envelope vertices. Solving it at the measured
/// state and applying the root control is the (time-invariant) control law.

#include <vector>

#include <Eigen/Core>

#include "riskmpc/conic.hpp"
#include "riskmpc/riskcore.hpp"
#include "riskmpc/synthesis.hpp"
#include "riskmpc/sysmodel.hpp"

namespace riskmpc {

struct MpcProblem {
    MpcProblem(UncertainLinearSystem sys, RiskEnvelope env, int horizon,
               TerminalCertificate cert, Eigen::VectorXd x0);

    UncertainLinearSystem sys;
    RiskEnvelope env;
    int N;
    TerminalCertificate cert;
    Eigen::VectorXd x0;
};

/// Per-node variable indices into the assembled program (-1 where a node
/// has no such variable). Leaves carry gamma2 instead of (u, t, s); the
/// root state is the constant x0 rather than a variable.
struct MpcLayout {
    std::vector<int> u_var, x_var, t_var, s_var, g2_var;
};

struct AssembledMpc {
    ConicProgram program;
    MpcLayout layout;
    ScenarioTree tree;
};

AssembledMpc assemble_mpc(const MpcProblem& problem);

struct MpcSolveStats {
    int iterations = 0;
    double solve_seconds = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
};

struct MpcSolution {
    Eigen::VectorXd u0;  ///< control applied at the root
    double value = 0.0;  ///< optimal epigraph value gamma_1

    /// Per-node quantities indexed by tree node id. States are replayed
    /// exactly through the dynamics from the returned controls, so the
    /// recursion holds to machine precision.
    std::vector<Eigen::VectorXd> controls;  ///< empty at leaves
    std::vector<Eigen::VectorXd> states;    ///< states[0] = x0
    std::vector<double> stage_epigraph;     ///< t, NaN at leaves
    std::vector<double> risk_epigraph;      ///< s, NaN at leaves
    std::vector<double> terminal_epigraph;  ///< gamma2, NaN off leaves

    MpcSolveStats stats;
};

struct MpcOptions {
    double tol = 1e-7;
    int max_iters = 50000;
};

MpcSolution solve_mpc(const MpcProblem& problem, const MpcOptions& opts = {});

/// Exact nested-risk value of given per-node controls: replays the
/// dynamics, builds the tree of stage costs with the terminal quadratic at
/// the leaves, and evaluates the nested risk. Used as the independent
/// self-consistency check of solver values.
double mpc_tree_value(const MpcProblem& problem,
                      const std::vector<Eigen::VectorXd>& controls);

/// Deterministic state-feedback law obtained by re-solving the program at
/// each query state. Copyable and safe to share across threads.
class MpcPolicy {
public:
    MpcPolicy(UncertainLinearSystem sys, RiskEnvelope env, int horizon,
              TerminalCertificate cert, MpcOptions opts = {});

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
    MpcSolution solve_at(const Eigen::VectorXd& x) const;

    int horizon() const { return n_; }
    const TerminalCertificate& certificate() const { return cert_; }

private:
    UncertainLinearSystem sys_;
    RiskEnvelope env_;
    int n_;
    TerminalCertificate cert_;
    MpcOptions opts_;
};

MpcPolicy mpc_policy(const UncertainLinearSystem& sys, const RiskEnvelope& env,
                     int horizon, const TerminalCertificate& cert,
                     const MpcOptions& opts = {});

}  // namespace riskmpc
