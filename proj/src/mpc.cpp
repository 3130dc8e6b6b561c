#include "riskmpc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace riskmpc {

namespace {
constexpr int kLeafCapacity = 60000;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

MpcProblem::MpcProblem(UncertainLinearSystem sys_in, RiskEnvelope env_in,
                       int horizon, TerminalCertificate cert_in,
                       Eigen::VectorXd x0_in)
    : sys(std::move(sys_in)), env(std::move(env_in)), N(horizon),
      cert(std::move(cert_in)), x0(std::move(x0_in)) {
    if (N < 1) throw ConfigError("mpc horizon must be >= 1");
    if (env.size_L() != sys.scenario_count()) {
        throw ShapeMismatch("envelope branching does not match scenario count");
    }
    if (x0.size() != sys.nx()) throw ShapeMismatch("x0 dimension mismatch");
    if (!x0.allFinite()) throw ConfigError("x0 must be finite");
    if (std::pow(static_cast<double>(sys.scenario_count()), N) > kLeafCapacity) {
        throw CapacityExceeded("scenario tree exceeds the leaf capacity");
    }
    if (cert.P.dim() != sys.nx() || cert.F.rows() != sys.nu() ||
        cert.F.cols() != sys.nx()) {
        throw ShapeMismatch("certificate dimensions do not match the system");
    }
    // the certificate must hold for the envelope actually in use (a
    // certificate synthesized for a wider envelope remains valid here)
    if (!(verify_condition9(sys, env, cert.P, cert.F) > 0.0)) {
        throw VerificationFailed(
            "terminal certificate does not satisfy the stability condition "
            "for this envelope");
    }
}

AssembledMpc assemble_mpc(const MpcProblem& problem) {
    const auto& sys = problem.sys;
    const int nx = sys.nx();
    const int nu = sys.nu();
    const int L = sys.scenario_count();

    ScenarioTree tree(L, problem.N);
    if (tree.leaf_count() > kLeafCapacity) {
        throw CapacityExceeded("scenario tree exceeds the leaf capacity");
    }
    const int nodes = tree.node_count();

    ConicProgram prog;
    MpcLayout lay;
    lay.u_var.assign(nodes, -1);
    lay.x_var.assign(nodes, -1);
    lay.t_var.assign(nodes, -1);
    lay.s_var.assign(nodes, -1);
    lay.g2_var.assign(nodes, -1);

    for (int nd = 0; nd < nodes; ++nd) {
        if (nd > 0) lay.x_var[nd] = prog.add_variables(nx);
        if (!tree.is_leaf(nd)) {
            lay.u_var[nd] = prog.add_variables(nu);
            lay.t_var[nd] = prog.add_variables(1);
            lay.s_var[nd] = prog.add_variables(1);
        } else {
            lay.g2_var[nd] = prog.add_variables(1);
        }
    }

    const Eigen::MatrixXd qh = psd_sqrt(sys.q()).mat();
    const Eigen::MatrixXd rh = psd_sqrt(sys.r()).mat();
    // The terminal epigraph variable is kept in P-normalized units
    // (gamma2 = pscale * variable), which keeps every cone block O(1) even
    // when the synthesized terminal weight is large; the scale factor then
    // sits in the linear risk rows where the solver can equilibrate it.
    const double pscale = std::max(spectral_norm(problem.cert.P), 1e-12);
    const Eigen::MatrixXd ph =
        psd_sqrt(SymMatrix(problem.cert.P.mat() / pscale)).mat();

    // dynamics equalities x_child = A_j x_parent + B_j u_parent
    for (int nd = 1; nd < nodes; ++nd) {
        const int pa = tree.parent(nd);
        const int j = tree.last_branch(nd);
        for (int r = 0; r < nx; ++r) {
            LinExpr e = LinExpr::variable(lay.x_var[nd] + r);
            if (pa == 0) {
                e.add_constant(-(sys.a(j).row(r).dot(problem.x0)));
            } else {
                for (int k = 0; k < nx; ++k) {
                    e.add(lay.x_var[pa] + k, -sys.a(j)(r, k));
                }
            }
            for (int k = 0; k < nu; ++k) {
                e.add(lay.u_var[pa] + k, -sys.b(j)(r, k));
            }
            prog.add_equality(std::move(e));
        }
    }

    // stage-cost epigraphs t >= x'Qx + u'Ru as rotated second-order cones
    // (t, 1/2, Q^{1/2} x, R^{1/2} u)
    for (int nd = 0; nd < nodes; ++nd) {
        if (tree.is_leaf(nd)) continue;
        std::vector<LinExpr> cone;
        cone.reserve(2 + nx + nu);
        cone.push_back(LinExpr::variable(lay.t_var[nd]));
        cone.push_back(LinExpr(0.5));
        for (int r = 0; r < nx; ++r) {
            LinExpr e;
            if (nd == 0) {
                e.add_constant(qh.row(r).dot(problem.x0));
            } else {
                for (int k = 0; k < nx; ++k) e.add(lay.x_var[nd] + k, qh(r, k));
            }
            cone.push_back(std::move(e));
        }
        for (int r = 0; r < nu; ++r) {
            LinExpr e;
            for (int k = 0; k < nu; ++k) e.add(lay.u_var[nd] + k, rh(r, k));
            cone.push_back(std::move(e));
        }
        prog.add_cone(ConeKind::RotatedSoc, std::move(cone));
    }

    // terminal epigraphs gamma2 >= x_N' P x_N, Schur-equivalent second-order
    // form on P^{1/2} x_N
    for (int nd = tree.level_start(problem.N); nd < nodes; ++nd) {
        std::vector<LinExpr> cone;
        cone.reserve(2 + nx);
        cone.push_back(LinExpr::variable(lay.g2_var[nd]));
        cone.push_back(LinExpr(0.5));
        for (int r = 0; r < nx; ++r) {
            LinExpr e;
            for (int k = 0; k < nx; ++k) e.add(lay.x_var[nd] + k, ph(r, k));
            cone.push_back(std::move(e));
        }
        prog.add_cone(ConeKind::RotatedSoc, std::move(cone));
    }

    // risk recursion: s >= t + q'(children epigraphs) for every vertex
    std::vector<LinExpr> risk_rows;
    for (int nd = 0; nd < nodes; ++nd) {
        if (tree.is_leaf(nd)) continue;
        for (const auto& q : problem.env.vertices()) {
            LinExpr e = LinExpr::variable(lay.s_var[nd]);
            e.add(lay.t_var[nd], -1.0);
            for (int j = 0; j < L; ++j) {
                const int ch = tree.child(nd, j);
                if (tree.is_leaf(ch)) {
                    e.add(lay.g2_var[ch], -q(j) * pscale);
                } else {
                    e.add(lay.s_var[ch], -q(j));
                }
            }
            risk_rows.push_back(std::move(e));
        }
    }
    prog.add_cone(ConeKind::NonNeg, std::move(risk_rows));

    prog.add_objective(lay.s_var[0], 1.0);

    return AssembledMpc{std::move(prog), std::move(lay), std::move(tree)};
}

MpcSolution solve_mpc(const MpcProblem& problem, const MpcOptions& opts) {
    const auto& sys = problem.sys;
    const auto t0 = std::chrono::steady_clock::now();

    // The program is positively homogeneous of degree one in (x, u) and two
    // in the epigraph variables, so solve at the unit-norm state and scale
    // the solution back. This keeps the solver geometry identical at every
    // state magnitude; the zero state solves exactly by inspection.
    const double scale = problem.x0.norm();
    ScenarioTree tree(sys.scenario_count(), problem.N);
    const int nodes = tree.node_count();

    MpcSolution out;
    out.controls.assign(nodes, Eigen::VectorXd());
    out.states.assign(nodes, Eigen::VectorXd());
    out.stage_epigraph.assign(nodes, kNaN);
    out.risk_epigraph.assign(nodes, kNaN);
    out.terminal_epigraph.assign(nodes, kNaN);

    if (scale == 0.0) {
        for (int nd = 0; nd < nodes; ++nd) {
            out.states[nd] = Eigen::VectorXd::Zero(sys.nx());
            if (!tree.is_leaf(nd)) {
                out.controls[nd] = Eigen::VectorXd::Zero(sys.nu());
                out.stage_epigraph[nd] = 0.0;
                out.risk_epigraph[nd] = 0.0;
            } else {
                out.terminal_epigraph[nd] = 0.0;
            }
        }
        out.u0 = Eigen::VectorXd::Zero(sys.nu());
        out.value = 0.0;
        out.stats.solve_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        return out;
    }

    MpcProblem unit(problem.sys, problem.env, problem.N, problem.cert,
                    problem.x0 / scale);
    AssembledMpc built = assemble_mpc(unit);
    ConicSolution sol = solve(built.program, {opts.tol, opts.max_iters, nullptr});
    const auto t1 = std::chrono::steady_clock::now();

    if (sol.status != SolveStatus::Optimal) {
        throw SolverFailed("mpc solve stopped after " +
                           std::to_string(sol.iterations) +
                           " iterations without reaching optimality");
    }

    const auto& lay = built.layout;
    const double s2 = scale * scale;
    const double pscale = std::max(spectral_norm(problem.cert.P), 1e-12);
    for (int nd = 0; nd < nodes; ++nd) {
        if (!tree.is_leaf(nd)) {
            out.controls[nd] = scale * sol.x.segment(lay.u_var[nd], sys.nu());
            out.stage_epigraph[nd] = s2 * sol.x(lay.t_var[nd]);
            out.risk_epigraph[nd] = s2 * sol.x(lay.s_var[nd]);
        } else {
            // stored in P-normalized units inside the program
            out.terminal_epigraph[nd] = s2 * pscale * sol.x(lay.g2_var[nd]);
        }
    }
    // replay the dynamics so the stored states satisfy the recursion exactly
    out.states[0] = problem.x0;
    for (int nd = 1; nd < nodes; ++nd) {
        const int pa = tree.parent(nd);
        out.states[nd] =
            step(sys, out.states[pa], out.controls[pa], tree.last_branch(nd));
    }

    out.u0 = out.controls[0];
    out.value = std::max(out.risk_epigraph[0], 0.0);
    out.stats.iterations = sol.iterations;
    out.stats.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
    out.stats.primal_residual = sol.primal_residual;
    out.stats.dual_residual = sol.dual_residual;
    out.stats.gap = sol.gap;
    return out;
}

double mpc_tree_value(const MpcProblem& problem,
                      const std::vector<Eigen::VectorXd>& controls) {
    const auto& sys = problem.sys;
    ScenarioTree tree(sys.scenario_count(), problem.N);
    if (static_cast<int>(controls.size()) < tree.level_start(problem.N)) {
        throw ShapeMismatch("mpc_tree_value: missing controls");
    }
    CostTree costs(sys.scenario_count(), problem.N);
    std::vector<Eigen::VectorXd> states(tree.node_count());
    states[0] = problem.x0;
    for (int nd = 0; nd < tree.node_count(); ++nd) {
        if (!tree.is_leaf(nd)) {
            costs.set_cost(nd, sys.stage_cost(states[nd], controls[nd]));
            for (int j = 0; j < sys.scenario_count(); ++j) {
                states[tree.child(nd, j)] =
                    step(sys, states[nd], controls[nd], j);
            }
        } else {
            costs.set_cost(nd, states[nd].dot(problem.cert.P.mat() * states[nd]));
        }
    }
    return eval_nested(problem.env, costs);
}

MpcPolicy::MpcPolicy(UncertainLinearSystem sys, RiskEnvelope env, int horizon,
                     TerminalCertificate cert, MpcOptions opts)
    : sys_(std::move(sys)), env_(std::move(env)), n_(horizon),
      cert_(std::move(cert)), opts_(opts) {
    // validate once up front with a dummy state
    (void)MpcProblem(sys_, env_, n_, cert_, Eigen::VectorXd::Zero(sys_.nx()));
}

MpcSolution MpcPolicy::solve_at(const Eigen::VectorXd& x) const {
    MpcProblem problem(sys_, env_, n_, cert_, x);
    return solve_mpc(problem, opts_);
}

Eigen::VectorXd MpcPolicy::operator()(const Eigen::VectorXd& x) const {
    return solve_at(x).u0;
}

MpcPolicy mpc_policy(const UncertainLinearSystem& sys, const RiskEnvelope& env,
                     int horizon, const TerminalCertificate& cert,
                     const MpcOptions& opts) {
    return MpcPolicy(sys, env, horizon, cert, opts);
}

}  // namespace riskmpc
