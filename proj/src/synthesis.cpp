#include "riskmpc/synthesis.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include <Eigen/Dense>

namespace riskmpc {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

// lower-triangular column-major index of (r, c) with r >= c in an n x n matrix
int tri_index(int r, int c, int n) { return c * n - c * (c - 1) / 2 + (r - c); }

struct LmiLayout {
    int nx, nu, big;  // big = L*nx + nu + nx + nx
    int qbar0, y0, g0;

    int qbar_var(int r, int c) const {
        if (r < c) std::swap(r, c);
        return qbar0 + tri_index(r, c, nx);
    }
    int y_var(int r, int c) const { return y0 + r * nx + c; }
    int g_var(int r, int c) const { return g0 + r * nx + c; }
};

LmiLayout make_layout(const UncertainLinearSystem& sys) {
    LmiLayout lay;
    lay.nx = sys.nx();
    lay.nu = sys.nu();
    lay.big = sys.scenario_count() * sys.nx() + sys.nu() + 2 * sys.nx();
    lay.qbar0 = 0;
    lay.y0 = lay.nx * (lay.nx + 1) / 2;
    lay.g0 = lay.y0 + lay.nu * lay.nx;
    return lay;
}

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic standard normals (Box-Muller over 53-bit uniforms), so the
// trial distribution does not depend on the standard library.
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : state_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    double next_uniform() {
        state_ = splitmix64(state_);
        return static_cast<double>(state_ >> 11) * 0x1.0p-53;
    }
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace

ConicProgram assemble_lmi(const UncertainLinearSystem& sys,
                          const RiskEnvelope& env) {
    if (env.size_L() != sys.scenario_count()) {
        throw ShapeMismatch("envelope branching does not match scenario count");
    }
    if (env.vertices().empty()) throw EmptyEnvelope("no envelope vertices");

    const int nx = sys.nx();
    const int nu = sys.nu();
    const int L = sys.scenario_count();
    const LmiLayout lay = make_layout(sys);

    ConicProgram prog;
    prog.add_variables(lay.g0 + nx * nx);

    const Eigen::MatrixXd rinv = spd_inverse(sys.r()).mat();
    const Eigen::MatrixXd qh = psd_sqrt(sys.q()).mat();
    const double eps = 1e-6 * (1.0 + spectral_norm(sys.q()));

    const int big = lay.big;
    const int o1 = 0;            // L*nx rows: I_L (x) Qbar
    const int o2 = L * nx;       // nu rows: R^-1
    const int o3 = o2 + nu;      // nx rows: I
    const int o4 = o3 + nx;      // nx rows: -Qbar + G + G'

    for (const auto& q : env.vertices()) {
        // grid(i, j) holds the (i, j) entry of the block matrix as an
        // affine expression; filled symmetrically, emitted from the lower
        // triangle.
        std::vector<std::vector<LinExpr>> grid(big, std::vector<LinExpr>(big));

        for (int bi = 0; bi < L; ++bi) {
            const double sq = std::sqrt(std::max(q(bi), 0.0));
            for (int r = 0; r < nx; ++r) {
                for (int c = 0; c < nx; ++c) {
                    grid[o1 + bi * nx + r][o1 + bi * nx + c] =
                        LinExpr::variable(lay.qbar_var(r, c));
                }
                // coupling -Sigma^{1/2} (Abar G + Bbar Y)
                for (int c = 0; c < nx; ++c) {
                    LinExpr e;
                    for (int k = 0; k < nx; ++k) {
                        e.add(lay.g_var(k, c), -sq * sys.a(bi)(r, k));
                    }
                    for (int k = 0; k < nu; ++k) {
                        e.add(lay.y_var(k, c), -sq * sys.b(bi)(r, k));
                    }
                    grid[o1 + bi * nx + r][o4 + c] = e;
                    grid[o4 + c][o1 + bi * nx + r] = e;
                }
            }
        }
        for (int r = 0; r < nu; ++r) {
            for (int c = 0; c < nu; ++c) grid[o2 + r][o2 + c] = LinExpr(rinv(r, c));
            for (int c = 0; c < nx; ++c) {
                const LinExpr e = LinExpr::variable(lay.y_var(r, c), -1.0);
                grid[o2 + r][o4 + c] = e;
                grid[o4 + c][o2 + r] = e;
            }
        }
        for (int r = 0; r < nx; ++r) {
            grid[o3 + r][o3 + r] = LinExpr(1.0);
            for (int c = 0; c < nx; ++c) {
                LinExpr e;
                for (int k = 0; k < nx; ++k) {
                    e.add(lay.g_var(k, c), -qh(r, k));
                }
                grid[o3 + r][o4 + c] = e;
                grid[o4 + c][o3 + r] = e;
            }
        }
        for (int r = 0; r < nx; ++r) {
            for (int c = 0; c < nx; ++c) {
                LinExpr e = LinExpr::variable(lay.qbar_var(r, c), -1.0);
                e.add(lay.g_var(r, c), 1.0);
                e.add(lay.g_var(c, r), 1.0);
                grid[o4 + r][o4 + c] = e;
            }
        }
        for (int i = 0; i < big; ++i) grid[i][i].add_constant(-eps);

        std::vector<LinExpr> sv;
        sv.reserve(svec_length(big));
        for (int c = 0; c < big; ++c) {
            for (int r = c; r < big; ++r) {
                LinExpr e = grid[r][c];
                if (r != c) e *= kSqrt2;
                sv.push_back(std::move(e));
            }
        }
        prog.add_psd(std::move(sv), big);
    }

    return prog;
}

double verify_condition9(const UncertainLinearSystem& sys,
                         const RiskEnvelope& env, const SymMatrix& P,
                         const Eigen::MatrixXd& F) {
    const int nx = sys.nx();
    if (P.dim() != nx || F.rows() != sys.nu() || F.cols() != nx) {
        throw ShapeMismatch("verify_condition9: dimension mismatch");
    }
    const Eigen::MatrixXd base =
        F.transpose() * sys.r().mat() * F + sys.q().mat() - P.mat();
    std::vector<Eigen::MatrixXd> phi_p_phi;
    phi_p_phi.reserve(sys.scenario_count());
    for (int j = 0; j < sys.scenario_count(); ++j) {
        const Eigen::MatrixXd phi = sys.a(j) + sys.b(j) * F;
        phi_p_phi.push_back(phi.transpose() * P.mat() * phi);
    }
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& q : env.vertices()) {
        Eigen::MatrixXd lhs = base;
        for (int j = 0; j < sys.scenario_count(); ++j) {
            lhs += q(j) * phi_p_phi[j];
        }
        const SymMatrix sym(0.5 * (lhs + lhs.transpose()));
        margin = std::min(margin, -max_eigenvalue(sym));
    }
    return margin;
}

namespace {

struct Recovered {
    bool ok = false;
    SymMatrix p = SymMatrix::identity(1);
    Eigen::MatrixXd f;
    SymMatrix qbar = SymMatrix::identity(1);
    Eigen::MatrixXd y, g;
    double margin = 0.0;
};

Recovered recover_witness(const UncertainLinearSystem& sys,
                          const RiskEnvelope& env, const LmiLayout& lay,
                          const ConicSolution& sol) {
    Recovered out;
    const int nx = lay.nx;
    Eigen::MatrixXd qbar(nx, nx), y(sys.nu(), nx), g(nx, nx);
    for (int r = 0; r < nx; ++r) {
        for (int c = 0; c < nx; ++c) qbar(r, c) = sol.x(lay.qbar_var(r, c));
    }
    for (int r = 0; r < sys.nu(); ++r) {
        for (int c = 0; c < nx; ++c) y(r, c) = sol.x(lay.y_var(r, c));
    }
    for (int r = 0; r < nx; ++r) {
        for (int c = 0; c < nx; ++c) g(r, c) = sol.x(lay.g_var(r, c));
    }
    SymMatrix qbar_sym(0.5 * (qbar + qbar.transpose()));
    Eigen::FullPivLU<Eigen::MatrixXd> g_lu(g);
    if (!g_lu.isInvertible() || !is_pos_def(qbar_sym, 0.0)) return out;
    out.p = spd_inverse(qbar_sym);
    out.f = y * g_lu.inverse();
    out.qbar = qbar_sym;
    out.y = y;
    out.g = g;
    out.margin = verify_condition9(sys, env, out.p, out.f);
    out.ok = out.margin > 1e-8;
    return out;
}

}  // namespace

TerminalCertificate synthesize_terminal(const UncertainLinearSystem& sys,
                                        const RiskEnvelope& env,
                                        const SynthesisOptions& opts) {
    const LmiLayout lay = make_layout(sys);
    const auto t0 = std::chrono::steady_clock::now();

    // The feasibility system admits witnesses at every scale down to the
    // strictness floor, and an operator-splitting solve started at zero
    // lands near the small-Qbar (huge-P) end, which makes a terrible
    // terminal weight for the online program. Walk a descending ladder of
    // floors Qbar >= tau*I and keep the first verified witness; the bare
    // program (no floor) is the final arbiter of feasibility, so the
    // ladder never changes what is declared infeasible.
    const double tau_start = 0.3 / min_eigenvalue(sys.q());
    const std::vector<double> floors = {tau_start, 0.1 * tau_start,
                                        0.01 * tau_start, 1e-3 * tau_start,
                                        0.0};

    int total_iters = 0;
    ConicSolution last;
    for (double tau : floors) {
        ConicProgram prog = assemble_lmi(sys, env);
        if (opts.maximize_trace_qbar) {
            for (int r = 0; r < lay.nx; ++r) {
                prog.add_objective(lay.qbar_var(r, r), -1.0);
            }
        }
        if (tau > 0.0) {
            std::vector<LinExpr> sv;
            sv.reserve(svec_length(lay.nx));
            for (int c = 0; c < lay.nx; ++c) {
                for (int r = c; r < lay.nx; ++r) {
                    LinExpr e = LinExpr::variable(lay.qbar_var(r, c),
                                                  r == c ? 1.0 : kSqrt2);
                    if (r == c) e.add_constant(-tau);
                    sv.push_back(std::move(e));
                }
            }
            prog.add_psd(std::move(sv), lay.nx);
        }

        // floored rungs converge within a few hundred iterations when they
        // are feasible; bail to the next rung quickly when they are not
        const bool bare = tau == 0.0;
        const int rung_iters =
            bare ? opts.max_iters : std::min(opts.max_iters, 10000);
        ConicSolution sol = solve(prog, {opts.tol, rung_iters, nullptr});
        total_iters += sol.iterations;
        last = sol;

        if (sol.status == SolveStatus::Optimal) {
            Recovered rec = recover_witness(sys, env, lay, sol);
            if (rec.ok) {
                const auto t1 = std::chrono::steady_clock::now();
                TerminalCertificate cert{std::move(rec.p), std::move(rec.f),
                                         std::move(rec.qbar), std::move(rec.y),
                                         std::move(rec.g), rec.margin, {}};
                cert.stats.iterations = total_iters;
                cert.stats.solve_seconds =
                    std::chrono::duration<double>(t1 - t0).count();
                cert.stats.primal_residual = sol.primal_residual;
                cert.stats.dual_residual = sol.dual_residual;
                return cert;
            }
            if (bare) {
                throw VerificationFailed(
                    "solver reported optimal but the recovered witness fails "
                    "the stability re-check");
            }
        }
        if (bare) {
            if (sol.status == SolveStatus::Infeasible) {
                throw SynthesisInfeasible(
                    "terminal synthesis is infeasible (certificate residual " +
                        std::to_string(sol.certificate_residual) + ")",
                    sol.certificate);
            }
            throw SolverFailed("terminal synthesis: solver stopped after " +
                               std::to_string(total_iters) +
                               " iterations without a decision");
        }
    }
    throw SolverFailed("terminal synthesis: floor ladder exhausted");
}

TrialReport random_feasibility_trial(int nx, int nu, int L, int count,
                                     std::uint64_t seed,
                                     const SynthesisOptions& opts) {
    if (count < 1) throw ConfigError("trial count must be >= 1");
    TrialReport report;
    report.instances.resize(count);

    const Pmf pmf(Eigen::VectorXd::Constant(L, 1.0 / L));
    const RiskEnvelope env = make_envelope(RiskSpec::expectation(), pmf);
    const double scale = 1.0 / std::sqrt(static_cast<double>(nx));

    // instances are seeded by index and independent, so they can run in
    // parallel without affecting the reported stream
    auto run_instance = [&](int i) {
        NormalSource normal(splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (i + 1))));
        std::vector<Eigen::MatrixXd> as, bs;
        for (int j = 0; j < L; ++j) {
            Eigen::MatrixXd a(nx, nx), b(nx, nu);
            for (int r = 0; r < nx; ++r)
                for (int c = 0; c < nx; ++c) a(r, c) = scale * normal();
            for (int r = 0; r < nx; ++r)
                for (int c = 0; c < nu; ++c) b(r, c) = normal();
            as.push_back(std::move(a));
            bs.push_back(std::move(b));
        }
        UncertainLinearSystem sys(std::move(as), std::move(bs), pmf,
                                  SymMatrix::identity(nx),
                                  SymMatrix::identity(nu));
        TrialInstance& inst = report.instances[i];
        try {
            const TerminalCertificate cert = synthesize_terminal(sys, env, opts);
            inst.feasible = true;
            inst.margin = cert.margin;
            inst.iterations = cert.stats.iterations;
        } catch (const SynthesisInfeasible&) {
            inst.feasible = false;
        } catch (const Error&) {
            inst.feasible = false;
            inst.undecided = true;
        }
    };

    const int workers = std::max(
        1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()),
                         count));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<int> next{0};
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                run_instance(i);
            }
        });
    }
    for (auto& th : pool) th.join();

    int feasible = 0;
    for (const auto& inst : report.instances) feasible += inst.feasible;
    report.rate = static_cast<double>(feasible) / count;
    return report;
}

}  // namespace riskmpc
