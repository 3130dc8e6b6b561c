#include "riskmpc/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

namespace riskmpc {

// ---------------------------------------------------------------------------
// svec helpers
// ---------------------------------------------------------------------------

namespace {
constexpr double kSqrt2 = 1.4142135623730951;

int svec_dim_from_length(int len) {
    const int dim = static_cast<int>((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0 + 0.5);
    if (dim * (dim + 1) / 2 != len) {
        throw InvalidProgram("svec vector length is not triangular");
    }
    return dim;
}
}  // namespace

int svec_length(int dim) { return dim * (dim + 1) / 2; }

Eigen::VectorXd sym_to_svec(const Eigen::MatrixXd& m) {
    const int d = static_cast<int>(m.rows());
    Eigen::VectorXd v(svec_length(d));
    int k = 0;
    for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i) {
            v(k++) = (i == j) ? m(i, j) : kSqrt2 * 0.5 * (m(i, j) + m(j, i));
        }
    }
    return v;
}

Eigen::MatrixXd svec_to_sym(const Eigen::VectorXd& v, int dim) {
    if (static_cast<int>(v.size()) != svec_length(dim)) {
        throw InvalidProgram("svec_to_sym: length mismatch");
    }
    Eigen::MatrixXd m(dim, dim);
    int k = 0;
    for (int j = 0; j < dim; ++j) {
        for (int i = j; i < dim; ++i) {
            const double x = (i == j) ? v(k) : v(k) / kSqrt2;
            m(i, j) = x;
            m(j, i) = x;
            ++k;
        }
    }
    return m;
}

Eigen::VectorXd psd_project(const Eigen::VectorXd& svec) {
    const int d = svec_dim_from_length(static_cast<int>(svec.size()));
    const Eigen::MatrixXd m = svec_to_sym(svec, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd p =
        eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    return sym_to_svec(0.5 * (p + p.transpose()));
}

// ---------------------------------------------------------------------------
// program construction
// ---------------------------------------------------------------------------

int ConicProgram::add_variables(int count) {
    if (count < 1) throw InvalidProgram("add_variables: count must be >= 1");
    const int first = num_vars_;
    num_vars_ += count;
    return first;
}

void ConicProgram::add_objective(int var, double coef) {
    if (var < 0 || var >= num_vars_) throw InvalidProgram("objective: bad index");
    objective_.emplace_back(var, coef);
}

void ConicProgram::add_equality(LinExpr expr) {
    std::vector<LinExpr> e;
    e.push_back(std::move(expr));
    append_block(ConeKind::Zero, std::move(e), 0);
}

void ConicProgram::add_cone(ConeKind kind, std::vector<LinExpr> exprs) {
    if (kind == ConeKind::Psd) {
        throw InvalidProgram("use add_psd for PSD blocks");
    }
    if ((kind == ConeKind::Soc && exprs.size() < 2) ||
        (kind == ConeKind::RotatedSoc && exprs.size() < 3)) {
        throw InvalidProgram("cone block too small");
    }
    append_block(kind, std::move(exprs), 0);
}

void ConicProgram::add_psd(std::vector<LinExpr> svec_exprs, int matrix_dim) {
    if (static_cast<int>(svec_exprs.size()) != svec_length(matrix_dim)) {
        throw InvalidProgram("add_psd: svec length does not match matrix_dim");
    }
    append_block(ConeKind::Psd, std::move(svec_exprs), matrix_dim);
}

void ConicProgram::append_block(ConeKind kind, std::vector<LinExpr> exprs,
                                int matrix_dim) {
    for (const auto& e : exprs) {
        if (!std::isfinite(e.constant())) throw InvalidProgram("non-finite constant");
        for (const auto& [var, coef] : e.terms()) {
            if (var < 0 || var >= num_vars_) throw InvalidProgram("bad variable index");
            if (!std::isfinite(coef)) throw InvalidProgram("non-finite coefficient");
        }
    }
    ConeBlock blk{kind, num_rows_, static_cast<int>(exprs.size()), matrix_dim};
    blocks_.push_back(blk);
    num_rows_ += blk.dim;
    for (auto& e : exprs) rows_.push_back(std::move(e));
}

const Eigen::VectorXd ConicProgram::objective() const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(num_vars_);
    for (const auto& [var, coef] : objective_) c(var) += coef;
    return c;
}

// ---------------------------------------------------------------------------
// cone projections
// ---------------------------------------------------------------------------

namespace {

void project_soc(Eigen::Ref<Eigen::VectorXd> v) {
    const int d = static_cast<int>(v.size());
    const double t = v(0);
    const double nz = v.tail(d - 1).norm();
    if (nz <= t) return;
    if (nz <= -t) {
        v.setZero();
        return;
    }
    const double beta = 0.5 * (t + nz);
    v(0) = beta;
    v.tail(d - 1) *= beta / nz;
}

void project_rsoc(Eigen::Ref<Eigen::VectorXd> v) {
    // Rotate (t, u) into SOC coordinates, project, rotate back.
    const double inv = 1.0 / kSqrt2;
    const double a = (v(0) + v(1)) * inv;
    const double b = (v(0) - v(1)) * inv;
    v(0) = a;
    v(1) = b;
    project_soc(v);
    const double t = (v(0) + v(1)) * inv;
    const double u = (v(0) - v(1)) * inv;
    v(0) = t;
    v(1) = u;
}

struct ConeLayout {
    std::vector<ConeBlock> blocks;

    void project(Eigen::VectorXd& v) const {
        for (const auto& blk : blocks) {
            auto seg = v.segment(blk.offset, blk.dim);
            switch (blk.kind) {
                case ConeKind::Zero:
                    seg.setZero();
                    break;
                case ConeKind::NonNeg:
                    seg = seg.cwiseMax(0.0);
                    break;
                case ConeKind::Soc:
                    project_soc(seg);
                    break;
                case ConeKind::RotatedSoc:
                    project_rsoc(seg);
                    break;
                case ConeKind::Psd:
                    seg = psd_project(seg);
                    break;
            }
        }
    }

    /// Projection onto the dual cone K*: Pi_{K*}(v) = v + Pi_K(-v).
    Eigen::VectorXd project_dual(const Eigen::VectorXd& v) const {
        Eigen::VectorXd neg = -v;
        project(neg);
        return v + neg;
    }

    double dual_cone_distance(const Eigen::VectorXd& v) const {
        return (v - project_dual(v)).lpNorm<Eigen::Infinity>();
    }

    double cone_distance(Eigen::VectorXd v) const {
        Eigen::VectorXd p = v;
        project(p);
        return (v - p).lpNorm<Eigen::Infinity>();
    }
};

// ---------------------------------------------------------------------------
// data scaling (Ruiz equilibration, cone-aware)
// ---------------------------------------------------------------------------

struct Scaling {
    Eigen::VectorXd d;  // row scalings, cone-compatible
    Eigen::VectorXd e;  // column scalings
    double sigma_b = 1.0;
    double sigma_c = 1.0;
};

// Row scalings must preserve cone membership: free per-row for Zero/NonNeg,
// one scalar per Soc/RotatedSoc block, and the congruence pattern
// d(i,j) = t_i * t_j for PSD blocks (scaling svec(M) that way equals
// svec(T M T) for diagonal T, which preserves semidefiniteness).
Scaling equilibrate(const Eigen::SparseMatrix<double>& a,
                    const std::vector<ConeBlock>& blocks,
                    const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
    const int m = static_cast<int>(a.rows());
    const int n = static_cast<int>(a.cols());
    Scaling sc;
    sc.d = Eigen::VectorXd::Ones(m);
    sc.e = Eigen::VectorXd::Ones(n);

    Eigen::VectorXd rowmax(m), colmax(n);
    for (int iter = 0; iter < 10; ++iter) {
        rowmax.setZero();
        colmax.setZero();
        for (int j = 0; j < a.outerSize(); ++j) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(a, j); it; ++it) {
                const double w = std::abs(it.value()) * sc.d(it.row()) * sc.e(j);
                rowmax(it.row()) = std::max(rowmax(it.row()), w);
                colmax(j) = std::max(colmax(j), w);
            }
        }
        // aggregate row norms within cone blocks
        for (const auto& blk : blocks) {
            if (blk.kind == ConeKind::Soc) {
                const double mx = rowmax.segment(blk.offset, blk.dim).maxCoeff();
                rowmax.segment(blk.offset, blk.dim).setConstant(mx);
            } else if (blk.kind == ConeKind::RotatedSoc) {
                // (t, u, z) -> (bt, gu, dz) preserves the cone iff d^2 = bg,
                // which leaves two degrees of freedom; choose them by a
                // least-squares fit of the three group norms in log space.
                const double rt = rowmax(blk.offset);
                const double ru = rowmax(blk.offset + 1);
                const double rz =
                    rowmax.segment(blk.offset + 2, blk.dim - 2).maxCoeff();
                const double lt = rt > 0.0 ? std::log(rt) : 0.0;
                const double lu = ru > 0.0 ? std::log(ru) : 0.0;
                const double lz = rz > 0.0 ? std::log(rz) : 0.0;
                double a = 0.0, bb = 0.0;  // log group multipliers for t, u
                if (rt > 0.0 && ru > 0.0 && rz > 0.0) {
                    a = (-2.5 * (2.0 * lt + lz) + 0.5 * (2.0 * lu + lz)) / 6.0;
                    bb = (-2.5 * (2.0 * lu + lz) + 0.5 * (2.0 * lt + lz)) / 6.0;
                } else if (rt > 0.0 && rz > 0.0) {
                    // epigraph block with a constant in the u slot: keep its
                    // scale pinned and split the imbalance between t and z
                    a = -0.4 * (2.0 * lt + lz);
                    bb = 0.0;
                } else if (ru > 0.0 && rz > 0.0) {
                    bb = -0.4 * (2.0 * lu + lz);
                    a = 0.0;
                } else if (rt > 0.0 && ru > 0.0) {
                    a = -lt;
                    bb = -lu;
                } else if (rz > 0.0) {
                    a = bb = -lz;
                } else if (rt > 0.0) {
                    a = bb = -lt;
                } else if (ru > 0.0) {
                    a = bb = -lu;
                }
                // encode the (damped) multipliers through the 1/sqrt update
                rowmax(blk.offset) = std::exp(-a);
                rowmax(blk.offset + 1) = std::exp(-bb);
                rowmax.segment(blk.offset + 2, blk.dim - 2)
                    .setConstant(std::exp(-0.5 * (a + bb)));
            } else if (blk.kind == ConeKind::Psd) {
                const int md = blk.matrix_dim;
                Eigen::VectorXd g = Eigen::VectorXd::Zero(md);
                int k = blk.offset;
                for (int cj = 0; cj < md; ++cj) {
                    for (int ci = cj; ci < md; ++ci) {
                        g(ci) = std::max(g(ci), rowmax(k));
                        g(cj) = std::max(g(cj), rowmax(k));
                        ++k;
                    }
                }
                k = blk.offset;
                for (int cj = 0; cj < md; ++cj) {
                    for (int ci = cj; ci < md; ++ci) {
                        rowmax(k++) = std::sqrt(std::max(g(ci), 1e-300) *
                                                std::max(g(cj), 1e-300));
                    }
                }
            }
        }
        bool converged = true;
        for (int i = 0; i < m; ++i) {
            if (rowmax(i) > 0.0) {
                if (std::abs(rowmax(i) - 1.0) > 0.1) converged = false;
                sc.d(i) /= std::sqrt(rowmax(i));
            }
        }
        for (int j = 0; j < n; ++j) {
            if (colmax(j) > 0.0) {
                if (std::abs(colmax(j) - 1.0) > 0.1) converged = false;
                sc.e(j) /= std::sqrt(colmax(j));
            }
        }
        if (converged) break;
    }

    const double bn = (sc.d.asDiagonal() * b).lpNorm<Eigen::Infinity>();
    const double cn = (sc.e.asDiagonal() * c).lpNorm<Eigen::Infinity>();
    sc.sigma_b = 1.0 / std::clamp(bn, 1e-6, 1e6);
    sc.sigma_c = 1.0 / std::clamp(cn, 1e-6, 1e6);
    if (bn == 0.0) sc.sigma_b = 1.0;
    if (cn == 0.0) sc.sigma_c = 1.0;
    return sc;
}

}  // namespace

// ---------------------------------------------------------------------------
// solver
// ---------------------------------------------------------------------------

ConicSolution solve(const ConicProgram& p, const SolveOptions& opts) {
    if (p.num_vars() < 1) throw InvalidProgram("program has no variables");
    if (p.num_rows() < 1) throw InvalidProgram("program has no constraints");
    if (!(opts.tol > 0.0)) throw InvalidProgram("tol must be positive");

    const int n = p.num_vars();
    const int m = p.num_rows();

    // Assemble original data. Row convention: a cone row holding expression
    // sum(coef*x) + const contributes A(row, var) = -coef and b(row) = const,
    // so that the slack s = b - Ax equals the expression value.
    Eigen::VectorXd b(m);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < m; ++i) {
        const LinExpr& e = p.rows()[i];
        b(i) = e.constant();
        for (const auto& [var, coef] : e.terms()) {
            trips.emplace_back(i, var, -coef);
        }
    }
    Eigen::SparseMatrix<double> A(m, n);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    const Eigen::VectorXd c = p.objective();
    if (!b.allFinite() || !c.allFinite()) throw InvalidProgram("non-finite data");

    ConeLayout cones{p.blocks()};

    // Scaled problem: As = D A E, bs = sigma_b D b, cs = sigma_c E c.
    const Scaling sc = equilibrate(A, p.blocks(), b, c);
    Eigen::SparseMatrix<double> As =
        sc.d.asDiagonal() * A * sc.e.asDiagonal();
    As.makeCompressed();
    Eigen::SparseMatrix<double> Ast = As.transpose();
    Ast.makeCompressed();
    const Eigen::VectorXd bs = sc.sigma_b * (sc.d.asDiagonal() * b);
    const Eigen::VectorXd cs = sc.sigma_c * (sc.e.asDiagonal() * c);

    // Fixed per-row penalty weights: equality rows are enforced much more
    // stiffly than cone rows. Weights are uniform inside each cone block so
    // the weighted projection onto the block equals the plain projection.
    // The global penalty rho multiplies the whole weight vector and factors
    // out of the KKT matrix, so adapting it never requires refactorization.
    Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
    for (const auto& blk : p.blocks()) {
        if (blk.kind == ConeKind::Zero) {
            w.segment(blk.offset, blk.dim).setConstant(1e3);
        }
    }

    // Factor I + As' W As once.
    Eigen::SparseMatrix<double> kkt =
        Ast * Eigen::SparseMatrix<double>(w.asDiagonal()) * As;
    {
        Eigen::SparseMatrix<double> eye(n, n);
        eye.setIdentity();
        kkt = kkt + eye;
    }
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(kkt);
    if (ldlt.info() != Eigen::Success) {
        throw SolverFailed("conic: factorization of I + A'WA failed");
    }
    const Eigen::VectorXd wb = w.cwiseProduct(bs);
    const Eigen::VectorXd Atwb = Ast * wb;

    const double alpha = 1.6;  // over-relaxation
    double rho = 1.0;

    Eigen::VectorXd xk = Eigen::VectorXd::Zero(n);   // relaxed free iterate
    Eigen::VectorXd sk = Eigen::VectorXd::Zero(m);   // cone-projected slack
    Eigen::VectorXd us = Eigen::VectorXd::Zero(m);   // scaled dual accumulator

    if (opts.warm_start && opts.warm_start->x.size() == n &&
        opts.warm_start->s.size() == m && opts.warm_start->y.size() == m) {
        const ConicSolution& ws = *opts.warm_start;
        rho = std::clamp(ws.rho, 1e-6, 1e6);
        xk = sc.sigma_b * ws.x.cwiseQuotient(sc.e);
        sk = sc.sigma_b * sc.d.cwiseProduct(ws.s);
        cones.project(sk);
        us = -(sc.sigma_c * ws.y.cwiseQuotient(sc.d).cwiseQuotient(w)) / rho;
    }

    // work vectors
    Eigen::VectorXd q(m), rhs(n), x(n), s(m), v(m);
    Eigen::VectorXd x_u(n), s_u(m), y_u(m), work_m(m), work_n(n);

    // running (ergodic) averages since the last penalty change; convex
    // combinations of cone-feasible iterates stay cone-feasible, and the
    // average often settles faster than the pointwise iterate when the
    // tail oscillates around a degenerate solution
    Eigen::VectorXd avg_x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd avg_s = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd avg_us = Eigen::VectorXd::Zero(m);
    int avg_count = 0;

    ConicSolution sol;
    sol.x = Eigen::VectorXd::Zero(n);
    sol.s = Eigen::VectorXd::Zero(m);
    sol.y = Eigen::VectorXd::Zero(m);

    const double bnorm = b.lpNorm<Eigen::Infinity>();
    const double cnorm = c.lpNorm<Eigen::Infinity>();

    double last_rp = 1.0, last_rd = 1.0;
    Eigen::VectorXd prev_us = us, prev_xk = xk;

    auto eval_candidate = [&](const Eigen::VectorXd& cx,
                              const Eigen::VectorXd& csk,
                              const Eigen::VectorXd& cus) {
        x_u = cx.cwiseProduct(sc.e) / sc.sigma_b;
        s_u = csk.cwiseQuotient(sc.d) / sc.sigma_b;
        y_u = (-rho) * w.cwiseProduct(cus).cwiseProduct(sc.d) / sc.sigma_c;
        work_m.noalias() = A * x_u;
        const double rp_abs = (work_m + s_u - b).lpNorm<Eigen::Infinity>();
        const double rp_scale =
            1.0 + std::max({work_m.lpNorm<Eigen::Infinity>(),
                            s_u.lpNorm<Eigen::Infinity>(), bnorm});
        work_n.noalias() = A.transpose() * y_u;
        const double rd_abs = (c + work_n).lpNorm<Eigen::Infinity>();
        const double rd_scale =
            1.0 + std::max(cnorm, work_n.lpNorm<Eigen::Infinity>());
        const double pobj = c.dot(x_u);
        const double dobj = -b.dot(y_u);
        sol.x = x_u;
        sol.s = s_u;
        sol.y = y_u;
        sol.primal_objective = pobj;
        sol.dual_objective = dobj;
        sol.primal_residual = rp_abs / rp_scale;
        sol.dual_residual = rd_abs / rd_scale;
        sol.gap = std::abs(pobj - dobj) /
                  (1.0 + std::max(std::abs(pobj), std::abs(dobj)));
        return sol.primal_residual <= opts.tol &&
               sol.dual_residual <= opts.tol && sol.gap <= opts.tol;
    };

    // Infeasibility: a diverging dual direction dy with b'dy < 0,
    // A'dy ~ 0 and dy in K* certifies primal infeasibility; a diverging
    // primal direction dx with c'dx < 0 and -A dx in K certifies
    // unboundedness. Certificates are normalized so b'y = -1 / c'x = -1.
    // The reference iterate resets only when the penalty changes, so the
    // divergence window keeps growing and the direction estimate sharpens.
    auto try_certificates = [&]() -> bool {
        Eigen::VectorXd dy = -(us - prev_us).cwiseProduct(w).cwiseProduct(sc.d);
        double dyn = dy.lpNorm<Eigen::Infinity>();
        if (dyn > 1e-14) {
            dy = cones.project_dual(dy);  // keep the direction exactly in K*
            dyn = dy.lpNorm<Eigen::Infinity>();
            const double bty = b.dot(dy);
            if (dyn > 1e-14 && bty < -1e-12 * (1.0 + bnorm) * dyn) {
                Eigen::VectorXd cert = dy / (-bty);
                const double res =
                    (A.transpose() * cert).lpNorm<Eigen::Infinity>() /
                    (1.0 + cert.lpNorm<Eigen::Infinity>());
                if (res <= opts.tol) {
                    sol.status = SolveStatus::Infeasible;
                    sol.certificate = cert;
                    sol.certificate_residual = res;
                    return true;
                }
            }
        }
        Eigen::VectorXd dx = (xk - prev_xk).cwiseProduct(sc.e);
        const double dxn = dx.lpNorm<Eigen::Infinity>();
        if (dxn > 1e-14) {
            const double ctx = c.dot(dx);
            if (ctx < -1e-12 * (1.0 + cnorm) * dxn) {
                Eigen::VectorXd cert = dx / (-ctx);
                const double res = cones.cone_distance(-(A * cert)) /
                                   (1.0 + cert.lpNorm<Eigen::Infinity>());
                if (res <= opts.tol) {
                    sol.status = SolveStatus::Unbounded;
                    sol.certificate = cert;
                    sol.certificate_residual = res;
                    return true;
                }
            }
        }
        return false;
    };

    int iter = 0;
    int next_adapt = 100;  // exponentially spaced so rho eventually freezes
    while (iter < opts.max_iters) {
        ++iter;
        // affine projection
        q = sk - us;
        rhs = xk - cs / rho + Atwb;
        rhs.noalias() -= Ast * w.cwiseProduct(q);
        x = ldlt.solve(rhs);
        s = bs;
        s.noalias() -= As * x;
        // over-relaxation, then cone projection
        xk = alpha * x + (1.0 - alpha) * xk;
        v = alpha * s + (1.0 - alpha) * sk + us;
        sk = v;
        cones.project(sk);
        us = v - sk;

        avg_x += xk;
        avg_s += sk;
        avg_us += us;
        ++avg_count;

        const bool check = (iter <= 10) || (iter % 25 == 0);
        if (check) {
            sol.iterations = iter;
            sol.rho = rho;
            if (eval_candidate(xk, sk, us)) {
                sol.status = SolveStatus::Optimal;
                return sol;
            }
            last_rp = sol.primal_residual;
            last_rd = sol.dual_residual;
            if (avg_count >= 200 &&
                eval_candidate(avg_x / avg_count, avg_s / avg_count,
                               avg_us / avg_count)) {
                sol.status = SolveStatus::Optimal;
                return sol;
            }
        }
        if (iter % 100 == 0 && try_certificates()) {
            sol.iterations = iter;
            sol.rho = rho;
            return sol;
        }
        if (iter == next_adapt) {
            next_adapt *= 2;
            // residual balancing; the factorization is unaffected by rho
            const double ratio = (last_rp + 1e-300) / (last_rd + 1e-300);
            if (ratio > 3.0 || ratio < 1.0 / 3.0) {
                const double factor = std::clamp(std::sqrt(ratio), 0.2, 5.0);
                const double new_rho = std::clamp(rho * factor, 1e-6, 1e6);
                if (new_rho != rho) {
                    us *= rho / new_rho;
                    rho = new_rho;
                    avg_x.setZero();
                    avg_s.setZero();
                    avg_us.setZero();
                    avg_count = 0;
                    prev_us = us;
                    prev_xk = xk;
                }
            }
        }
    }

    sol.iterations = iter;
    sol.rho = rho;
    eval_candidate(xk, sk, us);
    sol.status = SolveStatus::MaxIters;
    return sol;
}

}  // namespace riskmpc
