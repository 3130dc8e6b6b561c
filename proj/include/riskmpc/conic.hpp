#pragma once

/// Conic programming: build and solve problems of the form
///
///     minimize    c'x
///     subject to  Ax + s = b,   s in K,
///
/// where K is a Cartesian product of zero, nonnegative, second-order,
/// rotated-second-order and positive-semidefinite cones. Constraints are
/// entered as affine expressions; equalities are zero-cone rows.
///
/// The solver is an operator-splitting (ADMM) method: it alternates a
/// projection onto the affine subspace {Ax + s = b} (one sparse Cholesky
/// backsolve per iteration, factored once) with a projection onto the cone
/// product, using over-relaxation and residual-balancing of the penalty
/// parameter. Termination requires primal residual, dual residual and
/// duality gap to all fall below the requested tolerance, measured on the
/// original (unscaled) data. Infeasibility and unboundedness are detected
/// from divergence directions of the iterates, with extracted certificates.
/// The method is fully deterministic: identical inputs give identical
/// outputs bit-for-bit.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "riskmpc/errors.hpp"

namespace riskmpc {

enum class ConeKind { Zero, NonNeg, Soc, RotatedSoc, Psd };

/// Sparse affine expression: sum of coef * x[var] plus a constant.
class LinExpr {
public:
    LinExpr() = default;
    explicit LinExpr(double constant) : constant_(constant) {}

    static LinExpr variable(int var, double coef = 1.0) {
        LinExpr e;
        e.add(var, coef);
        return e;
    }

    LinExpr& add(int var, double coef) {
        if (coef != 0.0) terms_.emplace_back(var, coef);
        return *this;
    }
    LinExpr& add_constant(double c) {
        constant_ += c;
        return *this;
    }
    LinExpr& operator+=(const LinExpr& o) {
        terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
        constant_ += o.constant_;
        return *this;
    }
    LinExpr& operator*=(double a) {
        for (auto& t : terms_) t.second *= a;
        constant_ *= a;
        return *this;
    }

    const std::vector<std::pair<int, double>>& terms() const { return terms_; }
    double constant() const { return constant_; }

    double eval(const Eigen::VectorXd& x) const {
        double v = constant_;
        for (const auto& [var, coef] : terms_) v += coef * x(var);
        return v;
    }

private:
    std::vector<std::pair<int, double>> terms_;
    double constant_ = 0.0;
};

struct ConeBlock {
    ConeKind kind;
    int offset;      ///< first row of the block
    int dim;         ///< number of rows
    int matrix_dim;  ///< side length for Psd blocks, 0 otherwise
};

/// Conic program under construction. Rows are kept in insertion order;
/// PSD blocks are stored in scaled-lower-triangular (svec) form with
/// off-diagonal entries multiplied by sqrt(2).
class ConicProgram {
public:
    /// Appends `count` scalar variables, returns the index of the first.
    int add_variables(int count);

    void add_objective(int var, double coef);

    /// expr == 0 (zero-cone row).
    void add_equality(LinExpr expr);

    /// (expr_1, ..., expr_d) must lie in the cone. For Soc the first entry
    /// is the norm bound; for RotatedSoc the first two entries (t, u) obey
    /// 2 t u >= ||rest||^2 with t, u >= 0.
    void add_cone(ConeKind kind, std::vector<LinExpr> exprs);

    /// svec(M) in the PSD cone, where svec has length d(d+1)/2.
    void add_psd(std::vector<LinExpr> svec_exprs, int matrix_dim);

    int num_vars() const { return num_vars_; }
    int num_rows() const { return num_rows_; }
    const std::vector<ConeBlock>& blocks() const { return blocks_; }
    const std::vector<LinExpr>& rows() const { return rows_; }
    const Eigen::VectorXd objective() const;

private:
    void append_block(ConeKind kind, std::vector<LinExpr> exprs, int matrix_dim);

    int num_vars_ = 0;
    int num_rows_ = 0;
    std::vector<std::pair<int, double>> objective_;  // (var, coef)
    std::vector<LinExpr> rows_;
    std::vector<ConeBlock> blocks_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIters };

struct ConicSolution {
    SolveStatus status = SolveStatus::MaxIters;
    Eigen::VectorXd x;  ///< primal variables
    Eigen::VectorXd s;  ///< cone slacks (Ax + s = b)
    Eigen::VectorXd y;  ///< dual variables, one per row, y in K*

    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double primal_residual = 0.0;  ///< relative
    double dual_residual = 0.0;    ///< relative
    double gap = 0.0;              ///< relative
    int iterations = 0;

    /// When status == Infeasible: dual ray with b'cert = -1, A'cert ~ 0,
    /// cert in K*. When status == Unbounded: primal ray with c'cert = -1,
    /// -A cert in K.
    Eigen::VectorXd certificate;
    double certificate_residual = 0.0;

    double rho = 1.0;  ///< final penalty parameter (used for warm starts)
};

struct SolveOptions {
    double tol = 1e-7;
    int max_iters = 50000;
    const ConicSolution* warm_start = nullptr;
};

ConicSolution solve(const ConicProgram& p, const SolveOptions& opts = {});

// svec helpers (lower triangular, column major, off-diagonals scaled by
// sqrt(2) so that <svec(X), svec(Y)> = <X, Y>).
int svec_length(int dim);
Eigen::VectorXd sym_to_svec(const Eigen::MatrixXd& m);
Eigen::MatrixXd svec_to_sym(const Eigen::VectorXd& v, int dim);

/// Nearest (Frobenius) PSD matrix in svec coordinates: eigendecompose,
/// clamp negative eigenvalues to zero, reassemble.
Eigen::VectorXd psd_project(const Eigen::VectorXd& svec);

}  // namespace riskmpc
