#pragma once

/// Dense symmetric-matrix utilities: Jacobi eigendecomposition, definiteness
/// tests, PSD square roots, Cholesky factorization and inverses. Everything
/// here is deterministic and safe for concurrent use (pure functions over
/// immutable values).

#include <Eigen/Core>

#include "riskmpc/errors.hpp"

namespace riskmpc {

/// Symmetric real matrix. Construction validates symmetry within
/// 1e-12-relative tolerance and stores the symmetrized part (M + M^T)/2,
/// which guards against drift from repeated products.
class SymMatrix {
public:
    explicit SymMatrix(const Eigen::MatrixXd& m);

    static SymMatrix identity(int dim);
    static SymMatrix diagonal(const Eigen::VectorXd& d);
    static SymMatrix zero(int dim);

    int dim() const { return static_cast<int>(m_.rows()); }
    const Eigen::MatrixXd& mat() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }

private:
    Eigen::MatrixXd m_;
};

struct EigResult {
    Eigen::VectorXd values;   ///< ascending
    Eigen::MatrixXd vectors;  ///< orthogonal, columns matching `values`
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Converges when
/// the off-diagonal Frobenius mass drops below 1e-12 * ||M||_F. Adequate and
/// accurate for the small dimensions (<~100) used throughout this project.
EigResult sym_eig(const SymMatrix& m);

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// [-1e-10, 0) are clamped to zero; anything below -1e-10 throws
/// NotPositiveSemidefinite.
SymMatrix psd_sqrt(const SymMatrix& m);

/// True iff the maximum eigenvalue is strictly below -margin.
bool is_neg_def(const SymMatrix& m, double margin);

/// True iff the minimum eigenvalue is strictly above +margin.
bool is_pos_def(const SymMatrix& m, double margin = 0.0);

double min_eigenvalue(const SymMatrix& m);
double max_eigenvalue(const SymMatrix& m);

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
double spectral_norm(const SymMatrix& m);

/// Lower-triangular Cholesky factor of a positive definite matrix.
/// Throws NotPositiveSemidefinite when a pivot is not strictly positive.
Eigen::MatrixXd cholesky_lower(const SymMatrix& m);

/// Inverse of a symmetric positive definite matrix (via Cholesky).
SymMatrix spd_inverse(const SymMatrix& m);

}  // namespace riskmpc
