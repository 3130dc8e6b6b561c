#include "riskmpc/matlib.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace riskmpc {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) {
        throw InvalidMatrix(std::string(what) + ": non-finite entries");
    }
}

}  // namespace

SymMatrix::SymMatrix(const Eigen::MatrixXd& m) {
    if (m.rows() < 1 || m.rows() != m.cols()) {
        throw InvalidMatrix("SymMatrix: matrix must be square with dim >= 1");
    }
    require_finite(m, "SymMatrix");
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
        throw InvalidMatrix("SymMatrix: asymmetry " + std::to_string(asym) +
                            " exceeds tolerance");
    }
    m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(int dim) {
    return SymMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

SymMatrix SymMatrix::diagonal(const Eigen::VectorXd& d) {
    return SymMatrix(Eigen::MatrixXd(d.asDiagonal()));
}

SymMatrix SymMatrix::zero(int dim) {
    return SymMatrix(Eigen::MatrixXd::Zero(dim, dim));
}

EigResult sym_eig(const SymMatrix& m) {
    require_finite(m.mat(), "sym_eig");
    const int n = m.dim();
    Eigen::MatrixXd a = m.mat();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

    const double fro = a.norm();
    const double tol = 1e-12 * fro;

    auto off_mass = [&]() {
        double s = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        }
        return std::sqrt(s);
    };

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps && off_mass() > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t =
                    (theta >= 0.0 ? 1.0 : -1.0) /
                    (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return a(i, i) < a(j, j); });

    EigResult r;
    r.values.resize(n);
    r.vectors.resize(n, n);
    for (int i = 0; i < n; ++i) {
        r.values(i) = a(order[i], order[i]);
        r.vectors.col(i) = v.col(order[i]);
    }
    return r;
}

SymMatrix psd_sqrt(const SymMatrix& m) {
    EigResult e = sym_eig(m);
    if (e.values.minCoeff() < -1e-10) {
        throw NotPositiveSemidefinite(
            "psd_sqrt: min eigenvalue " + std::to_string(e.values.minCoeff()));
    }
    Eigen::VectorXd root = e.values.cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd s =
        e.vectors * root.asDiagonal() * e.vectors.transpose();
    return SymMatrix(0.5 * (s + s.transpose()));
}

bool is_neg_def(const SymMatrix& m, double margin) {
    if (margin < 0.0) throw InvalidMatrix("is_neg_def: margin must be >= 0");
    return max_eigenvalue(m) < -margin;
}

bool is_pos_def(const SymMatrix& m, double margin) {
    return min_eigenvalue(m) > margin;
}

double min_eigenvalue(const SymMatrix& m) { return sym_eig(m).values.minCoeff(); }

double max_eigenvalue(const SymMatrix& m) { return sym_eig(m).values.maxCoeff(); }

double spectral_norm(const SymMatrix& m) {
    const Eigen::VectorXd vals = sym_eig(m).values;
    return std::max(std::abs(vals.minCoeff()), std::abs(vals.maxCoeff()));
}

Eigen::MatrixXd cholesky_lower(const SymMatrix& m) {
    const int n = m.dim();
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = m(i, j);
            for (int k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
            if (i == j) {
                if (sum <= 0.0) {
                    throw NotPositiveSemidefinite(
                        "cholesky_lower: non-positive pivot at index " +
                        std::to_string(i));
                }
                l(i, i) = std::sqrt(sum);
            } else {
                l(i, j) = sum / l(j, j);
            }
        }
    }
    return l;
}

SymMatrix spd_inverse(const SymMatrix& m) {
    const int n = m.dim();
    const Eigen::MatrixXd l = cholesky_lower(m);
    // inv(M) = inv(L)^T inv(L); solve L X = I, then L^T Y = X.
    Eigen::MatrixXd x = Eigen::MatrixXd::Identity(n, n);
    l.triangularView<Eigen::Lower>().solveInPlace(x);
    l.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return SymMatrix(0.5 * (x + x.transpose()));
}

}  // namespace riskmpc
