#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "gmmcluster/common.hpp"

namespace gmmcluster {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrized(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

inline double sym_deviation(const MatrixXd& a) {
    return (a - a.transpose()).cwiseAbs().maxCoeff();
}

/// Eigendecomposition of a symmetric matrix; values ascending.
struct SymEig {
    VectorXd values;
    MatrixXd vectors;
};

inline SymEig sym_eig(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(a));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("sym_eig: eigensolver failed to converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Matrix power of a symmetric positive definite matrix via eigenvalues.
/// Eigenvalues below `floor` are clamped before the power is applied.
inline MatrixXd spd_power(const MatrixXd& a, double p, double floor = 0.0) {
    SymEig e = sym_eig(a);
    VectorXd w = e.values;
    for (int i = 0; i < w.size(); ++i) {
        double v = std::max(w[i], floor);
        if (v <= 0.0 && p < 0.0)
            throw std::invalid_argument("spd_power: nonpositive eigenvalue with negative power");
        w[i] = std::pow(v, p);
    }
    return e.vectors * w.asDiagonal() * e.vectors.transpose();
}

inline MatrixXd spd_sqrt(const MatrixXd& a) { return spd_power(a, 0.5); }
inline MatrixXd spd_inv_sqrt(const MatrixXd& a) { return spd_power(a, -0.5); }

inline double condition_number(const MatrixXd& a) {
    SymEig e = sym_eig(a);
    const double lo = e.values.minCoeff(), hi = e.values.maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

/// Modified Gram-Schmidt append: orthogonalize w against the columns of q
/// (two passes) and append the normalized residual as a new column when its
/// norm exceeds `tol`.  Returns true when a column was appended.
inline bool mgs_append(MatrixXd& q, VectorXd w, double tol = 1e-8) {
    for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j < q.cols(); ++j)
            w -= q.col(j).dot(w) * q.col(j);
    const double nrm = w.norm();
    if (nrm < tol) return false;
    q.conservativeResize(w.size(), q.cols() + 1);
    q.col(q.cols() - 1) = w / nrm;
    return true;
}

/// Random unit vector.
inline VectorXd random_unit(int d, Rng& rng) {
    VectorXd v(d);
    double n2;
    do {
        for (int i = 0; i < d; ++i) v[i] = rng.normal();
        n2 = v.squaredNorm();
    } while (n2 < 1e-300);
    return v / std::sqrt(n2);
}

}  // namespace gmmcluster
