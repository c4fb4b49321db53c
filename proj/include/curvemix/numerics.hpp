#ifndef CURVEMIX_NUMERICS_HPP
#define CURVEMIX_NUMERICS_HPP

#include <Eigen/Dense>

#include "curvemix/errors.hpp"

namespace curvemix {

/// Cholesky factorization of a symmetric positive-definite matrix,
/// possibly regularized with a recorded diagonal jitter.
struct SpdFactorization {
    Eigen::MatrixXd lower_factor;  // L with L L^T = A + jitter_used * I
    double jitter_used = 0.0;

    Eigen::Index dim() const { return lower_factor.rows(); }
};

/// Factorize a symmetric matrix, escalating jitter geometrically from
/// 1e-10 * mean(diag) up to max_jitter when the plain factorization fails.
/// Throws NotPositiveDefinite if it still fails at max_jitter.
SpdFactorization cholesky_factor(const Eigen::MatrixXd& a, double max_jitter);

/// Solve (L L^T) X = B via two triangular solves. Never forms an inverse.
Eigen::MatrixXd solve_spd(const SpdFactorization& fact, const Eigen::MatrixXd& b);
Eigen::VectorXd solve_spd(const SpdFactorization& fact, const Eigen::VectorXd& b);

/// log |L L^T| = 2 * sum(log diag(L)).
double log_det(const SpdFactorization& fact);

/// Solve L X = B (forward substitution), in place.
void solve_lower_in_place(const SpdFactorization& fact, Eigen::MatrixXd& b);
Eigen::VectorXd solve_lower(const SpdFactorization& fact, const Eigen::VectorXd& b);
/// Solve L^T x = b (back substitution).
Eigen::VectorXd solve_lower_transpose(const SpdFactorization& fact, const Eigen::VectorXd& b);

/// max(v) + log sum exp(v - max(v)); finite whenever one entry is finite.
double log_sum_exp(const Eigen::VectorXd& v);

}  // namespace curvemix

#endif
