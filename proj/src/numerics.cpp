#include "curvemix/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace curvemix {

namespace {

void check_square_symmetric(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) {
        std::ostringstream os;
        os << "cholesky_factor: matrix is " << a.rows() << "x" << a.cols() << ", not square";
        throw DimensionMismatch(os.str());
    }
    if (a.rows() == 0) return;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale) {
        std::ostringstream os;
        os << "cholesky_factor: matrix not symmetric (relative asymmetry " << asym / scale << ")";
        throw NotPositiveDefinite(os.str());
    }
}

}  // namespace

SpdFactorization cholesky_factor(const Eigen::MatrixXd& a, double max_jitter) {
    check_square_symmetric(a);
    const Eigen::Index n = a.rows();
    SpdFactorization out;
    if (n == 0) {
        out.lower_factor.resize(0, 0);
        return out;
    }

    const double mean_diag = a.diagonal().mean();
    double jitter = 0.0;
    for (;;) {
        Eigen::MatrixXd work = a;
        if (jitter > 0.0) work.diagonal().array() += jitter;
        Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(work);
        if (llt.info() == Eigen::Success && (work.diagonal().array() > 0.0).all()) {
            out.lower_factor = work.triangularView<Eigen::Lower>();
            out.jitter_used = jitter;
            return out;
        }
        if (jitter == 0.0) {
            jitter = 1e-10 * std::max(mean_diag, std::numeric_limits<double>::min());
            if (!(jitter > 0.0)) jitter = 1e-10;
        } else {
            jitter *= 10.0;
        }
        if (jitter > max_jitter) {
            std::ostringstream os;
            os << "matrix of size " << n << " not positive definite (jitter exhausted at "
               << max_jitter << ")";
            throw NotPositiveDefinite(os.str());
        }
    }
}

Eigen::MatrixXd solve_spd(const SpdFactorization& fact, const Eigen::MatrixXd& b) {
    if (fact.dim() != b.rows()) {
        throw DimensionMismatch("solve_spd: rhs has " + std::to_string(b.rows()) +
                                " rows, factorization has dimension " + std::to_string(fact.dim()));
    }
    Eigen::MatrixXd x = b;
    fact.lower_factor.triangularView<Eigen::Lower>().solveInPlace(x);
    fact.lower_factor.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

Eigen::VectorXd solve_spd(const SpdFactorization& fact, const Eigen::VectorXd& b) {
    if (fact.dim() != b.size()) {
        throw DimensionMismatch("solve_spd: rhs has " + std::to_string(b.size()) +
                                " entries, factorization has dimension " + std::to_string(fact.dim()));
    }
    Eigen::VectorXd x = b;
    fact.lower_factor.triangularView<Eigen::Lower>().solveInPlace(x);
    fact.lower_factor.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

double log_det(const SpdFactorization& fact) {
    return 2.0 * fact.lower_factor.diagonal().array().log().sum();
}

void solve_lower_in_place(const SpdFactorization& fact, Eigen::MatrixXd& b) {
    if (fact.dim() != b.rows()) {
        throw DimensionMismatch("solve_lower: dimension mismatch");
    }
    fact.lower_factor.triangularView<Eigen::Lower>().solveInPlace(b);
}

Eigen::VectorXd solve_lower(const SpdFactorization& fact, const Eigen::VectorXd& b) {
    if (fact.dim() != b.size()) {
        throw DimensionMismatch("solve_lower: dimension mismatch");
    }
    Eigen::VectorXd x = b;
    fact.lower_factor.triangularView<Eigen::Lower>().solveInPlace(x);
    return x;
}

Eigen::VectorXd solve_lower_transpose(const SpdFactorization& fact, const Eigen::VectorXd& b) {
    if (fact.dim() != b.size()) {
        throw DimensionMismatch("solve_lower_transpose: dimension mismatch");
    }
    Eigen::VectorXd x = b;
    fact.lower_factor.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

double log_sum_exp(const Eigen::VectorXd& v) {
    if (v.size() == 0) throw EmptyInput("log_sum_exp: empty input");
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;  // all -inf (or a nan/inf propagates)
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

}  // namespace curvemix
