#ifndef CURVEMIX_OPTIMIZE_HPP
#define CURVEMIX_OPTIMIZE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

namespace curvemix {

/// Knobs for the quasi-Newton fits, surfaced through the CLI and configs.
struct OptimizerConfig {
    int restarts = 5;
    int max_iter = 60;
    double tolerance = 1e-6;  // relative change of the objective
    std::uint64_t seed = 0;
};

struct OptimizeResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    std::vector<double> trace;  // accepted objective values, initial point first
    int iterations = 0;
    bool improved = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Central finite-difference gradient with per-coordinate steps
/// h_j = cbrt(eps) * max(1, |x_j|). Non-finite trial values fall back to
/// one-sided differences (or zero if both sides fail).
Eigen::VectorXd central_difference_gradient(const Objective& f, const Eigen::VectorXd& x,
                                            double f0);

/// L-BFGS with Armijo backtracking. Objective may return +inf/NaN to reject
/// a region; the line search backs off. Deterministic, no internal RNG.
OptimizeResult minimize_lbfgs(const Objective& f, const Eigen::VectorXd& x0, int max_iter,
                              double tolerance);

}  // namespace curvemix

#endif
