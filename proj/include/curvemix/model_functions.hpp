#ifndef CURVEMIX_MODEL_FUNCTIONS_HPP
#define CURVEMIX_MODEL_FUNCTIONS_HPP

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "curvemix/errors.hpp"

namespace curvemix {

/// Smoothly clipped ramp used as a prior mean for power curves:
///   m(x) = alpha1/beta * log[(1 + e^{beta v}) / (1 + e^{beta (v-1)})],
///   v = alpha2 * x + alpha3.
/// Asymptotes: 0 as v -> -inf, alpha1 as v -> +inf; beta sharpens the corners.
struct SoftClipMean {
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double alpha3 = 0.0;
    double beta = 10.0;
};

struct SquaredExponentialKernel {
    double process_std = 1.0;   // sigma_f
    double length_scale = 1.0;  // l
};

struct ConstantKernel {
    double level = 1.0;  // c >= 0
};

struct ZeroMean {};
struct ConstantMean {
    double value = 0.0;
};

using MeanSpec = std::variant<ZeroMean, ConstantMean, SoftClipMean>;
using KernelSpec = std::variant<SquaredExponentialKernel, ConstantKernel>;

/// Evaluate the soft-clip mean with the overflow-safe softplus form.
double soft_clip(double x, const SoftClipMean& params);

double se_kernel(double xi, double xj, const SquaredExponentialKernel& params);
double constant_kernel(double xi, double xj, const ConstantKernel& params);

double kernel_value(double xi, double xj, const KernelSpec& kernel);
double mean_value(double x, const MeanSpec& mean);

/// Pairwise kernel evaluations; gram_matrix(x, x, k) is symmetric PSD.
Eigen::MatrixXd gram_matrix(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                            const KernelSpec& kernel);
/// Diagonal of gram_matrix(x, x, k) without forming the matrix.
Eigen::VectorXd gram_diagonal(const Eigen::VectorXd& x, const KernelSpec& kernel);

Eigen::VectorXd mean_vector(const Eigen::VectorXd& x, const MeanSpec& mean);

// --- hyperparameter packing -------------------------------------------------
//
// Positive hyperparameters are optimized through a logistic transform in
// log-space, so the optimizer sees an unconstrained vector while bounds are
// honored exactly.

struct ParamTransform {
    enum class Kind { Linear, LogBounded };
    Kind kind = Kind::Linear;
    double lo = 0.0;
    double hi = 0.0;

    static ParamTransform linear() { return {Kind::Linear, 0.0, 0.0}; }
    static ParamTransform log_bounded(double lo, double hi) { return {Kind::LogBounded, lo, hi}; }

    double to_internal(double natural) const;
    double to_natural(double internal) const;
};

/// Default optimization bounds for positive hyperparameters (normalized units).
struct HyperBounds {
    double length_scale_lo = 1e-3, length_scale_hi = 1e2;
    double noise_std_lo = 1e-4, noise_std_hi = 1e1;
    double process_std_lo = 1e-6, process_std_hi = 1e3;
    double beta_lo = 1e-2, beta_hi = 1e4;
    double level_lo = 1e-10, level_hi = 1e3;
};

struct PackedParams {
    std::vector<double> natural;            // values in model space
    std::vector<ParamTransform> transforms;
    std::vector<bool> affects_kernel;       // true if changing the value changes the gram matrix
};

void append_mean_params(const MeanSpec& mean, PackedParams& out);
void append_kernel_params(const KernelSpec& kernel, const HyperBounds& bounds, PackedParams& out);
int mean_param_count(const MeanSpec& mean);
int kernel_param_count(const KernelSpec& kernel);
MeanSpec mean_with_params(const MeanSpec& proto, const double* natural);
KernelSpec kernel_with_params(const KernelSpec& proto, const double* natural);

}  // namespace curvemix

#endif
