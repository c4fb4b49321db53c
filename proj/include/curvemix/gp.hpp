#ifndef CURVEMIX_GP_HPP
#define CURVEMIX_GP_HPP

#include <Eigen/Dense>
#include <vector>

#include "curvemix/data.hpp"
#include "curvemix/model_functions.hpp"
#include "curvemix/numerics.hpp"
#include "curvemix/optimize.hpp"

namespace curvemix {

struct GpPrior {
    MeanSpec mean = ZeroMean{};
    KernelSpec kernel = SquaredExponentialKernel{};
    double noise_std = 0.1;  // sigma > 0
};

/// A fitted (or fixed-hyperparameter) Gaussian-process regression with the
/// training factorization and weights cached for prediction.
struct GpModel {
    GpPrior prior;
    Eigen::VectorXd train_x;
    Eigen::VectorXd train_y;
    SpdFactorization chol;    // chol(K_xx + sigma^2 I)
    Eigen::VectorXd weights;  // (K_xx + sigma^2 I)^{-1} (y - m)
};

struct PredictiveDistribution {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    Eigen::MatrixXd covariance;  // populated only when requested

    bool has_covariance() const { return covariance.size() > 0; }
};

/// Negative log marginal likelihood
///   0.5 (y-m)^T (K+R)^{-1} (y-m) + 0.5 log|K+R| + N/2 log 2pi.
double nlml(const GpPrior& prior, const Dataset& data);

/// Build the cached model for fixed hyperparameters (no optimization).
GpModel make_gp_model(const GpPrior& prior, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Data-driven initialization: sigma_f = std(y), l = span(x)/10,
/// sigma = 0.1 std(y); soft-clip placed over the data.
GpPrior default_gp_prior(const Dataset& data, bool soft_clip_mean = true);

/// Type-II maximum likelihood via multi-restart L-BFGS on central-difference
/// gradients. Restart 0 starts at prior_init; the rest draw from log-uniform
/// ranges seeded by opt.seed.
GpModel fit_gp(const Dataset& data, const GpPrior& prior_init, const OptimizerConfig& opt);

/// Result trace variant used by tests and the heteroscedastic loop.
struct GpFitResult {
    GpModel model;
    double nlml = 0.0;
    std::vector<double> trace;  // accepted objective values of the winning restart
};
GpFitResult fit_gp_detailed(const Dataset& data, const GpPrior& prior_init,
                            const OptimizerConfig& opt);

PredictiveDistribution gp_predict(const GpModel& model, const Eigen::VectorXd& query_x,
                                  bool include_noise, bool want_covariance = false);

/// Sum over observations of the log predictive density (with noise).
double joint_log_likelihood(const GpModel& model, const Dataset& data);

/// Log density of independent normals: sum_i log N(y_i | mu_i, var_i).
double normal_log_density_sum(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& var);

}  // namespace curvemix

#endif
