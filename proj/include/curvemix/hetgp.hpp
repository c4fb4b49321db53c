#ifndef CURVEMIX_HETGP_HPP
#define CURVEMIX_HETGP_HPP

#include <Eigen/Dense>
#include <vector>

#include "curvemix/gp.hpp"

namespace curvemix {

/// GP over log-noise levels g(x) with constant mean; r(x) = exp(posterior mean).
struct NoiseProcess {
    double mean_level = 0.0;  // mu_g, log-variance units
    SquaredExponentialKernel kernel;
    Eigen::VectorXd train_x;
    Eigen::VectorXd train_g;
    double fit_noise_std = 0.15;  // fixed regression noise on the g-targets
    SpdFactorization chol;
    Eigen::VectorXd weights;
};

/// Regression with an input-dependent noise diagonal estimated by a second GP.
struct HetGpModel {
    GpPrior prior;  // f-process hyperparameters (noise_std is the homoscedastic sigma it started from)
    Eigen::VectorXd train_x;
    Eigen::VectorXd train_y;
    Eigen::VectorXd noise_var;  // r(x_i) at the training inputs
    SpdFactorization chol;      // chol(K_xx + diag(noise_var))
    Eigen::VectorXd weights;
    NoiseProcess noise_process;
    std::vector<double> history;  // joint log likelihood per completed outer iteration
};

struct HetGpConfig {
    int noise_samples = 100;  // s
    int max_outer = 10;
    double tolerance = 1e-4;  // relative change of the joint log likelihood
    std::uint64_t seed = 0;
    OptimizerConfig opt;               // f-process fit
    OptimizerConfig noise_opt{1, 40, 1e-6, 0};  // g-process fits (warm-started)
};

/// Monte-Carlo estimate of the per-point log noise variance:
///   g'_i = log(max(1e-8, mean_j 0.5 (y_i - ytilde_j)^2)),
/// with ytilde_j ~ N(pred_mean_i, pred_var_i).
Eigen::VectorXd empirical_log_noise(const Eigen::VectorXd& pred_mean,
                                    const Eigen::VectorXd& pred_var, const Eigen::VectorXd& y,
                                    int s, std::uint64_t seed);

/// Constant-mean, SE-kernel GP fit on (x, g') with a fixed regression noise.
NoiseProcess fit_noise_process(const Eigen::VectorXd& x, const Eigen::VectorXd& g_prime,
                               const OptimizerConfig& opt, double fixed_noise_std = 0.15);

/// r(x*) = exp(posterior predictive mean of g); strictly positive.
Eigen::VectorXd predict_noise(const NoiseProcess& np, const Eigen::VectorXd& query_x);

/// Build the heteroscedastic model for given f-hyperparameters and noise diagonal.
HetGpModel make_hetgp_model(const GpPrior& prior, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& noise_var,
                            NoiseProcess np);

/// Alternate most-likely noise estimation and refitting of the noise process,
/// starting from a homoscedastic fit; returns the iterate with the best joint
/// log likelihood (the homoscedastic fit is a candidate).
HetGpModel fit_hetgp(const Dataset& data, const GpPrior& prior_init, const HetGpConfig& config);

PredictiveDistribution hetgp_predict(const HetGpModel& model, const Eigen::VectorXd& query_x,
                                     bool include_noise);

double joint_log_likelihood(const HetGpModel& model, const Dataset& data);

}  // namespace curvemix

#endif
