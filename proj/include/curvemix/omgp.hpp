#ifndef CURVEMIX_OMGP_HPP
#define CURVEMIX_OMGP_HPP

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "curvemix/gp.hpp"
#include "curvemix/hetgp.hpp"

namespace curvemix {

/// Mixture prior: K independent GP components over the same inputs, a shared
/// observation noise, and categorical priors over the component indicators.
struct OmgpPrior {
    int k_components = 1;
    std::vector<std::pair<MeanSpec, KernelSpec>> component_priors;
    double shared_noise_std = 0.1;
    Eigen::MatrixXd train_prior_pi;  // N x K row-stochastic; empty means uniform
    Eigen::VectorXd query_prior_pi;  // length K; empty means uniform
};

/// Variational posterior over the indicator matrix.
struct Responsibilities {
    Eigen::MatrixXd pi_hat;  // N x K, rows sum to 1
};

struct ComponentPosterior {
    Eigen::VectorXd post_mean;  // mu^(k), length N
    Eigen::VectorXd post_var;   // diag Sigma^(k), length N
    Eigen::VectorXd b_diag;     // resp[:,k] / sigma_ik^2, length N
};

struct OmgpConfig {
    int max_inner = 50;
    int max_em = 30;
    double inner_tol = 1e-6;  // relative bound change, mean-field loop
    double em_tol = 1e-5;     // relative bound change across EM rounds
    std::uint64_t seed = 0;
    int het_min_points = 10;
    double resp_floor = 1e-12;     // applied before forming B^{1/2}
    double prune_threshold = 0.0;  // drop rows with resp <= threshold from the
                                   // per-component factorization; 0 keeps all
    int het_noise_samples = 100;
    OptimizerConfig mstep_opt{1, 40, 1e-6, 0};
    OptimizerConfig noise_opt{1, 30, 1e-6, 0};
};

struct OmgpModel {
    OmgpPrior prior;
    Eigen::VectorXd train_x;
    Eigen::VectorXd train_y;
    Eigen::MatrixXd resp;       // Pi-hat
    Eigen::MatrixXd noise_var;  // sigma_ik^2, N x K (constant columns unless heteroscedastic)
    std::vector<ComponentPosterior> components;
    std::vector<std::optional<NoiseProcess>> noise_processes;  // empty vector = homoscedastic
    OmgpConfig config;

    double bound = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> estep_traces;  // bound after each inner iteration, per e_step
    std::vector<double> em_bounds;                  // bound after each EM round

    /// Cached per-component prediction state (rebuilt on load).
    struct ComponentState {
        std::vector<Eigen::Index> active;
        Eigen::VectorXd bs;      // sqrt(b) on the active set
        SpdFactorization cholA;  // chol(I + bs bs^T .* K_SS)
        Eigen::VectorXd alpha;   // B^{1/2} A^{-1} B^{1/2} (y - m) on the active set
        double t_term = 0.0;
    };
    std::vector<ComponentState> states;

    int k() const { return prior.k_components; }
    Eigen::Index n() const { return train_x.size(); }
    bool heteroscedastic() const { return !noise_processes.empty(); }
};

/// (K-1) soft-clip components with staggered asymptote inits plus one
/// constant-kernel zero-mean component; K = 1 is a single soft-clip GP.
OmgpPrior default_omgp_prior(int k, const Dataset& data);

/// Build a model with seeded perturbed-uniform responsibilities and the
/// matching component posteriors and bound.
OmgpModel init_omgp(const Dataset& data, const OmgpPrior& prior, const OmgpConfig& config);

/// q(Z) update: pi_hat[i,k] proportional to Pi[i,k] exp(a_ik), rows normalized
/// in log space.
Responsibilities update_responsibilities(const OmgpModel& state);

/// q(f) update through the B^{1/2}-symmetrized identity; never forms K^{-1}.
std::vector<ComponentPosterior> update_component_posteriors(const OmgpModel& state,
                                                            const Responsibilities& resp);

/// Marginalized variational bound on log p(y | x).
double corrected_lower_bound(const OmgpModel& state);

/// Alternate the two mean-field updates until the bound converges.
OmgpModel e_step(OmgpModel state);

/// Optimize component hyperparameters (and the shared noise, when
/// homoscedastic) with the responsibilities frozen; never returns a state
/// with a lower bound than the input.
OmgpModel m_step(OmgpModel state, const OptimizerConfig& opt);

OmgpModel fit_omgp(const Dataset& data, const OmgpPrior& prior, const OmgpConfig& config);

struct OmgpPredictions {
    std::vector<PredictiveDistribution> components;  // per-component, noise included
    Eigen::VectorXd weights;                         // query prior over components
};
OmgpPredictions omgp_predict(const OmgpModel& model, const Eigen::VectorXd& query_x);

/// MAP component per training point; ties break toward the lowest index.
Eigen::VectorXi classify_train(const OmgpModel& model);

struct PosteriorClass {
    Eigen::VectorXd probabilities;  // simplex over K
    int map_component = 0;
};
PosteriorClass classify_posterior(const OmgpModel& model, double x_star, double y_star);

/// Batched classify_posterior against precomputed component predictives.
PosteriorClass classify_posterior_from(const OmgpPredictions& pred, const Eigen::VectorXd& weights,
                                       Eigen::Index i, double y_star);

/// Fit one noise process per component on its MAP-labelled subset, rebuild
/// the responsibility-weighted noise diagonals over all N points, and re-run
/// the mean-field updates. Components with fewer than het_min_points MAP
/// points keep the shared noise (with a warning).
OmgpModel heteroscedastic_update(OmgpModel model, const OmgpConfig& config);

/// Full posterior covariance of one component, materialized on demand.
Eigen::MatrixXd component_posterior_cov(const OmgpModel& model, int k);

/// Recompute factorizations, posteriors, and bound for the stored
/// responsibilities and hyperparameters (used after deserialization).
void refresh_omgp_state(OmgpModel& model);

}  // namespace curvemix

#endif
