#include "curvemix/hetgp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace curvemix {

namespace {

constexpr double kVarFloor = 1e-8;

double jitter_budget(const Eigen::MatrixXd& a) {
    const double mean_diag = a.rows() > 0 ? a.diagonal().mean() : 1.0;
    return 1e-4 * std::max(mean_diag, 1e-12);
}

/// Per-point predictive mean/variance (with noise) at the training inputs.
void train_predictive(const HetGpModel& m, Eigen::VectorXd& mean, Eigen::VectorXd& var) {
    Eigen::MatrixXd k = gram_matrix(m.train_x, m.train_x, m.prior.kernel);
    const Eigen::VectorXd k_diag = k.diagonal();
    mean = mean_vector(m.train_x, m.prior.mean) + k * m.weights;
    solve_lower_in_place(m.chol, k);
    var = (k_diag - k.colwise().squaredNorm().transpose()).cwiseMax(0.0) + m.noise_var;
}

}  // namespace

Eigen::VectorXd empirical_log_noise(const Eigen::VectorXd& pred_mean,
                                    const Eigen::VectorXd& pred_var, const Eigen::VectorXd& y,
                                    int s, std::uint64_t seed) {
    if (pred_mean.size() != y.size() || pred_var.size() != y.size()) {
        throw DimensionMismatch("empirical_log_noise: length mismatch");
    }
    if (s < 1) throw InsufficientData("empirical_log_noise: s must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd g(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double sd = std::sqrt(std::max(pred_var[i], 0.0));
        double acc = 0.0;
        for (int j = 0; j < s; ++j) {
            const double ytilde = pred_mean[i] + sd * gauss(rng);
            const double d = y[i] - ytilde;
            acc += 0.5 * d * d;
        }
        g[i] = std::log(std::max(kVarFloor, acc / static_cast<double>(s)));
    }
    return g;
}

NoiseProcess fit_noise_process(const Eigen::VectorXd& x, const Eigen::VectorXd& g_prime,
                               const OptimizerConfig& opt, double fixed_noise_std) {
    if (x.size() != g_prime.size()) throw DimensionMismatch("fit_noise_process: length mismatch");
    if (x.size() < 2) throw InsufficientData("fit_noise_process: need at least two points");

    const HyperBounds bounds;
    const double g_mean = g_prime.mean();
    const double g_std = std::sqrt((g_prime.array() - g_mean).square().sum() /
                                   static_cast<double>(g_prime.size()));
    const double span = std::max(x.maxCoeff() - x.minCoeff(), 1e-6);
    const double noise2 = fixed_noise_std * fixed_noise_std;
    constexpr double kLog2Pi = 1.8378770664093454836;

    // Internal layout: [mu_g (linear), sigma_g, l_g] with the regression noise fixed.
    const ParamTransform t_sig = ParamTransform::log_bounded(bounds.process_std_lo, bounds.process_std_hi);
    const ParamTransform t_len = ParamTransform::log_bounded(bounds.length_scale_lo, bounds.length_scale_hi);

    auto objective = [&](const Eigen::VectorXd& u) -> double {
        const double mu = u[0];
        const SquaredExponentialKernel k{t_sig.to_natural(u[1]), t_len.to_natural(u[2])};
        try {
            Eigen::MatrixXd a = gram_matrix(x, x, KernelSpec{k});
            a.diagonal().array() += noise2;
            const SpdFactorization fact = cholesky_factor(a, jitter_budget(a));
            const Eigen::VectorXd v = solve_lower(fact, Eigen::VectorXd(g_prime.array() - mu));
            return 0.5 * v.squaredNorm() + fact.lower_factor.diagonal().array().log().sum() +
                   0.5 * kLog2Pi * static_cast<double>(x.size());
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u11(-1.0, 1.0);
    bool have = false;
    double best_value = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_u;
    const int restarts = std::max(1, opt.restarts);
    for (int r = 0; r < restarts; ++r) {
        Eigen::VectorXd u0(3);
        double sig0 = std::max(g_std, 1e-2);
        double len0 = span / 5.0;
        double mu0 = g_mean;
        if (r > 0) {
            sig0 *= std::exp(u11(rng));
            len0 *= std::exp(u11(rng));
            mu0 += u11(rng) * std::max(g_std, 1e-2);
        }
        u0 << mu0, t_sig.to_internal(sig0), t_len.to_internal(len0);
        const OptimizeResult res = minimize_lbfgs(objective, u0, opt.max_iter, opt.tolerance);
        if (std::isfinite(res.value) && res.value < best_value) {
            best_value = res.value;
            best_u = res.x;
            have = true;
        }
    }
    if (!have) throw OptimizationFailed("fit_noise_process: all restarts failed");

    NoiseProcess np;
    np.mean_level = best_u[0];
    np.kernel = SquaredExponentialKernel{t_sig.to_natural(best_u[1]), t_len.to_natural(best_u[2])};
    np.train_x = x;
    np.train_g = g_prime;
    np.fit_noise_std = fixed_noise_std;
    Eigen::MatrixXd a = gram_matrix(x, x, KernelSpec{np.kernel});
    a.diagonal().array() += noise2;
    np.chol = cholesky_factor(a, jitter_budget(a));
    np.weights = solve_spd(np.chol, Eigen::VectorXd(g_prime.array() - np.mean_level));
    return np;
}

Eigen::VectorXd predict_noise(const NoiseProcess& np, const Eigen::VectorXd& query_x) {
    if (np.train_x.size() == 0) {
        return Eigen::VectorXd::Constant(query_x.size(), std::exp(np.mean_level));
    }
    const KernelSpec kernel = np.kernel;
    const Eigen::MatrixXd k_xq = gram_matrix(np.train_x, query_x, kernel);
    const Eigen::VectorXd g_mean =
        Eigen::VectorXd::Constant(query_x.size(), np.mean_level) + k_xq.transpose() * np.weights;
    return g_mean.array().exp();
}

HetGpModel make_hetgp_model(const GpPrior& prior, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& noise_var,
                            NoiseProcess np) {
    if (x.size() != y.size() || x.size() != noise_var.size()) {
        throw DimensionMismatch("make_hetgp_model: length mismatch");
    }
    if ((noise_var.array() <= 0.0).any()) {
        throw InvalidHyperparameter("make_hetgp_model: noise variances must be positive");
    }
    HetGpModel m;
    m.prior = prior;
    m.train_x = x;
    m.train_y = y;
    m.noise_var = noise_var;
    m.noise_process = std::move(np);
    Eigen::MatrixXd a = gram_matrix(x, x, prior.kernel);
    a.diagonal() += noise_var;
    m.chol = cholesky_factor(a, jitter_budget(a));
    m.weights = solve_spd(m.chol, Eigen::VectorXd(y - mean_vector(x, prior.mean)));
    return m;
}

HetGpModel fit_hetgp(const Dataset& data, const GpPrior& prior_init, const HetGpConfig& config) {
    if (data.size() < 10) throw InsufficientData("fit_hetgp: need at least 10 observations");

    const GpFitResult g1 = fit_gp_detailed(data, prior_init, config.opt);
    const double sigma2 = g1.model.prior.noise_std * g1.model.prior.noise_std;

    // The homoscedastic fit is the first candidate, represented exactly as a
    // constant noise process.
    NoiseProcess const_np;
    const_np.mean_level = std::log(sigma2);
    const_np.kernel = SquaredExponentialKernel{1e-3, 1.0};
    HetGpModel best = make_hetgp_model(g1.model.prior, data.x, data.y,
                                       Eigen::VectorXd::Constant(data.size(), sigma2), const_np);
    double best_jll = joint_log_likelihood(best, data);
    best.history.push_back(best_jll);

    HetGpModel current = best;
    double prev_jll = best_jll;
    std::vector<double> history = best.history;
    const double fixed_g_noise = std::max(0.05, std::sqrt(2.0 / std::max(config.noise_samples, 2)));

    for (int outer = 1; outer <= config.max_outer; ++outer) {
        Eigen::VectorXd pmean, pvar;
        train_predictive(current, pmean, pvar);
        const Eigen::VectorXd g_prime =
            empirical_log_noise(pmean, pvar, data.y, config.noise_samples,
                                config.seed + static_cast<std::uint64_t>(outer));

        OptimizerConfig nopt = config.noise_opt;
        nopt.seed = config.seed + 1000 + static_cast<std::uint64_t>(outer);
        NoiseProcess np = fit_noise_process(data.x, g_prime, nopt, fixed_g_noise);

        const Eigen::VectorXd r = predict_noise(np, data.x).cwiseMax(kVarFloor);
        HetGpModel g3 = make_hetgp_model(current.prior, data.x, data.y, r, std::move(np));
        const double jll = joint_log_likelihood(g3, data);
        history.push_back(jll);

        if (jll > best_jll) {
            best_jll = jll;
            best = g3;
        }
        const double delta = std::abs(jll - prev_jll);
        current = std::move(g3);
        prev_jll = jll;
        if (delta <= config.tolerance * std::max(1.0, std::abs(prev_jll))) break;
    }
    best.history = std::move(history);
    return best;
}

PredictiveDistribution hetgp_predict(const HetGpModel& model, const Eigen::VectorXd& query_x,
                                     bool include_noise) {
    PredictiveDistribution out;
    const Eigen::VectorXd m_q = mean_vector(query_x, model.prior.mean);
    const Eigen::VectorXd k_diag = gram_diagonal(query_x, model.prior.kernel);
    Eigen::MatrixXd k_xq = gram_matrix(model.train_x, query_x, model.prior.kernel);
    out.mean = m_q + k_xq.transpose() * model.weights;
    solve_lower_in_place(model.chol, k_xq);
    out.variance = (k_diag - k_xq.colwise().squaredNorm().transpose())
                       .cwiseMax(1e-15 * k_diag.maxCoeff());
    if (include_noise) {
        out.variance += predict_noise(model.noise_process, query_x).cwiseMax(kVarFloor);
    }
    return out;
}

double joint_log_likelihood(const HetGpModel& model, const Dataset& data) {
    const PredictiveDistribution pred = hetgp_predict(model, data.x, /*include_noise=*/true);
    return normal_log_density_sum(data.y, pred.mean, pred.variance);
}

}  // namespace curvemix
