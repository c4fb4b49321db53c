#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "curvemix/hetgp.hpp"

using namespace curvemix;

TEST_CASE("empirical_log_noise engages the variance floor for a perfect stub predictive") {
    // A stub that always returns ytilde = y_i: zero predictive variance, zero residual.
    Eigen::VectorXd y(4);
    y << 0.1, -0.5, 2.0, 0.0;
    const Eigen::VectorXd g = empirical_log_noise(y, Eigen::VectorXd::Zero(4), y, 50, 1);
    for (int i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(std::log(1e-8)));
}

TEST_CASE("empirical_log_noise converges to the analytic expectation") {
    // ytilde ~ N(y_i, 2): E[0.5 (y - ytilde)^2] = 0.5 * 2 = 1 -> g ~ log 1 = 0.
    const int n = 10;
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(n, -1, 1);
    const Eigen::VectorXd g =
        empirical_log_noise(y, Eigen::VectorXd::Constant(n, 2.0), y, 100000, 7);
    for (int i = 0; i < n; ++i) CHECK(std::abs(g[i] - 0.0) < 0.05);
}

TEST_CASE("empirical_log_noise accounts for a biased predictive mean") {
    // ytilde ~ N(y_i + 1, 1): E[0.5 (y - ytilde)^2] = 0.5 (1 + 1) = 1.
    const int n = 6;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd g = empirical_log_noise(
        Eigen::VectorXd::Constant(n, 1.0), Eigen::VectorXd::Constant(n, 1.0), y, 100000, 3);
    for (int i = 0; i < n; ++i) CHECK(std::abs(g[i] - std::log(1.0)) < 0.05);
}

TEST_CASE("empirical_log_noise large-sample limit matches log(0.5 ((y-mu)^2 + v))") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    const int n = 8;
    Eigen::VectorXd y(n), mu(n), var(n);
    for (int i = 0; i < n; ++i) {
        y[i] = nd(rng);
        mu[i] = nd(rng);
        var[i] = 0.3 + std::abs(nd(rng));
    }
    const Eigen::VectorXd g = empirical_log_noise(mu, var, y, 100000, 11);
    for (int i = 0; i < n; ++i) {
        const double expected = std::log(0.5 * ((y[i] - mu[i]) * (y[i] - mu[i]) + var[i]));
        CHECK(std::abs(g[i] - expected) < 0.05 * std::max(1.0, std::abs(expected)));
    }
}

TEST_CASE("fit_noise_process recovers a constant level") {
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(40, -2, 2);
    const Eigen::VectorXd g = Eigen::VectorXd::Constant(40, -3.2);
    OptimizerConfig opt;
    opt.restarts = 1;
    opt.max_iter = 60;
    const NoiseProcess np = fit_noise_process(x, g, opt);
    const Eigen::VectorXd pred = predict_noise(np, Eigen::VectorXd::LinSpaced(15, -2, 2));
    for (int i = 0; i < 15; ++i) {
        CHECK(std::abs(std::log(pred[i]) - (-3.2)) < 1e-2);
    }
}

TEST_CASE("fit_noise_process tracks a sinusoidal log-noise profile") {
    const int n = 80;
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, -3, 3);
    Eigen::VectorXd g(n);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (int i = 0; i < n; ++i) g[i] = std::sin(x[i]) + 0.05 * nd(rng);
    OptimizerConfig opt;
    opt.restarts = 2;
    opt.max_iter = 60;
    opt.seed = 2;
    const NoiseProcess np = fit_noise_process(x, g, opt, 0.1);
    const Eigen::VectorXd pred_log = predict_noise(np, x).array().log();

    // Pearson correlation against sin(x).
    Eigen::VectorXd target(n);
    for (int i = 0; i < n; ++i) target[i] = std::sin(x[i]);
    const double mx = pred_log.mean(), my = target.mean();
    const double num = ((pred_log.array() - mx) * (target.array() - my)).sum();
    const double den = std::sqrt((pred_log.array() - mx).square().sum() *
                                 (target.array() - my).square().sum());
    CHECK(num / den >= 0.95);
}

TEST_CASE("fit_noise_process with two identical points recovers the level") {
    Eigen::VectorXd x(2), g(2);
    x << 0.0, 1.0;
    g << -2.0, -2.0;
    OptimizerConfig opt;
    opt.restarts = 1;
    opt.max_iter = 40;
    const NoiseProcess np = fit_noise_process(x, g, opt);
    CHECK(std::abs(np.mean_level - (-2.0)) < 0.1);
}

TEST_CASE("predict_noise interpolates and reverts to the prior level") {
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(25, -2, 2);
    Eigen::VectorXd g(25);
    for (int i = 0; i < 25; ++i) g[i] = -2.0 + 0.8 * std::exp(-x[i] * x[i]);
    OptimizerConfig opt;
    opt.restarts = 1;
    opt.max_iter = 60;
    const NoiseProcess np = fit_noise_process(x, g, opt, 0.05);

    // near-interpolation at a training input
    Eigen::VectorXd q(2);
    q << x[12], 400.0;
    const Eigen::VectorXd r = predict_noise(np, q);
    CHECK(std::abs(std::log(r[0]) - g[12]) < 0.1);
    // far extrapolation reverts to exp(mean_level)
    CHECK(r[1] == doctest::Approx(std::exp(np.mean_level)).epsilon(1e-2));
    CHECK((r.array() > 0.0).all());
}

TEST_CASE("constant noise process yields a constant output") {
    NoiseProcess np;
    np.mean_level = std::log(0.04);
    const Eigen::VectorXd r = predict_noise(np, Eigen::VectorXd::LinSpaced(9, -5, 5));
    for (int i = 0; i < 9; ++i) CHECK(r[i] == doctest::Approx(0.04));
}

TEST_CASE("heteroscedastic predictive reduces to homoscedastic for constant noise") {
    GpPrior prior;
    prior.mean = ZeroMean{};
    prior.kernel = SquaredExponentialKernel{1.0, 0.6};
    prior.noise_std = 0.2;
    std::mt19937_64 rng(13);
    std::normal_distribution<double> nd;
    Eigen::VectorXd x(30), y(30);
    for (int i = 0; i < 30; ++i) {
        x[i] = 2.0 * nd(rng);
        y[i] = std::sin(x[i]) + 0.2 * nd(rng);
    }

    const GpModel homo = make_gp_model(prior, x, y);
    NoiseProcess np;
    np.mean_level = std::log(0.04);
    const HetGpModel het =
        make_hetgp_model(prior, x, y, Eigen::VectorXd::Constant(30, 0.04), np);

    const Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(11, -3, 3);
    const PredictiveDistribution a = gp_predict(homo, q, true);
    const PredictiveDistribution b = hetgp_predict(het, q, true);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.variance - b.variance).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fit_hetgp on homoscedastic data recovers a flat noise profile") {
    const SoftClipMean curve{1.0, 1.0, 0.5, 10.0};
    const int n = 150;
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, -2.5, 2.5);
    Eigen::VectorXd y(n);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    for (int i = 0; i < n; ++i) y[i] = soft_clip(x[i], curve) + 0.2 * nd(rng);
    Dataset data;
    data.x = x;
    data.y = y;

    HetGpConfig cfg;
    cfg.seed = 3;
    cfg.max_outer = 4;
    cfg.opt = OptimizerConfig{1, 60, 1e-6, 5};
    cfg.noise_opt = OptimizerConfig{1, 40, 1e-6, 6};
    const HetGpModel model = fit_hetgp(data, default_gp_prior(data), cfg);

    const Eigen::VectorXd r = predict_noise(model.noise_process, x);
    for (int i = 0; i < n; ++i) {
        CHECK(r[i] > 0.5 * 0.04);
        CHECK(r[i] < 2.0 * 0.04);
    }
    CHECK(model.history.size() >= 2);
}

TEST_CASE("fit_hetgp recovers a bell-shaped noise profile") {
    const int n = 200;
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, -2.5, 2.5);
    Eigen::VectorXd y(n);
    auto sigma = [](double xv) { return 0.02 + 0.13 * std::exp(-0.5 * xv * xv / 0.8); };
    const SoftClipMean curve{1.0, 1.0, 0.5, 10.0};
    std::mt19937_64 rng(29);
    std::normal_distribution<double> nd;
    for (int i = 0; i < n; ++i) y[i] = soft_clip(x[i], curve) + sigma(x[i]) * nd(rng);
    Dataset data;
    data.x = x;
    data.y = y;

    HetGpConfig cfg;
    cfg.seed = 8;
    cfg.max_outer = 6;
    cfg.opt = OptimizerConfig{1, 60, 1e-6, 5};
    cfg.noise_opt = OptimizerConfig{1, 40, 1e-6, 6};
    const HetGpModel model = fit_hetgp(data, default_gp_prior(data), cfg);

    const Eigen::VectorXd pred_log = predict_noise(model.noise_process, x).array().log();
    Eigen::VectorXd target(n);
    for (int i = 0; i < n; ++i) target[i] = 2.0 * std::log(sigma(x[i]));
    const double mx = pred_log.mean(), my = target.mean();
    const double num = ((pred_log.array() - mx) * (target.array() - my)).sum();
    const double den = std::sqrt((pred_log.array() - mx).square().sum() *
                                 (target.array() - my).square().sum());
    CHECK(num / den >= 0.8);
}

TEST_CASE("fit_hetgp returns an iterate at least as good as the homoscedastic fit") {
    const int n = 120;
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, -2, 2);
    Eigen::VectorXd y(n);
    std::mt19937_64 rng(41);
    std::normal_distribution<double> nd;
    for (int i = 0; i < n; ++i) {
        const double s = 0.02 + 0.1 * std::exp(-x[i] * x[i]);
        y[i] = std::tanh(x[i]) + s * nd(rng);
    }
    Dataset data;
    data.x = x;
    data.y = y;

    HetGpConfig cfg;
    cfg.seed = 5;
    cfg.max_outer = 5;
    cfg.opt = OptimizerConfig{1, 50, 1e-6, 2};
    cfg.noise_opt = OptimizerConfig{1, 30, 1e-6, 3};
    GpPrior init = default_gp_prior(data, /*soft_clip_mean=*/false);
    const HetGpModel model = fit_hetgp(data, init, cfg);

    REQUIRE(!model.history.empty());
    const double homo_jll = model.history.front();
    CHECK(joint_log_likelihood(model, data) >= homo_jll - 1e-9);
}
