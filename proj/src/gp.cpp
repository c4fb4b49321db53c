#include "curvemix/gp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace curvemix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double jitter_budget(const Eigen::MatrixXd& a) {
    const double mean_diag = a.rows() > 0 ? a.diagonal().mean() : 1.0;
    return 1e-4 * std::max(mean_diag, 1e-12);
}

struct DataStats {
    double std_y = 1.0, span_x = 1.0, median_x = 0.0, max_y = 1.0, min_y = 0.0, mean_y = 0.0,
           var_y = 1.0;
};

DataStats compute_stats(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    DataStats s;
    const auto n = static_cast<double>(x.size());
    if (x.size() == 0) return s;
    s.mean_y = y.mean();
    s.var_y = (y.array() - s.mean_y).square().sum() / n;
    s.std_y = std::sqrt(s.var_y);
    s.span_x = x.maxCoeff() - x.minCoeff();
    s.max_y = y.maxCoeff();
    s.min_y = y.minCoeff();
    std::vector<double> xs(x.data(), x.data() + x.size());
    std::nth_element(xs.begin(), xs.begin() + xs.size() / 2, xs.end());
    s.median_x = xs[xs.size() / 2];
    if (!(s.span_x > 0.0)) s.span_x = 1.0;
    return s;
}

PackedParams pack_gp(const GpPrior& prior) {
    PackedParams p;
    const HyperBounds bounds;
    append_mean_params(prior.mean, p);
    append_kernel_params(prior.kernel, bounds, p);
    p.natural.push_back(prior.noise_std);
    p.transforms.push_back(ParamTransform::log_bounded(bounds.noise_std_lo, bounds.noise_std_hi));
    p.affects_kernel.push_back(true);  // sigma enters the factorized matrix
    return p;
}

GpPrior unpack_gp(const GpPrior& proto, const std::vector<double>& natural) {
    GpPrior out = proto;
    std::size_t off = 0;
    out.mean = mean_with_params(proto.mean, natural.data() + off);
    off += static_cast<std::size_t>(mean_param_count(proto.mean));
    out.kernel = kernel_with_params(proto.kernel, natural.data() + off);
    off += static_cast<std::size_t>(kernel_param_count(proto.kernel));
    out.noise_std = natural[off];
    return out;
}

Eigen::VectorXd to_internal(const PackedParams& p) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(p.natural.size()));
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        u[i] = p.transforms[static_cast<std::size_t>(i)].to_internal(p.natural[static_cast<std::size_t>(i)]);
    }
    return u;
}

std::vector<double> to_natural(const PackedParams& p, const Eigen::VectorXd& u) {
    std::vector<double> nat(p.natural.size());
    for (std::size_t i = 0; i < nat.size(); ++i) {
        nat[i] = p.transforms[i].to_natural(u[static_cast<Eigen::Index>(i)]);
    }
    return nat;
}

// Small FIFO cache of factorizations keyed by the kernel-affecting parameter
// values; mean-only moves in the finite-difference loop reuse the entry.
class FactorizationCache {
public:
    const SpdFactorization* find(const std::vector<double>& key) const {
        for (const auto& e : entries_) {
            if (e.key == key) return &e.fact;
        }
        return nullptr;
    }
    const SpdFactorization* insert(std::vector<double> key, SpdFactorization fact) {
        if (entries_.size() >= 8) entries_.erase(entries_.begin());
        entries_.push_back({std::move(key), std::move(fact)});
        return &entries_.back().fact;
    }

private:
    struct Entry {
        std::vector<double> key;
        SpdFactorization fact;
    };
    std::vector<Entry> entries_;
};

struct GpObjective {
    const Eigen::VectorXd& x;
    const Eigen::VectorXd& y;
    const GpPrior& proto;
    const PackedParams& layout;
    mutable FactorizationCache cache;

    double operator()(const Eigen::VectorXd& u) const {
        const auto natural = to_natural(layout, u);
        const GpPrior prior = unpack_gp(proto, natural);
        std::vector<double> kernel_key;
        for (std::size_t i = 0; i < natural.size(); ++i) {
            if (layout.affects_kernel[i]) kernel_key.push_back(natural[i]);
        }
        try {
            const SpdFactorization* fact = cache.find(kernel_key);
            if (fact == nullptr) {
                Eigen::MatrixXd a = gram_matrix(x, x, prior.kernel);
                a.diagonal().array() += prior.noise_std * prior.noise_std;
                fact = cache.insert(std::move(kernel_key), cholesky_factor(a, jitter_budget(a)));
            }
            const Eigen::VectorXd resid = y - mean_vector(x, prior.mean);
            const Eigen::VectorXd v = solve_lower(*fact, resid);
            return 0.5 * v.squaredNorm() + fact->lower_factor.diagonal().array().log().sum() +
                   0.5 * kLog2Pi * static_cast<double>(x.size());
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    }
};

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

GpPrior draw_restart(std::mt19937_64& rng, const GpPrior& proto, const DataStats& s) {
    GpPrior out = proto;
    const double sy = std::max(s.std_y, 1e-3);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (std::holds_alternative<SoftClipMean>(proto.mean)) {
        SoftClipMean m;
        const double scale = std::max(std::abs(s.max_y), 1e-3);
        m.alpha1 = scale * (0.25 + u01(rng));
        m.alpha2 = log_uniform(rng, 0.5, 8.0) / s.span_x;
        m.alpha3 = 0.5 - m.alpha2 * (s.median_x + (u01(rng) - 0.5) * 0.4 * s.span_x);
        m.beta = log_uniform(rng, 2.0, 100.0);
        out.mean = m;
    } else if (std::holds_alternative<ConstantMean>(proto.mean)) {
        std::uniform_real_distribution<double> uv(s.min_y, std::max(s.max_y, s.min_y + 1e-9));
        out.mean = ConstantMean{uv(rng)};
    }
    if (std::holds_alternative<SquaredExponentialKernel>(proto.kernel)) {
        out.kernel = SquaredExponentialKernel{log_uniform(rng, 0.1, 3.0) * sy,
                                              log_uniform(rng, s.span_x / 50.0, s.span_x / 2.0)};
    } else {
        out.kernel = ConstantKernel{log_uniform(rng, 0.01, 2.0) * std::max(s.var_y, 1e-6)};
    }
    out.noise_std = log_uniform(rng, 0.01, 1.0) * sy;
    return out;
}

}  // namespace

double nlml(const GpPrior& prior, const Dataset& data) {
    if (data.size() < 1) throw InsufficientData("nlml: need at least one observation");
    Eigen::MatrixXd a = gram_matrix(data.x, data.x, prior.kernel);
    a.diagonal().array() += prior.noise_std * prior.noise_std;
    const SpdFactorization fact = cholesky_factor(a, jitter_budget(a));
    const Eigen::VectorXd resid = data.y - mean_vector(data.x, prior.mean);
    const Eigen::VectorXd v = solve_lower(fact, resid);
    return 0.5 * v.squaredNorm() + 0.5 * log_det(fact) +
           0.5 * kLog2Pi * static_cast<double>(data.size());
}

GpModel make_gp_model(const GpPrior& prior, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw DimensionMismatch("make_gp_model: x/y length mismatch");
    if (!(prior.noise_std > 0.0)) throw InvalidHyperparameter("make_gp_model: noise_std must be > 0");
    GpModel m;
    m.prior = prior;
    m.train_x = x;
    m.train_y = y;
    if (x.size() == 0) return m;
    Eigen::MatrixXd a = gram_matrix(x, x, prior.kernel);
    a.diagonal().array() += prior.noise_std * prior.noise_std;
    m.chol = cholesky_factor(a, jitter_budget(a));
    m.weights = solve_spd(m.chol, Eigen::VectorXd(y - mean_vector(x, prior.mean)));
    return m;
}

GpPrior default_gp_prior(const Dataset& data, bool soft_clip_mean) {
    const DataStats s = compute_stats(data.x, data.y);
    const HyperBounds b;
    GpPrior prior;
    if (soft_clip_mean) {
        SoftClipMean m;
        m.alpha1 = s.max_y;
        m.alpha2 = 4.0 / s.span_x;
        m.alpha3 = 0.5 - m.alpha2 * s.median_x;
        m.beta = 10.0;
        prior.mean = m;
    } else {
        prior.mean = ZeroMean{};
    }
    prior.kernel = SquaredExponentialKernel{std::clamp(s.std_y, b.process_std_lo, b.process_std_hi),
                                            std::clamp(s.span_x / 10.0, b.length_scale_lo, b.length_scale_hi)};
    prior.noise_std = std::clamp(0.1 * s.std_y, b.noise_std_lo, b.noise_std_hi);
    return prior;
}

GpFitResult fit_gp_detailed(const Dataset& data, const GpPrior& prior_init,
                            const OptimizerConfig& opt) {
    if (data.size() < 2) throw InsufficientData("fit_gp: need at least two observations");
    const DataStats stats = compute_stats(data.x, data.y);
    const HyperBounds bounds;

    GpPrior init = prior_init;
    init.noise_std = std::clamp(init.noise_std, bounds.noise_std_lo, bounds.noise_std_hi);

    std::mt19937_64 rng(opt.seed);
    bool any = false;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<double> best_natural;
    std::vector<double> best_trace;
    const int restarts = std::max(1, opt.restarts);

    for (int r = 0; r < restarts; ++r) {
        const GpPrior start = (r == 0) ? init : draw_restart(rng, init, stats);
        PackedParams layout = pack_gp(start);
        GpObjective obj{data.x, data.y, start, layout, {}};
        const OptimizeResult res =
            minimize_lbfgs([&obj](const Eigen::VectorXd& u) { return obj(u); }, to_internal(layout),
                           opt.max_iter, opt.tolerance);
        if (std::isfinite(res.value) && res.value < best_value) {
            best_value = res.value;
            best_natural = to_natural(layout, res.x);
            best_trace = res.trace;
            any = true;
        }
    }
    if (!any) {
        throw OptimizationFailed("fit_gp: every restart failed to produce a finite objective");
    }

    GpFitResult out;
    out.model = make_gp_model(unpack_gp(init, best_natural), data.x, data.y);
    out.nlml = best_value;
    out.trace = std::move(best_trace);
    return out;
}

GpModel fit_gp(const Dataset& data, const GpPrior& prior_init, const OptimizerConfig& opt) {
    return fit_gp_detailed(data, prior_init, opt).model;
}

PredictiveDistribution gp_predict(const GpModel& model, const Eigen::VectorXd& query_x,
                                  bool include_noise, bool want_covariance) {
    PredictiveDistribution out;
    const double noise_var = model.prior.noise_std * model.prior.noise_std;
    const Eigen::VectorXd m_q = mean_vector(query_x, model.prior.mean);
    const Eigen::VectorXd k_diag = gram_diagonal(query_x, model.prior.kernel);

    if (model.train_x.size() == 0) {
        out.mean = m_q;
        out.variance = k_diag;
        if (include_noise) out.variance.array() += noise_var;
        if (want_covariance) {
            out.covariance = gram_matrix(query_x, query_x, model.prior.kernel);
            if (include_noise) out.covariance.diagonal().array() += noise_var;
        }
        return out;
    }

    Eigen::MatrixXd k_xq = gram_matrix(model.train_x, query_x, model.prior.kernel);
    out.mean = m_q + k_xq.transpose() * model.weights;
    solve_lower_in_place(model.chol, k_xq);  // now L^{-1} K_xq
    out.variance = k_diag - k_xq.colwise().squaredNorm().transpose();
    // Schur complements stay positive in exact arithmetic; guard roundoff.
    const double floor_scale = 1e-15 * (k_diag.maxCoeff() + noise_var);
    out.variance = out.variance.cwiseMax(floor_scale);
    if (include_noise) out.variance.array() += noise_var;
    if (want_covariance) {
        out.covariance = gram_matrix(query_x, query_x, model.prior.kernel) - k_xq.transpose() * k_xq;
        if (include_noise) out.covariance.diagonal().array() += noise_var;
    }
    return out;
}

double normal_log_density_sum(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& var) {
    if (y.size() != mu.size() || y.size() != var.size()) {
        throw DimensionMismatch("normal_log_density_sum: length mismatch");
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double d = y[i] - mu[i];
        s += -0.5 * (kLog2Pi + std::log(var[i])) - 0.5 * d * d / var[i];
    }
    return s;
}

double joint_log_likelihood(const GpModel& model, const Dataset& data) {
    const PredictiveDistribution pred = gp_predict(model, data.x, /*include_noise=*/true);
    return normal_log_density_sum(data.y, pred.mean, pred.variance);
}

}  // namespace curvemix
