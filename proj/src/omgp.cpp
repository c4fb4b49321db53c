#include "curvemix/omgp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "curvemix/logging.hpp"

namespace curvemix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double jitter_budget(const Eigen::MatrixXd& a) {
    const double mean_diag = a.rows() > 0 ? a.diagonal().mean() : 1.0;
    return 1e-4 * std::max(mean_diag, 1e-12);
}

double prior_pi(const OmgpPrior& prior, Eigen::Index i, int k) {
    if (prior.train_prior_pi.size() == 0) return 1.0 / static_cast<double>(prior.k_components);
    return prior.train_prior_pi(i, k);
}

Eigen::VectorXd query_weights(const OmgpPrior& prior) {
    if (prior.query_prior_pi.size() == 0) {
        return Eigen::VectorXd::Constant(prior.k_components,
                                         1.0 / static_cast<double>(prior.k_components));
    }
    return prior.query_prior_pi;
}

std::vector<Eigen::Index> active_set(const Eigen::Ref<const Eigen::VectorXd>& resp_col,
                                     double prune) {
    std::vector<Eigen::Index> idx;
    const Eigen::Index n = resp_col.size();
    idx.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (prune <= 0.0 || resp_col[i] > prune) idx.push_back(i);
    }
    return idx;
}

/// One component's factorization, bound term, and (optionally) posterior
/// moments at all N points, computed on the active subset S:
///   A = I + B_S^{1/2} K_SS B_S^{1/2},  alpha = B^{1/2} A^{-1} B^{1/2}(y - m)|_S,
///   mu = m + K_{.,S} alpha,            diag Sigma = diag K - colsq(L^{-1} B^{1/2} K_{S,.}).
void compute_component(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const MeanSpec& mean,
                       const KernelSpec& kernel, const Eigen::Ref<const Eigen::VectorXd>& resp_col,
                       const Eigen::Ref<const Eigen::VectorXd>& nv_col, double floor, double prune,
                       bool want_posterior, OmgpModel::ComponentState& st,
                       ComponentPosterior* post) {
    const Eigen::Index n = x.size();
    st.active = active_set(resp_col, prune);
    const auto ns = static_cast<Eigen::Index>(st.active.size());

    const Eigen::VectorXd m_all = mean_vector(x, mean);
    if (post != nullptr) {
        post->b_diag.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            post->b_diag[i] = std::max(resp_col[i], floor) / nv_col[i];
        }
    }

    if (ns == 0) {
        st.bs.resize(0);
        st.alpha.resize(0);
        st.cholA = SpdFactorization{};
        st.t_term = 0.0;
        if (post != nullptr) {
            post->post_mean = m_all;
            post->post_var = gram_diagonal(x, kernel);
        }
        return;
    }

    Eigen::VectorXd x_s(ns), r_s(ns);
    st.bs.resize(ns);
    for (Eigen::Index j = 0; j < ns; ++j) {
        const Eigen::Index i = st.active[static_cast<std::size_t>(j)];
        x_s[j] = x[i];
        r_s[j] = y[i] - m_all[i];
        st.bs[j] = std::sqrt(std::max(resp_col[i], floor) / nv_col[i]);
    }

    Eigen::MatrixXd k_sx;  // ns x n when the posterior is wanted, else ns x ns
    Eigen::MatrixXd a(ns, ns);
    if (want_posterior) {
        k_sx = gram_matrix(x_s, x, kernel);
        for (Eigen::Index j = 0; j < ns; ++j) {
            a.col(j) = k_sx.col(st.active[static_cast<std::size_t>(j)]);
        }
    } else {
        a = gram_matrix(x_s, x_s, kernel);
    }
    a = a.cwiseProduct(st.bs * st.bs.transpose());
    a.diagonal().array() += 1.0;

    st.cholA = cholesky_factor(a, jitter_budget(a));
    const Eigen::VectorXd w = st.bs.cwiseProduct(r_s);
    const Eigen::VectorXd u = solve_lower(st.cholA, w);
    st.t_term = -0.5 * u.squaredNorm() - st.cholA.lower_factor.diagonal().array().log().sum();
    st.alpha = st.bs.cwiseProduct(solve_lower_transpose(st.cholA, u));

    if (post != nullptr && want_posterior) {
        const Eigen::VectorXd k_diag = gram_diagonal(x, kernel);
        post->post_mean = m_all + k_sx.transpose() * st.alpha;
        k_sx.array().colwise() *= st.bs.array();
        solve_lower_in_place(st.cholA, k_sx);
        const double var_floor = 1e-15 * (k_diag.maxCoeff() + 1e-12);
        post->post_var =
            (k_diag - k_sx.colwise().squaredNorm().transpose()).cwiseMax(var_floor);
    }
}

double kl_and_noise_terms(const OmgpModel& model) {
    double kl = 0.0;
    double noise = 0.0;
    const int k = model.k();
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        for (int c = 0; c < k; ++c) {
            const double p = model.resp(i, c);
            if (p > 0.0) kl += p * std::log(p / prior_pi(model.prior, i, c));
            noise += p * std::log(2.0 * M_PI * model.noise_var(i, c));
        }
    }
    return -kl - 0.5 * noise;
}

/// Recompute factorizations, posteriors, and the bound from model.resp.
void recompute(OmgpModel& model) {
    const int k = model.k();
    model.states.assign(static_cast<std::size_t>(k), {});
    model.components.assign(static_cast<std::size_t>(k), {});
    double t_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        compute_component(model.train_x, model.train_y, model.prior.component_priors[static_cast<std::size_t>(c)].first,
                          model.prior.component_priors[static_cast<std::size_t>(c)].second,
                          model.resp.col(c), model.noise_var.col(c), model.config.resp_floor,
                          model.config.prune_threshold, /*want_posterior=*/true,
                          model.states[static_cast<std::size_t>(c)],
                          &model.components[static_cast<std::size_t>(c)]);
        t_sum += model.states[static_cast<std::size_t>(c)].t_term;
    }
    model.bound = t_sum + kl_and_noise_terms(model);
}

void validate_prior(const OmgpPrior& prior, Eigen::Index n) {
    if (prior.k_components < 1) throw InsufficientData("omgp: need at least one component");
    if (static_cast<int>(prior.component_priors.size()) != prior.k_components) {
        throw DimensionMismatch("omgp: component_priors length must equal k_components");
    }
    if (!(prior.shared_noise_std > 0.0)) {
        throw InvalidHyperparameter("omgp: shared_noise_std must be > 0");
    }
    if (prior.train_prior_pi.size() != 0) {
        if (prior.train_prior_pi.rows() != n ||
            prior.train_prior_pi.cols() != prior.k_components) {
            throw DimensionMismatch("omgp: train_prior_pi must be N x K");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = prior.train_prior_pi.row(i).sum();
            if (std::abs(s - 1.0) > 1e-9 || (prior.train_prior_pi.row(i).array() < 0.0).any()) {
                throw InvalidSimplex("omgp: train_prior_pi rows must be simplex vectors");
            }
        }
    }
    if (prior.query_prior_pi.size() != 0) {
        if (prior.query_prior_pi.size() != prior.k_components ||
            std::abs(prior.query_prior_pi.sum() - 1.0) > 1e-9 ||
            (prior.query_prior_pi.array() < 0.0).any()) {
            throw InvalidSimplex("omgp: query_prior_pi must be a length-K simplex vector");
        }
    }
}

}  // namespace

OmgpPrior default_omgp_prior(int k, const Dataset& data) {
    if (k < 1) throw InsufficientData("default_omgp_prior: k must be >= 1");
    OmgpPrior prior;
    prior.k_components = k;
    const GpPrior base = default_gp_prior(data, /*soft_clip_mean=*/true);
    const auto soft = std::get<SoftClipMean>(base.mean);
    const auto se = std::get<SquaredExponentialKernel>(base.kernel);
    prior.shared_noise_std = base.noise_std;

    const int n_clips = (k == 1) ? 1 : k - 1;
    for (int j = 0; j < n_clips; ++j) {
        SoftClipMean m = soft;
        // Stagger the asymptote inits so components differentiate immediately.
        m.alpha1 = soft.alpha1 * static_cast<double>(n_clips - j) / static_cast<double>(n_clips);
        prior.component_priors.emplace_back(MeanSpec{m}, KernelSpec{se});
    }
    if (k > 1) {
        const double var_y = data.size() > 0
                                 ? (data.y.array() - data.y.mean()).square().sum() /
                                       static_cast<double>(data.size())
                                 : 1.0;
        prior.component_priors.emplace_back(MeanSpec{ZeroMean{}},
                                            KernelSpec{ConstantKernel{std::max(0.05 * var_y, 1e-8)}});
    }
    return prior;
}

OmgpModel init_omgp(const Dataset& data, const OmgpPrior& prior, const OmgpConfig& config) {
    validate_prior(prior, data.size());
    OmgpModel model;
    model.prior = prior;
    model.train_x = data.x;
    model.train_y = data.y;
    model.config = config;

    const Eigen::Index n = data.size();
    const int k = prior.k_components;
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> noise(-0.05, 0.05);
    model.resp.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (int c = 0; c < k; ++c) {
            const double v = std::max(1.0 / static_cast<double>(k) + noise(rng), 1e-8);
            model.resp(i, c) = v;
            row_sum += v;
        }
        model.resp.row(i) /= row_sum;
    }
    model.noise_var = Eigen::MatrixXd::Constant(
        n, k, prior.shared_noise_std * prior.shared_noise_std);
    recompute(model);
    return model;
}

Responsibilities update_responsibilities(const OmgpModel& state) {
    if (state.components.empty()) {
        throw Error("update_responsibilities: component posteriors not initialized");
    }
    const Eigen::Index n = state.n();
    const int k = state.k();
    Responsibilities out;
    out.pi_hat.resize(n, k);
    Eigen::VectorXd logw(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
            const auto& post = state.components[static_cast<std::size_t>(c)];
            const double nv = state.noise_var(i, c);
            const double d = state.train_y[i] - post.post_mean[i];
            const double a = -0.5 * (d * d + post.post_var[i]) / nv -
                             0.5 * std::log(2.0 * M_PI * nv);
            logw[c] = std::log(prior_pi(state.prior, i, c)) + a;
        }
        const double lse = log_sum_exp(logw);
        if (!std::isfinite(lse)) {
            throw NumericalError("update_responsibilities: zero posterior mass in a row");
        }
        for (int c = 0; c < k; ++c) out.pi_hat(i, c) = std::exp(logw[c] - lse);
    }
    return out;
}

std::vector<ComponentPosterior> update_component_posteriors(const OmgpModel& state,
                                                            const Responsibilities& resp) {
    if (resp.pi_hat.rows() != state.n() || resp.pi_hat.cols() != state.k()) {
        throw DimensionMismatch("update_component_posteriors: responsibilities must be N x K");
    }
    std::vector<ComponentPosterior> out(static_cast<std::size_t>(state.k()));
    for (int c = 0; c < state.k(); ++c) {
        OmgpModel::ComponentState st;
        compute_component(state.train_x, state.train_y,
                          state.prior.component_priors[static_cast<std::size_t>(c)].first,
                          state.prior.component_priors[static_cast<std::size_t>(c)].second,
                          resp.pi_hat.col(c), state.noise_var.col(c), state.config.resp_floor,
                          state.config.prune_threshold, /*want_posterior=*/true, st,
                          &out[static_cast<std::size_t>(c)]);
    }
    return out;
}

double corrected_lower_bound(const OmgpModel& state) {
    double t_sum = 0.0;
    for (int c = 0; c < state.k(); ++c) {
        OmgpModel::ComponentState st;
        compute_component(state.train_x, state.train_y,
                          state.prior.component_priors[static_cast<std::size_t>(c)].first,
                          state.prior.component_priors[static_cast<std::size_t>(c)].second,
                          state.resp.col(c), state.noise_var.col(c), state.config.resp_floor,
                          state.config.prune_threshold, /*want_posterior=*/false, st, nullptr);
        t_sum += st.t_term;
    }
    return t_sum + kl_and_noise_terms(state);
}

OmgpModel e_step(OmgpModel state) {
    if (state.components.empty() || !std::isfinite(state.bound)) recompute(state);
    const OmgpConfig& cfg = state.config;
    double prev = state.bound;
    std::vector<double> trace;
    for (int it = 0; it < cfg.max_inner; ++it) {
        Responsibilities r = update_responsibilities(state);
        state.resp = std::move(r.pi_hat);
        recompute(state);
        trace.push_back(state.bound);
        if (state.bound < prev - 1e-9) {
            std::ostringstream os;
            os << "e_step: bound decreased from " << prev << " to " << state.bound;
            log_warn(os.str());
        }
        if (std::abs(state.bound - prev) <= cfg.inner_tol * std::max(1.0, std::abs(prev))) {
            prev = state.bound;
            break;
        }
        prev = state.bound;
    }
    state.estep_traces.push_back(std::move(trace));
    return state;
}

namespace {

struct MStepBlock {
    PackedParams layout;
    int offset = 0;  // position in the joint internal vector
};

// FIFO cache of factorizations keyed by the kernel-affecting values.
class FactCache {
public:
    const SpdFactorization* find(const std::vector<double>& key) const {
        for (const auto& e : entries_) {
            if (e.key == key) return &e.fact;
        }
        return nullptr;
    }
    const SpdFactorization* insert(std::vector<double> key, SpdFactorization fact) {
        if (entries_.size() >= 6) entries_.erase(entries_.begin());
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

}  // namespace

OmgpModel m_step(OmgpModel state, const OptimizerConfig& opt) {
    if (!std::isfinite(state.bound)) recompute(state);
    if (state.n() == 0 || opt.max_iter <= 0) return state;
    const int k = state.k();
    const bool het = state.heteroscedastic();
    const HyperBounds bounds;

    // Joint layout: each component's mean+kernel parameters, then the shared
    // noise when homoscedastic (same ordering fit_gp uses for one component).
    std::vector<MStepBlock> blocks(static_cast<std::size_t>(k));
    std::vector<double> natural0;
    std::vector<ParamTransform> transforms;
    for (int c = 0; c < k; ++c) {
        auto& blk = blocks[static_cast<std::size_t>(c)];
        blk.offset = static_cast<int>(natural0.size());
        append_mean_params(state.prior.component_priors[static_cast<std::size_t>(c)].first, blk.layout);
        append_kernel_params(state.prior.component_priors[static_cast<std::size_t>(c)].second, bounds,
                             blk.layout);
        natural0.insert(natural0.end(), blk.layout.natural.begin(), blk.layout.natural.end());
        transforms.insert(transforms.end(), blk.layout.transforms.begin(), blk.layout.transforms.end());
    }
    int sigma_index = -1;
    if (!het) {
        sigma_index = static_cast<int>(natural0.size());
        natural0.push_back(state.prior.shared_noise_std);
        transforms.push_back(ParamTransform::log_bounded(bounds.noise_std_lo, bounds.noise_std_hi));
    }
    if (natural0.empty()) return state;

    // Frozen per-component data: active sets and sqrt responsibilities.
    struct Frozen {
        Eigen::VectorXd x_s, y_s, srt_s;  // srt = sqrt(max(resp, floor))
        Eigen::VectorXd inv_sqrt_nv;      // 1/sqrt(nv) on the active set (het mode)
    };
    std::vector<Frozen> frozen(static_cast<std::size_t>(k));
    double sum_resp = state.resp.sum();
    for (int c = 0; c < k; ++c) {
        const auto& act = state.states[static_cast<std::size_t>(c)].active;
        auto& f = frozen[static_cast<std::size_t>(c)];
        const auto ns = static_cast<Eigen::Index>(act.size());
        f.x_s.resize(ns);
        f.y_s.resize(ns);
        f.srt_s.resize(ns);
        f.inv_sqrt_nv.resize(ns);
        for (Eigen::Index j = 0; j < ns; ++j) {
            const Eigen::Index i = act[static_cast<std::size_t>(j)];
            f.x_s[j] = state.train_x[i];
            f.y_s[j] = state.train_y[i];
            f.srt_s[j] = std::sqrt(std::max(state.resp(i, c), state.config.resp_floor));
            f.inv_sqrt_nv[j] = 1.0 / std::sqrt(state.noise_var(i, c));
        }
    }

    double kl = 0.0;
    double het_noise_term = 0.0;
    for (Eigen::Index i = 0; i < state.n(); ++i) {
        for (int c = 0; c < k; ++c) {
            const double p = state.resp(i, c);
            if (p > 0.0) kl += p * std::log(p / prior_pi(state.prior, i, c));
            if (het) het_noise_term += p * std::log(2.0 * M_PI * state.noise_var(i, c));
        }
    }

    std::vector<FactCache> caches(static_cast<std::size_t>(k));
    auto objective = [&](const Eigen::VectorXd& u) -> double {
        std::vector<double> nat(natural0.size());
        for (std::size_t i = 0; i < nat.size(); ++i) {
            nat[i] = transforms[i].to_natural(u[static_cast<Eigen::Index>(i)]);
        }
        const double sigma = het ? 0.0 : nat[static_cast<std::size_t>(sigma_index)];
        double total = 0.0;
        try {
            for (int c = 0; c < k; ++c) {
                const auto& blk = blocks[static_cast<std::size_t>(c)];
                const auto& f = frozen[static_cast<std::size_t>(c)];
                const double* base = nat.data() + blk.offset;
                const MeanSpec mean = mean_with_params(
                    state.prior.component_priors[static_cast<std::size_t>(c)].first, base);
                const int n_mean =
                    mean_param_count(state.prior.component_priors[static_cast<std::size_t>(c)].first);
                const KernelSpec kernel = kernel_with_params(
                    state.prior.component_priors[static_cast<std::size_t>(c)].second, base + n_mean);
                if (f.x_s.size() == 0) continue;

                std::vector<double> key;
                for (std::size_t j = 0; j < blk.layout.natural.size(); ++j) {
                    if (blk.layout.affects_kernel[j]) key.push_back(nat[static_cast<std::size_t>(blk.offset) + j]);
                }
                if (!het) key.push_back(sigma);

                auto& cache = caches[static_cast<std::size_t>(c)];
                const SpdFactorization* fact = cache.find(key);
                Eigen::VectorXd bs =
                    het ? f.srt_s.cwiseProduct(f.inv_sqrt_nv) : (f.srt_s / sigma).eval();
                if (fact == nullptr) {
                    Eigen::MatrixXd a = gram_matrix(f.x_s, f.x_s, kernel);
                    a = a.cwiseProduct(bs * bs.transpose());
                    a.diagonal().array() += 1.0;
                    fact = cache.insert(std::move(key), cholesky_factor(a, jitter_budget(a)));
                }
                const Eigen::VectorXd w = bs.cwiseProduct(f.y_s - mean_vector(f.x_s, mean));
                const Eigen::VectorXd v = solve_lower(*fact, w);
                total += -0.5 * v.squaredNorm() -
                         fact->lower_factor.diagonal().array().log().sum();
            }
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
        const double noise_term =
            het ? het_noise_term : sum_resp * std::log(2.0 * M_PI * sigma * sigma);
        return -(total - kl - 0.5 * noise_term);
    };

    Eigen::VectorXd u0(static_cast<Eigen::Index>(natural0.size()));
    for (std::size_t i = 0; i < natural0.size(); ++i) {
        u0[static_cast<Eigen::Index>(i)] = transforms[i].to_internal(natural0[i]);
    }
    const double entry_bound = state.bound;
    const OptimizeResult res = minimize_lbfgs(objective, u0, opt.max_iter, opt.tolerance);

    if (res.improved && -res.value > entry_bound) {
        OmgpModel candidate = state;
        std::vector<double> nat(natural0.size());
        for (std::size_t i = 0; i < nat.size(); ++i) {
            nat[i] = transforms[i].to_natural(res.x[static_cast<Eigen::Index>(i)]);
        }
        for (int c = 0; c < k; ++c) {
            const auto& blk = blocks[static_cast<std::size_t>(c)];
            const double* base = nat.data() + blk.offset;
            auto& cp = candidate.prior.component_priors[static_cast<std::size_t>(c)];
            const int n_mean = mean_param_count(cp.first);
            cp.first = mean_with_params(cp.first, base);
            cp.second = kernel_with_params(cp.second, base + n_mean);
        }
        if (!het) {
            candidate.prior.shared_noise_std = nat[static_cast<std::size_t>(sigma_index)];
            candidate.noise_var.setConstant(candidate.prior.shared_noise_std *
                                            candidate.prior.shared_noise_std);
        }
        recompute(candidate);
        if (candidate.bound >= entry_bound) return candidate;
    }
    return state;
}

OmgpModel fit_omgp(const Dataset& data, const OmgpPrior& prior, const OmgpConfig& config) {
    if (data.size() < 5 * static_cast<Eigen::Index>(prior.k_components)) {
        throw InsufficientData("fit_omgp: need at least 5 observations per component");
    }
    OmgpModel state = init_omgp(data, prior, config);
    double prev = state.bound;
    for (int round = 0; round < config.max_em; ++round) {
        state = e_step(std::move(state));
        state = m_step(std::move(state), config.mstep_opt);
        state.em_bounds.push_back(state.bound);
        if (round >= 1 &&
            std::abs(state.bound - prev) <= config.em_tol * std::max(1.0, std::abs(prev))) {
            break;
        }
        prev = state.bound;
    }
    return state;
}

OmgpPredictions omgp_predict(const OmgpModel& model, const Eigen::VectorXd& query_x) {
    const int k = model.k();
    const Eigen::Index m = query_x.size();
    OmgpPredictions out;
    out.weights = query_weights(model.prior);
    out.components.resize(static_cast<std::size_t>(k));
    const double shared_var = model.prior.shared_noise_std * model.prior.shared_noise_std;
    constexpr Eigen::Index kChunk = 2048;

    for (int c = 0; c < k; ++c) {
        const auto& st = model.states[static_cast<std::size_t>(c)];
        const auto& spec = model.prior.component_priors[static_cast<std::size_t>(c)];
        auto& pred = out.components[static_cast<std::size_t>(c)];
        pred.mean.resize(m);
        pred.variance.resize(m);

        const auto ns = static_cast<Eigen::Index>(st.active.size());
        Eigen::VectorXd x_s(ns);
        for (Eigen::Index j = 0; j < ns; ++j) x_s[j] = model.train_x[st.active[static_cast<std::size_t>(j)]];

        for (Eigen::Index lo = 0; lo < m || (m == 0 && lo == 0); lo += kChunk) {
            const Eigen::Index len = std::min(kChunk, m - lo);
            if (len <= 0) break;
            const Eigen::VectorXd xq = query_x.segment(lo, len);
            const Eigen::VectorXd m_q = mean_vector(xq, spec.first);
            const Eigen::VectorXd k_diag = gram_diagonal(xq, spec.second);
            if (ns == 0) {
                pred.mean.segment(lo, len) = m_q;
                pred.variance.segment(lo, len) = k_diag;
            } else {
                Eigen::MatrixXd k_sq = gram_matrix(x_s, xq, spec.second);
                pred.mean.segment(lo, len) = m_q + k_sq.transpose() * st.alpha;
                k_sq.array().colwise() *= st.bs.array();
                solve_lower_in_place(st.cholA, k_sq);
                const double var_floor = 1e-15 * (k_diag.maxCoeff() + 1e-12);
                pred.variance.segment(lo, len) =
                    (k_diag - k_sq.colwise().squaredNorm().transpose()).cwiseMax(var_floor);
            }
        }

        // Observation noise: shared sigma^2, or the component's noise process.
        if (model.heteroscedastic() && model.noise_processes[static_cast<std::size_t>(c)]) {
            pred.variance += predict_noise(*model.noise_processes[static_cast<std::size_t>(c)], query_x)
                                 .cwiseMax(1e-8);
        } else {
            pred.variance.array() += shared_var;
        }
    }
    return out;
}

Eigen::VectorXi classify_train(const OmgpModel& model) {
    const Eigen::Index n = model.n();
    Eigen::VectorXi out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < model.k(); ++c) {
            if (model.resp(i, c) > model.resp(i, best)) best = c;
        }
        out[i] = best;
    }
    return out;
}

PosteriorClass classify_posterior_from(const OmgpPredictions& pred, const Eigen::VectorXd& weights,
                                       Eigen::Index i, double y_star) {
    const auto k = static_cast<int>(pred.components.size());
    Eigen::VectorXd logw(k);
    for (int c = 0; c < k; ++c) {
        const double mu = pred.components[static_cast<std::size_t>(c)].mean[i];
        const double var = pred.components[static_cast<std::size_t>(c)].variance[i];
        const double d = y_star - mu;
        logw[c] = std::log(weights[c]) - 0.5 * (kLog2Pi + std::log(var)) - 0.5 * d * d / var;
    }
    const double lse = log_sum_exp(logw);
    PosteriorClass out;
    out.probabilities = (logw.array() - lse).exp();
    out.map_component = 0;
    for (int c = 1; c < k; ++c) {
        if (out.probabilities[c] > out.probabilities[out.map_component]) out.map_component = c;
    }
    return out;
}

PosteriorClass classify_posterior(const OmgpModel& model, double x_star, double y_star) {
    Eigen::VectorXd xq(1);
    xq[0] = x_star;
    const OmgpPredictions pred = omgp_predict(model, xq);
    return classify_posterior_from(pred, pred.weights, 0, y_star);
}

OmgpModel heteroscedastic_update(OmgpModel model, const OmgpConfig& config) {
    model.config = config;
    if (!std::isfinite(model.bound) || model.components.empty()) recompute(model);
    const int k = model.k();
    const Eigen::VectorXi labels = classify_train(model);

    std::vector<std::vector<Eigen::Index>> index_sets(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        index_sets[static_cast<std::size_t>(labels[i])].push_back(i);
    }

    const double g_noise =
        std::max(0.05, std::sqrt(2.0 / std::max(config.het_noise_samples, 2)));
    std::vector<std::optional<NoiseProcess>> processes(static_cast<std::size_t>(k));
    Eigen::MatrixXd new_nv = model.noise_var;
    int fitted = 0;

    for (int c = 0; c < k; ++c) {
        const auto& idx = index_sets[static_cast<std::size_t>(c)];
        if (static_cast<int>(idx.size()) < config.het_min_points) {
            std::ostringstream os;
            os << "heteroscedastic_update: component " << c << " has only " << idx.size()
               << " MAP points (< " << config.het_min_points << "); keeping shared noise";
            log_warn(os.str());
            continue;
        }
        const auto ns = static_cast<Eigen::Index>(idx.size());
        Eigen::VectorXd x_s(ns), y_s(ns), mu_s(ns), var_s(ns);
        const auto& post = model.components[static_cast<std::size_t>(c)];
        for (Eigen::Index j = 0; j < ns; ++j) {
            const Eigen::Index i = idx[static_cast<std::size_t>(j)];
            x_s[j] = model.train_x[i];
            y_s[j] = model.train_y[i];
            mu_s[j] = post.post_mean[i];
            var_s[j] = post.post_var[i] + model.noise_var(i, c);
        }
        const Eigen::VectorXd g_prime = empirical_log_noise(
            mu_s, var_s, y_s, config.het_noise_samples,
            config.seed + 7919 * static_cast<std::uint64_t>(c + 1));
        OptimizerConfig nopt = config.noise_opt;
        nopt.seed = config.seed + 104729 * static_cast<std::uint64_t>(c + 1);
        NoiseProcess np = fit_noise_process(x_s, g_prime, nopt, g_noise);
        new_nv.col(c) = predict_noise(np, model.train_x).cwiseMax(1e-8);
        processes[static_cast<std::size_t>(c)] = std::move(np);
        ++fitted;
    }

    if (fitted == 0) {
        log_warn("heteroscedastic_update: no component had enough MAP points; model unchanged");
        return model;
    }
    model.noise_var = std::move(new_nv);
    model.noise_processes = std::move(processes);
    recompute(model);
    return e_step(std::move(model));
}

Eigen::MatrixXd component_posterior_cov(const OmgpModel& model, int k) {
    const auto& st = model.states.at(static_cast<std::size_t>(k));
    const auto& spec = model.prior.component_priors[static_cast<std::size_t>(k)];
    Eigen::MatrixXd cov = gram_matrix(model.train_x, model.train_x, spec.second);
    const auto ns = static_cast<Eigen::Index>(st.active.size());
    if (ns > 0) {
        Eigen::VectorXd x_s(ns);
        for (Eigen::Index j = 0; j < ns; ++j) x_s[j] = model.train_x[st.active[static_cast<std::size_t>(j)]];
        Eigen::MatrixXd v = gram_matrix(x_s, model.train_x, spec.second);
        v.array().colwise() *= st.bs.array();
        solve_lower_in_place(st.cholA, v);
        cov -= v.transpose() * v;
    }
    return 0.5 * (cov + cov.transpose());
}

void refresh_omgp_state(OmgpModel& model) {
    validate_prior(model.prior, model.n());
    if (model.resp.rows() != model.n() || model.resp.cols() != model.k()) {
        throw DimensionMismatch("refresh_omgp_state: responsibilities must be N x K");
    }
    if (model.noise_var.rows() != model.n() || model.noise_var.cols() != model.k()) {
        throw DimensionMismatch("refresh_omgp_state: noise_var must be N x K");
    }
    recompute(model);
}

}  // namespace curvemix
