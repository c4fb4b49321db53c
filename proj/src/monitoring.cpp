#include "curvemix/monitoring.hpp"

#include <cmath>

namespace curvemix {

namespace {

/// MAP-component predictive mean/variance per test point.
void map_predictions(const OmgpModel& model, const Dataset& test, Eigen::VectorXd& mu,
                     Eigen::VectorXd& var, Eigen::VectorXi& map_k) {
    const Eigen::Index m = test.size();
    const OmgpPredictions pred = omgp_predict(model, test.x);
    mu.resize(m);
    var.resize(m);
    map_k.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const PosteriorClass pc = classify_posterior_from(pred, pred.weights, i, test.y[i]);
        map_k[i] = pc.map_component;
        mu[i] = pred.components[static_cast<std::size_t>(pc.map_component)].mean[i];
        var[i] = pred.components[static_cast<std::size_t>(pc.map_component)].variance[i];
    }
}

}  // namespace

double nmse_from_predictions(const Eigen::VectorXd& mu, const Eigen::VectorXd& y) {
    if (mu.size() != y.size()) throw DimensionMismatch("nmse: length mismatch");
    if (y.size() < 2) throw InsufficientData("nmse: need at least two test points");
    const auto m = static_cast<double>(y.size());
    const double mean_y = y.mean();
    const double var_y = (y.array() - mean_y).square().sum() / m;
    if (!(var_y > 0.0)) throw DegenerateTargets("nmse: test targets have zero variance");
    return 100.0 / (m * var_y) * (mu - y).squaredNorm();
}

double msd_from_predictions(const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
                            const Eigen::VectorXd& y) {
    if (mu.size() != y.size() || var.size() != y.size()) {
        throw DimensionMismatch("msd: length mismatch");
    }
    if (y.size() < 1) throw InsufficientData("msd: need at least one test point");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double d = mu[i] - y[i];
        acc += d * d / var[i];
    }
    return acc / static_cast<double>(y.size());
}

double nmse(const OmgpModel& model, const Dataset& test) {
    Eigen::VectorXd mu, var;
    Eigen::VectorXi map_k;
    map_predictions(model, test, mu, var, map_k);
    return nmse_from_predictions(mu, test.y);
}

double msd(const OmgpModel& model, const Dataset& test) {
    Eigen::VectorXd mu, var;
    Eigen::VectorXi map_k;
    map_predictions(model, test, mu, var, map_k);
    return msd_from_predictions(mu, var, test.y);
}

EvaluationReport evaluate(const OmgpModel& model, const Dataset& test) {
    Eigen::VectorXd mu, var;
    Eigen::VectorXi map_k;
    map_predictions(model, test, mu, var, map_k);
    EvaluationReport rep;
    rep.n_test = test.size();
    rep.nmse_percent = nmse_from_predictions(mu, test.y);
    rep.msd = msd_from_predictions(mu, var, test.y);
    rep.per_component_counts = Eigen::VectorXi::Zero(model.k());
    for (Eigen::Index i = 0; i < test.size(); ++i) rep.per_component_counts[map_k[i]] += 1;
    return rep;
}

double entropy(const Eigen::VectorXd& posterior) {
    if (posterior.size() == 0) throw EmptyInput("entropy: empty posterior");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < posterior.size(); ++i) {
        if (posterior[i] < -1e-12) throw InvalidSimplex("entropy: negative probability");
        sum += posterior[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidSimplex("entropy: probabilities must sum to 1");
    double h = 0.0;
    for (Eigen::Index i = 0; i < posterior.size(); ++i) {
        const double p = posterior[i];
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

Eigen::Vector2d simplex_coords(const Eigen::VectorXd& posterior) {
    if (posterior.size() != 3) {
        throw WrongDimension("simplex_coords: expected a 3-simplex vector");
    }
    const double sqrt3_2 = 0.5 * std::sqrt(3.0);
    return {posterior[1] + 0.5 * posterior[2], sqrt3_2 * posterior[2]};
}

std::vector<NoveltyRecord> score_stream(const OmgpModel& model,
                                        const std::vector<std::pair<double, double>>& observations,
                                        double entropy_threshold) {
    std::vector<NoveltyRecord> out;
    out.reserve(observations.size());
    if (observations.empty()) return out;

    Eigen::VectorXd xs(static_cast<Eigen::Index>(observations.size()));
    for (std::size_t i = 0; i < observations.size(); ++i) {
        xs[static_cast<Eigen::Index>(i)] = observations[i].first;
    }
    const OmgpPredictions pred = omgp_predict(model, xs);
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const PosteriorClass pc = classify_posterior_from(pred, pred.weights,
                                                          static_cast<Eigen::Index>(i),
                                                          observations[i].second);
        NoveltyRecord rec;
        rec.posterior = pc.probabilities;
        rec.map_component = pc.map_component;
        rec.entropy = entropy(pc.probabilities);
        rec.flagged = rec.entropy > entropy_threshold;
        out.push_back(std::move(rec));
    }
    return out;
}

CvResult cross_validate_k(const Dataset& data, const PriorBuilder& prior_template,
                          const std::vector<int>& k_range, int repeats, std::uint64_t seed,
                          const OmgpConfig& base_config) {
    if (repeats < 1) throw InsufficientData("cross_validate_k: repeats must be >= 1");
    if (k_range.empty()) throw EmptyInput("cross_validate_k: empty k range");

    CvResult result;
    for (std::size_t ki = 0; ki < k_range.size(); ++ki) {
        const int k = k_range[ki];
        CvEntry entry;
        entry.k = k;
        entry.bounds.resize(repeats);
        const OmgpPrior prior = prior_template(k, data);
        for (int r = 0; r < repeats; ++r) {
            OmgpConfig cfg = base_config;
            cfg.seed = seed + 100000 * static_cast<std::uint64_t>(ki) + static_cast<std::uint64_t>(r);
            const OmgpModel model = fit_omgp(data, prior, cfg);
            entry.bounds[r] = model.bound;
        }
        entry.mean_bound = entry.bounds.mean();
        entry.std_bound =
            repeats > 1
                ? std::sqrt((entry.bounds.array() - entry.mean_bound).square().sum() /
                            static_cast<double>(repeats - 1))
                : 0.0;
        result.entries.push_back(std::move(entry));
    }
    result.selected_k = result.entries.front().k;
    double best = result.entries.front().mean_bound;
    for (const auto& e : result.entries) {
        if (e.mean_bound > best) {
            best = e.mean_bound;
            result.selected_k = e.k;
        }
    }
    return result;
}

}  // namespace curvemix
