#ifndef CURVEMIX_MONITORING_HPP
#define CURVEMIX_MONITORING_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "curvemix/omgp.hpp"

namespace curvemix {

struct EvaluationReport {
    double nmse_percent = 0.0;
    double msd = 0.0;
    Eigen::VectorXi per_component_counts;  // MAP-component histogram over the test set
    Eigen::Index n_test = 0;
};

struct NoveltyRecord {
    Eigen::VectorXd posterior;
    double entropy = 0.0;
    int map_component = 0;
    bool flagged = false;
};

/// 100 / (M * var(y)) * sum (mu - y)^2 with the population (divide-by-M)
/// variance, so a constant predictor at mean(y) scores exactly 100.
double nmse_from_predictions(const Eigen::VectorXd& mu, const Eigen::VectorXd& y);

/// (1/M) sum (mu - y)^2 / var; approximately 1 for calibrated variances.
double msd_from_predictions(const Eigen::VectorXd& mu, const Eigen::VectorXd& var,
                            const Eigen::VectorXd& y);

/// Each test point is scored against the mean of its MAP posterior component.
double nmse(const OmgpModel& model, const Dataset& test);
/// MAP-component predictive variance (with noise) in the denominator.
double msd(const OmgpModel& model, const Dataset& test);

EvaluationReport evaluate(const OmgpModel& model, const Dataset& test);

/// Shannon entropy in nats, with 0 log 0 = 0.
double entropy(const Eigen::VectorXd& posterior);

/// Barycentric embedding of a 3-simplex vector onto the unit equilateral
/// triangle with vertices (0,0), (1,0), (0.5, sqrt(3)/2).
Eigen::Vector2d simplex_coords(const Eigen::VectorXd& posterior);

std::vector<NoveltyRecord> score_stream(const OmgpModel& model,
                                        const std::vector<std::pair<double, double>>& observations,
                                        double entropy_threshold);

struct CvEntry {
    int k = 0;
    double mean_bound = 0.0;
    double std_bound = 0.0;       // sample standard deviation over repeats
    Eigen::VectorXd bounds;       // final corrected bound per repeat
};

struct CvResult {
    std::vector<CvEntry> entries;
    int selected_k = 0;  // argmax of the mean bound, ties toward the lowest K
};

using PriorBuilder = std::function<OmgpPrior(int, const Dataset&)>;

/// Fit the mixture for each K with `repeats` seeded restarts and summarize
/// the final corrected bound per K.
CvResult cross_validate_k(const Dataset& data, const PriorBuilder& prior_template,
                          const std::vector<int>& k_range, int repeats, std::uint64_t seed,
                          const OmgpConfig& base_config);

}  // namespace curvemix

#endif
