#ifndef CURVEMIX_DATA_HPP
#define CURVEMIX_DATA_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "curvemix/errors.hpp"
#include "curvemix/model_functions.hpp"

namespace curvemix {

struct RawRecord {
    std::string turbine_id;
    std::string timestamp;  // optional ISO-8601 instant, empty if absent
    double wind_speed = 0.0;
    double power = 0.0;
    std::optional<int> label;
};

struct NormStats {
    double x_mean = 0.0, x_std = 1.0;
    double y_mean = 0.0, y_std = 1.0;

    bool is_identity() const { return x_mean == 0.0 && x_std == 1.0 && y_mean == 0.0 && y_std == 1.0; }
};

struct Dataset {
    Eigen::VectorXd x;  // normalized wind speed
    Eigen::VectorXd y;  // normalized power
    NormStats stats;
    std::optional<Eigen::VectorXi> labels;

    Eigen::Index size() const { return x.size(); }
};

// --- CSV ---------------------------------------------------------------------

struct CsvSchema {
    std::string turbine_id = "turbine_id";
    std::string timestamp = "timestamp";  // optional column
    std::string wind_speed = "wind_speed";
    std::string power = "power";
    std::string label = "label";  // optional column
};

struct RowDiagnostic {
    long row = 0;  // 1-based data-row index (header excluded)
    std::string message;
};

struct CsvLoadResult {
    std::vector<RawRecord> records;
    std::vector<RowDiagnostic> rejected;
};

/// Parse a header-first CSV. Rows with malformed fields or non-finite /
/// negative wind speed are rejected with row-indexed diagnostics; in strict
/// mode the first bad row throws ParseError instead.
CsvLoadResult load_csv(const std::string& path, const CsvSchema& schema, bool strict = false);

void write_csv(const std::string& path, const std::vector<RawRecord>& records,
               const CsvSchema& schema, bool with_labels);

// --- normalization -------------------------------------------------------------

/// Z-score both axes (population std); stats retained for round-tripping.
Dataset normalize(const std::vector<RawRecord>& records);

/// Build a dataset without rescaling (identity stats), keeping labels.
Dataset dataset_from_records(const std::vector<RawRecord>& records);

Eigen::VectorXd denormalize_x(const Dataset& ds, const Eigen::VectorXd& x);
Eigen::VectorXd denormalize_y(const Dataset& ds, const Eigen::VectorXd& y);
double normalize_x(const NormStats& stats, double x);
double normalize_y(const NormStats& stats, double y);

// --- outlier pre-filter ----------------------------------------------------

struct FilterResult {
    Dataset kept;
    std::vector<Eigen::Index> removed;
};

/// Remove points whose Euclidean distance in (x, y) to their k-th nearest
/// neighbour exceeds the given quantile of those distances.
FilterResult knn_outlier_filter(const Dataset& ds, int k, double quantile);

// --- synthetic generator -----------------------------------------------------

struct ConstantNoise {
    double sigma = 0.01;
};

/// Gaussian bump noise profile: sigma(x) = floor + (peak-floor)*exp(-(x-center)^2/(2 width^2)).
struct BellNoise {
    double floor = 0.01;
    double peak = 0.05;
    double center = 0.0;
    double width = 1.0;
};

using NoiseSpec = std::variant<ConstantNoise, BellNoise>;

double noise_sigma(double x, const NoiseSpec& noise);

struct SynthComponent {
    MeanSpec mean;
    NoiseSpec noise;
};

struct SynthConfig {
    int n_points = 1000;
    std::vector<double> component_weights;
    std::vector<SynthComponent> component_specs;
    double x_min = -2.2;
    double x_max = 2.5;
    std::uint64_t seed = 0;
};

/// Ideal + 50%-limited soft-clip trends plus a zero-power trend.
SynthConfig three_trend_config(int n_points, std::uint64_t seed);
/// three_trend plus an 80%-limited trend.
SynthConfig four_trend_config(int n_points, std::uint64_t seed);

/// Draw x uniform on the range, pick a component per the weights, add that
/// component's input-dependent noise. Deterministic for a fixed seed.
Dataset generate_synthetic(const SynthConfig& cfg);

/// True mean of a synthetic component at x (test/evaluation helper).
double synthetic_mean(const SynthConfig& cfg, int component, double x);

// --- splitting -------------------------------------------------------------

/// Seeded uniform partition; train gets floor(fraction * N) points.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

std::vector<RawRecord> dataset_to_records(const Dataset& ds);

}  // namespace curvemix

#endif
