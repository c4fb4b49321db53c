#include "curvemix/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace curvemix {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim whitespace and CR
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

CsvLoadResult load_csv(const std::string& path, const CsvSchema& schema, bool strict) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw SchemaMismatch(path + ": empty file, header row required");
    const auto header = split_line(line);

    auto find_col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    };

    const int col_id = find_col(schema.turbine_id);
    const int col_ts = find_col(schema.timestamp);
    const int col_ws = find_col(schema.wind_speed);
    const int col_pw = find_col(schema.power);
    const int col_lb = find_col(schema.label);
    if (col_ws < 0 || col_pw < 0) {
        throw SchemaMismatch(path + ": required columns '" + schema.wind_speed + "' and '" +
                             schema.power + "' not found in header");
    }

    CsvLoadResult result;
    long row = 0;
    auto reject = [&](const std::string& msg) {
        if (strict) throw ParseError(path + " row " + std::to_string(row) + ": " + msg, row);
        result.rejected.push_back({row, msg});
    };

    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_line(line);
        const int needed = std::max(col_ws, col_pw) + 1;
        if (static_cast<int>(fields.size()) < needed) {
            reject("expected at least " + std::to_string(needed) + " columns, got " +
                   std::to_string(fields.size()));
            continue;
        }
        RawRecord rec;
        if (col_id >= 0 && col_id < static_cast<int>(fields.size())) rec.turbine_id = fields[col_id];
        if (col_ts >= 0 && col_ts < static_cast<int>(fields.size())) rec.timestamp = fields[col_ts];
        if (!parse_double(fields[col_ws], rec.wind_speed)) {
            reject("malformed wind speed '" + fields[col_ws] + "'");
            continue;
        }
        if (!parse_double(fields[col_pw], rec.power)) {
            reject("malformed power '" + fields[col_pw] + "'");
            continue;
        }
        if (!std::isfinite(rec.wind_speed) || rec.wind_speed < 0.0) {
            reject("wind speed must be finite and >= 0, got " + fields[col_ws]);
            continue;
        }
        if (!std::isfinite(rec.power)) {
            reject("power must be finite, got " + fields[col_pw]);
            continue;
        }
        if (col_lb >= 0 && col_lb < static_cast<int>(fields.size()) && !fields[col_lb].empty()) {
            double lab;
            if (parse_double(fields[col_lb], lab)) rec.label = static_cast<int>(lab);
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

void write_csv(const std::string& path, const std::vector<RawRecord>& records,
               const CsvSchema& schema, bool with_labels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << schema.turbine_id << ',' << schema.timestamp << ',' << schema.wind_speed << ','
        << schema.power;
    if (with_labels) out << ',' << schema.label;
    out << '\n';
    out.precision(17);
    for (const auto& r : records) {
        out << r.turbine_id << ',' << r.timestamp << ',' << r.wind_speed << ',' << r.power;
        if (with_labels) {
            out << ',';
            if (r.label) out << *r.label;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

namespace {

Dataset records_to_dataset(const std::vector<RawRecord>& records) {
    Dataset ds;
    const auto n = static_cast<Eigen::Index>(records.size());
    ds.x.resize(n);
    ds.y.resize(n);
    bool any_label = false;
    for (const auto& r : records) any_label = any_label || r.label.has_value();
    if (any_label) ds.labels = Eigen::VectorXi::Constant(n, -1);
    for (Eigen::Index i = 0; i < n; ++i) {
        ds.x[i] = records[i].wind_speed;
        ds.y[i] = records[i].power;
        if (any_label && records[i].label) (*ds.labels)[i] = *records[i].label;
    }
    return ds;
}

}  // namespace

Dataset dataset_from_records(const std::vector<RawRecord>& records) {
    return records_to_dataset(records);
}

Dataset normalize(const std::vector<RawRecord>& records) {
    if (records.size() < 2) throw DegenerateAxis("normalize: need at least 2 records");
    Dataset ds = records_to_dataset(records);
    const auto n = static_cast<double>(ds.size());
    ds.stats.x_mean = ds.x.mean();
    ds.stats.y_mean = ds.y.mean();
    ds.stats.x_std = std::sqrt((ds.x.array() - ds.stats.x_mean).square().sum() / n);
    ds.stats.y_std = std::sqrt((ds.y.array() - ds.stats.y_mean).square().sum() / n);
    if (!(ds.stats.x_std > 0.0)) throw DegenerateAxis("normalize: wind-speed axis has zero spread");
    if (!(ds.stats.y_std > 0.0)) throw DegenerateAxis("normalize: power axis has zero spread");
    ds.x = (ds.x.array() - ds.stats.x_mean) / ds.stats.x_std;
    ds.y = (ds.y.array() - ds.stats.y_mean) / ds.stats.y_std;
    return ds;
}

Eigen::VectorXd denormalize_x(const Dataset& ds, const Eigen::VectorXd& x) {
    return (x.array() * ds.stats.x_std + ds.stats.x_mean).matrix();
}

Eigen::VectorXd denormalize_y(const Dataset& ds, const Eigen::VectorXd& y) {
    return (y.array() * ds.stats.y_std + ds.stats.y_mean).matrix();
}

double normalize_x(const NormStats& stats, double x) { return (x - stats.x_mean) / stats.x_std; }
double normalize_y(const NormStats& stats, double y) { return (y - stats.y_mean) / stats.y_std; }

FilterResult knn_outlier_filter(const Dataset& ds, int k, double quantile) {
    if (!(quantile > 0.0) || quantile > 1.0) {
        throw InvalidQuantile("knn_outlier_filter: quantile must be in (0, 1]");
    }
    const Eigen::Index n = ds.size();
    if (k < 1 || k >= n) {
        throw InsufficientData("knn_outlier_filter: need 1 <= k < N");
    }

    Eigen::VectorXd knn_dist(n);
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double dx = ds.x[i] - ds.x[j];
            const double dy = ds.y[i] - ds.y[j];
            d2[static_cast<std::size_t>(j)] = dx * dx + dy * dy;
        }
        d2[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();  // exclude self
        std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
        knn_dist[i] = std::sqrt(d2[static_cast<std::size_t>(k - 1)]);
    }

    // nearest-rank quantile of the k-NN distances
    std::vector<double> sorted(knn_dist.data(), knn_dist.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<Eigen::Index>(std::ceil(quantile * static_cast<double>(n)));
    const double threshold = sorted[static_cast<std::size_t>(std::clamp<Eigen::Index>(rank - 1, 0, n - 1))];

    FilterResult out;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (knn_dist[i] > threshold) out.removed.push_back(i);
        else keep.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(keep.size());
    out.kept.x.resize(m);
    out.kept.y.resize(m);
    out.kept.stats = ds.stats;
    if (ds.labels) out.kept.labels = Eigen::VectorXi(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        out.kept.x[i] = ds.x[keep[static_cast<std::size_t>(i)]];
        out.kept.y[i] = ds.y[keep[static_cast<std::size_t>(i)]];
        if (ds.labels) (*out.kept.labels)[i] = (*ds.labels)[keep[static_cast<std::size_t>(i)]];
    }
    return out;
}

double noise_sigma(double x, const NoiseSpec& noise) {
    return std::visit(
        [&](const auto& nz) -> double {
            using T = std::decay_t<decltype(nz)>;
            if constexpr (std::is_same_v<T, ConstantNoise>) {
                return nz.sigma;
            } else {
                const double d = (x - nz.center) / nz.width;
                return nz.floor + (nz.peak - nz.floor) * std::exp(-0.5 * d * d);
            }
        },
        noise);
}

namespace {
// Preset geometry: wind speed sampled on [2, 14] m/s, power as a fraction of
// rated output. Trends ramp between cut-in 2.5 m/s (v = 0) and 8.5 m/s (v = 1).
constexpr double kPresetXMin = 2.0;
constexpr double kPresetXMax = 14.0;
constexpr double kPresetSlope = 1.0 / 6.0;          // alpha2
constexpr double kPresetOffset = -2.5 / 6.0;        // alpha3, cut-in at 2.5 m/s
}  // namespace

SynthConfig three_trend_config(int n_points, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_points = n_points;
    cfg.seed = seed;
    cfg.x_min = kPresetXMin;
    cfg.x_max = kPresetXMax;
    cfg.component_weights = {0.5, 0.3, 0.2};
    cfg.component_specs = {
        {SoftClipMean{1.0, kPresetSlope, kPresetOffset, 11.0}, BellNoise{0.015, 0.045, 5.5, 2.2}},
        {SoftClipMean{0.5, kPresetSlope, kPresetOffset, 29.0}, BellNoise{0.010, 0.028, 5.5, 2.0}},
        {ZeroMean{}, ConstantNoise{0.004}},
    };
    return cfg;
}

SynthConfig four_trend_config(int n_points, std::uint64_t seed) {
    SynthConfig cfg = three_trend_config(n_points, seed);
    cfg.component_weights = {0.4, 0.25, 0.2, 0.15};
    cfg.component_specs = {
        {SoftClipMean{1.0, kPresetSlope, kPresetOffset, 11.0}, BellNoise{0.012, 0.032, 5.5, 2.2}},
        {SoftClipMean{0.8, kPresetSlope, kPresetOffset, 25.0}, BellNoise{0.010, 0.026, 5.5, 2.0}},
        {SoftClipMean{0.5, kPresetSlope, kPresetOffset, 29.0}, BellNoise{0.010, 0.024, 5.5, 2.0}},
        {ZeroMean{}, ConstantNoise{0.004}},
    };
    return cfg;
}

double synthetic_mean(const SynthConfig& cfg, int component, double x) {
    return mean_value(x, cfg.component_specs.at(static_cast<std::size_t>(component)).mean);
}

Dataset generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_points < 1) throw InsufficientData("generate_synthetic: n_points must be >= 1");
    if (cfg.component_weights.size() != cfg.component_specs.size() || cfg.component_specs.empty()) {
        throw DimensionMismatch("generate_synthetic: weights and component specs must align");
    }
    const double wsum = std::accumulate(cfg.component_weights.begin(), cfg.component_weights.end(), 0.0);
    if (std::abs(wsum - 1.0) > 1e-9) {
        throw InvalidSimplex("generate_synthetic: component weights must sum to 1");
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> ux(cfg.x_min, cfg.x_max);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const Eigen::Index n = cfg.n_points;
    Dataset ds;
    ds.x.resize(n);
    ds.y.resize(n);
    ds.labels = Eigen::VectorXi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = ux(rng);
        const double u = u01(rng);
        int k = 0;
        double acc = 0.0;
        for (std::size_t c = 0; c < cfg.component_weights.size(); ++c) {
            acc += cfg.component_weights[c];
            if (u <= acc || c + 1 == cfg.component_weights.size()) {
                k = static_cast<int>(c);
                break;
            }
        }
        const auto& comp = cfg.component_specs[static_cast<std::size_t>(k)];
        ds.x[i] = x;
        ds.y[i] = mean_value(x, comp.mean) + noise_sigma(x, comp.noise) * gauss(rng);
        (*ds.labels)[i] = k;
    }
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
        throw InvalidQuantile("split: train fraction must be in (0, 1)");
    }
    const Eigen::Index n = ds.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    const auto n_train = static_cast<Eigen::Index>(std::floor(train_fraction * static_cast<double>(n)));
    auto take = [&](Eigen::Index begin, Eigen::Index count) {
        Dataset out;
        out.stats = ds.stats;
        out.x.resize(count);
        out.y.resize(count);
        if (ds.labels) out.labels = Eigen::VectorXi(count);
        std::vector<Eigen::Index> sel(idx.begin() + begin, idx.begin() + begin + count);
        std::sort(sel.begin(), sel.end());  // stable order within each part
        for (Eigen::Index i = 0; i < count; ++i) {
            out.x[i] = ds.x[sel[static_cast<std::size_t>(i)]];
            out.y[i] = ds.y[sel[static_cast<std::size_t>(i)]];
            if (ds.labels) (*out.labels)[i] = (*ds.labels)[sel[static_cast<std::size_t>(i)]];
        }
        return out;
    };
    return {take(0, n_train), take(n_train, n - n_train)};
}

std::vector<RawRecord> dataset_to_records(const Dataset& ds) {
    std::vector<RawRecord> out(static_cast<std::size_t>(ds.size()));
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        auto& r = out[static_cast<std::size_t>(i)];
        r.turbine_id = "synthetic";
        r.wind_speed = ds.x[i];
        r.power = ds.y[i];
        if (ds.labels) r.label = (*ds.labels)[i];
    }
    return out;
}

}  // namespace curvemix
