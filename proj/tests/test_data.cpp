#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "curvemix/data.hpp"

using namespace curvemix;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/curvemix_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
    void write(const std::string& content) {
        std::ofstream out(path);
        out << content;
    }
};

}  // namespace

TEST_CASE("load_csv parses a valid row verbatim") {
    TempFile f("valid.csv");
    f.write("turbine_id,timestamp,wind_speed,power\nT1,2020-01-01T00:00:00Z,8.2,1450.0\n");
    const CsvLoadResult r = load_csv(f.path, CsvSchema{});
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].turbine_id == "T1");
    CHECK(r.records[0].timestamp == "2020-01-01T00:00:00Z");
    CHECK(r.records[0].wind_speed == 8.2);
    CHECK(r.records[0].power == 1450.0);
    CHECK(r.rejected.empty());
}

TEST_CASE("load_csv on an empty file with header returns an empty list") {
    TempFile f("empty.csv");
    f.write("turbine_id,timestamp,wind_speed,power\n");
    CHECK(load_csv(f.path, CsvSchema{}).records.empty());
}

TEST_CASE("load_csv rejects malformed rows but keeps the remainder") {
    TempFile f("partial.csv");
    f.write(
        "turbine_id,timestamp,wind_speed,power\n"
        "T1,,3.0,100.0\n"
        "T1,,oops,100.0\n"
        "T1,,-2.0,100.0\n"
        "T1,,4.0,50.0\n");
    const CsvLoadResult r = load_csv(f.path, CsvSchema{});
    CHECK(r.records.size() == 2);
    REQUIRE(r.rejected.size() == 2);
    CHECK(r.rejected[0].row == 2);
    CHECK(r.rejected[1].row == 3);
}

TEST_CASE("load_csv strict mode throws ParseError with the row number") {
    TempFile f("strict.csv");
    f.write("turbine_id,timestamp,wind_speed,power\nT1,,bad,1.0\n");
    try {
        load_csv(f.path, CsvSchema{}, /*strict=*/true);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 1);
    }
}

TEST_CASE("load_csv errors: missing file and missing columns") {
    CHECK_THROWS_AS(load_csv("/tmp/curvemix_does_not_exist.csv", CsvSchema{}), FileNotFound);
    TempFile f("badschema.csv");
    f.write("a,b\n1,2\n");
    CHECK_THROWS_AS(load_csv(f.path, CsvSchema{}), SchemaMismatch);
}

TEST_CASE("load_csv honors a custom column mapping and labels") {
    TempFile f("mapped.csv");
    f.write("id,ws,p,label\nT7,3.5,0.4,2\n");
    CsvSchema schema;
    schema.turbine_id = "id";
    schema.wind_speed = "ws";
    schema.power = "p";
    const CsvLoadResult r = load_csv(f.path, schema);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].label.value() == 2);
}

TEST_CASE("normalize produces zero mean and unit std on both axes") {
    std::vector<RawRecord> recs;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(5.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        recs.push_back({"T", "", std::abs(nd(rng)), nd(rng) * 3.0 - 1.0, std::nullopt});
    }
    const Dataset ds = normalize(recs);
    CHECK(std::abs(ds.x.mean()) < 1e-10);
    CHECK(std::abs(ds.y.mean()) < 1e-10);
    const auto n = static_cast<double>(ds.size());
    CHECK(std::sqrt(ds.x.squaredNorm() / n) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::sqrt(ds.y.squaredNorm() / n) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("normalize and denormalize round trip") {
    std::vector<RawRecord> recs;
    for (int i = 0; i < 20; ++i) {
        recs.push_back({"T", "", 2.0 + 0.5 * i, 100.0 * i - 30.0, std::nullopt});
    }
    const Dataset ds = normalize(recs);
    const Eigen::VectorXd x_raw = denormalize_x(ds, ds.x);
    const Eigen::VectorXd y_raw = denormalize_y(ds, ds.y);
    for (int i = 0; i < 20; ++i) {
        CHECK(x_raw[i] == doctest::Approx(recs[static_cast<std::size_t>(i)].wind_speed).epsilon(1e-10));
        CHECK(y_raw[i] == doctest::Approx(recs[static_cast<std::size_t>(i)].power).epsilon(1e-10));
    }
}

TEST_CASE("normalize maps a two-point set to plus/minus one") {
    std::vector<RawRecord> recs = {{"T", "", 0.0, 0.0, std::nullopt},
                                   {"T", "", 2.0, 2.0, std::nullopt}};
    const Dataset ds = normalize(recs);
    CHECK(ds.x[0] == doctest::Approx(-1.0));
    CHECK(ds.x[1] == doctest::Approx(1.0));
}

TEST_CASE("normalize rejects degenerate axes") {
    std::vector<RawRecord> one = {{"T", "", 1.0, 1.0, std::nullopt}};
    CHECK_THROWS_AS(normalize(one), DegenerateAxis);
    std::vector<RawRecord> flat = {{"T", "", 1.0, 5.0, std::nullopt},
                                   {"T", "", 1.0, 6.0, std::nullopt}};
    CHECK_THROWS_AS(normalize(flat), DegenerateAxis);
}

TEST_CASE("knn filter with quantile 1.0 removes nothing") {
    Dataset ds;
    ds.x.resize(50);
    ds.y.resize(50);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        ds.x[i] = u(rng);
        ds.y[i] = u(rng);
    }
    const FilterResult r = knn_outlier_filter(ds, 3, 1.0);
    CHECK(r.removed.empty());
    CHECK(r.kept.size() == 50);
}

TEST_CASE("knn filter removes exactly a constructed far point") {
    Dataset ds;
    const int side = 10;  // 10x10 grid, spacing 1
    ds.x.resize(side * side + 1);
    ds.y.resize(side * side + 1);
    int idx = 0;
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            ds.x[idx] = i;
            ds.y[idx] = j;
            ++idx;
        }
    }
    ds.x[idx] = 5.0;
    ds.y[idx] = 9.0 + 10.0;  // ten grid spacings above the grid
    const FilterResult r = knn_outlier_filter(ds, 3, 0.99);
    REQUIRE(r.removed.size() == 1);
    CHECK(r.removed[0] == idx);
}

TEST_CASE("knn filter on a uniform grid removes at most ceil(0.01 N) points") {
    Dataset ds;
    const int n = 100;
    ds.x.resize(n);
    ds.y.resize(n);
    for (int i = 0; i < n; ++i) {
        ds.x[i] = i;
        ds.y[i] = 0.0;
    }
    const FilterResult r = knn_outlier_filter(ds, 3, 0.99);
    CHECK(static_cast<int>(r.removed.size()) <= 1);
}

TEST_CASE("knn filter is permutation invariant") {
    Dataset ds;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    const int n = 60;
    ds.x.resize(n);
    ds.y.resize(n);
    for (int i = 0; i < n; ++i) {
        ds.x[i] = nd(rng);
        ds.y[i] = nd(rng);
    }
    ds.x[7] += 40.0;  // outliers
    ds.y[23] -= 35.0;

    const FilterResult r1 = knn_outlier_filter(ds, 4, 0.95);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Dataset shuffled;
    shuffled.x.resize(n);
    shuffled.y.resize(n);
    for (int i = 0; i < n; ++i) {
        shuffled.x[i] = ds.x[perm[static_cast<std::size_t>(i)]];
        shuffled.y[i] = ds.y[perm[static_cast<std::size_t>(i)]];
    }
    const FilterResult r2 = knn_outlier_filter(shuffled, 4, 0.95);

    std::set<std::pair<double, double>> s1, s2;
    for (auto i : r1.removed) s1.insert({ds.x[i], ds.y[i]});
    for (auto i : r2.removed) s2.insert({shuffled.x[i], shuffled.y[i]});
    CHECK(s1 == s2);
}

TEST_CASE("knn filter validates its arguments") {
    Dataset ds;
    ds.x = Eigen::VectorXd::LinSpaced(10, 0, 1);
    ds.y = ds.x;
    CHECK_THROWS_AS(knn_outlier_filter(ds, 3, 0.0), InvalidQuantile);
    CHECK_THROWS_AS(knn_outlier_filter(ds, 3, 1.5), InvalidQuantile);
    CHECK_THROWS_AS(knn_outlier_filter(ds, 10, 0.5), InsufficientData);
}

TEST_CASE("generate_synthetic is deterministic for a fixed seed") {
    const SynthConfig cfg = three_trend_config(500, 42);
    const Dataset a = generate_synthetic(cfg);
    const Dataset b = generate_synthetic(cfg);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((*a.labels - *b.labels).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("generate_synthetic with a one-hot weight vector uses one component") {
    SynthConfig cfg = three_trend_config(200, 1);
    cfg.component_weights = {1.0, 0.0, 0.0};
    const Dataset ds = generate_synthetic(cfg);
    CHECK((ds.labels->array() == 0).all());
}

TEST_CASE("generate_synthetic proportions match the weights") {
    SynthConfig cfg = three_trend_config(10000, 7);
    cfg.component_weights = {0.5, 0.3, 0.2};
    const Dataset ds = generate_synthetic(cfg);
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (Eigen::Index i = 0; i < ds.size(); ++i) counts[(*ds.labels)[i]] += 1.0;
    counts /= static_cast<double>(ds.size());
    CHECK(std::abs(counts[0] - 0.5) < 0.02);
    CHECK(std::abs(counts[1] - 0.3) < 0.02);
    CHECK(std::abs(counts[2] - 0.2) < 0.02);
}

TEST_CASE("generate_synthetic residual spread matches a constant sigma") {
    SynthConfig cfg = three_trend_config(100000, 13);
    cfg.component_weights = {1.0, 0.0, 0.0};
    cfg.component_specs[0].noise = ConstantNoise{0.05};
    const Dataset ds = generate_synthetic(cfg);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const double r = ds.y[i] - synthetic_mean(cfg, 0, ds.x[i]);
        ss += r * r;
    }
    const double sd = std::sqrt(ss / static_cast<double>(ds.size()));
    CHECK(std::abs(sd - 0.05) / 0.05 < 0.03);
}

TEST_CASE("split sizes follow the floor rule") {
    Dataset ds;
    ds.x = Eigen::VectorXd::LinSpaced(8900, 0, 1);
    ds.y = ds.x;
    const auto [train, test] = split(ds, 1.0 / 3.0, 5);
    CHECK(train.size() == 2966);
    CHECK(test.size() == 5934);
}

TEST_CASE("split partitions the set with labels travelling along") {
    const Dataset ds = generate_synthetic(three_trend_config(100, 3));
    const auto [train, test] = split(ds, 0.3, 11);
    CHECK(train.size() + test.size() == ds.size());

    std::multiset<std::tuple<double, double, int>> all, parts;
    for (Eigen::Index i = 0; i < ds.size(); ++i) all.insert({ds.x[i], ds.y[i], (*ds.labels)[i]});
    for (Eigen::Index i = 0; i < train.size(); ++i) {
        parts.insert({train.x[i], train.y[i], (*train.labels)[i]});
    }
    for (Eigen::Index i = 0; i < test.size(); ++i) {
        parts.insert({test.x[i], test.y[i], (*test.labels)[i]});
    }
    CHECK(all == parts);
}

TEST_CASE("split is deterministic for a fixed seed") {
    const Dataset ds = generate_synthetic(three_trend_config(100, 3));
    const auto [a_train, a_test] = split(ds, 0.5, 9);
    const auto [b_train, b_test] = split(ds, 0.5, 9);
    CHECK((a_train.x - b_train.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a_test.y - b_test.y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csv write/load round trip keeps synthetic labels") {
    TempFile f("roundtrip.csv");
    const Dataset ds = generate_synthetic(three_trend_config(50, 21));
    write_csv(f.path, dataset_to_records(ds), CsvSchema{}, /*with_labels=*/true);
    const CsvLoadResult r = load_csv(f.path, CsvSchema{});
    REQUIRE(r.records.size() == 50);
    CHECK(r.rejected.empty());
    for (int i = 0; i < 50; ++i) {
        CHECK(r.records[static_cast<std::size_t>(i)].wind_speed == ds.x[i]);
        CHECK(r.records[static_cast<std::size_t>(i)].power == ds.y[i]);
        CHECK(r.records[static_cast<std::size_t>(i)].label.value() == (*ds.labels)[i]);
    }
}
