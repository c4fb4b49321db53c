#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "curvemix/data.hpp"
#include "curvemix/logging.hpp"
#include "curvemix/monitoring.hpp"
#include "curvemix/serialize.hpp"

namespace {

using namespace curvemix;
using nlohmann::json;

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct SchemaFlags {
    CsvSchema schema;
    void attach(CLI::App* cmd) {
        cmd->add_option("--col-id", schema.turbine_id, "turbine id column name");
        cmd->add_option("--col-timestamp", schema.timestamp, "timestamp column name");
        cmd->add_option("--col-wind-speed", schema.wind_speed, "wind speed column name");
        cmd->add_option("--col-power", schema.power, "power column name");
        cmd->add_option("--col-label", schema.label, "label column name");
    }
};

Dataset load_dataset(const std::string& path, const CsvSchema& schema, bool do_normalize) {
    const CsvLoadResult r = load_csv(path, schema);
    if (!r.rejected.empty()) {
        log_warn(path + ": rejected " + std::to_string(r.rejected.size()) + " rows");
        for (const auto& d : r.rejected) {
            log_info("  row " + std::to_string(d.row) + ": " + d.message);
        }
    }
    return do_normalize ? normalize(r.records) : dataset_from_records(r.records);
}

/// Apply a model's stored normalization to raw records.
Dataset load_dataset_with_stats(const std::string& path, const CsvSchema& schema,
                                const NormStats& stats) {
    const CsvLoadResult r = load_csv(path, schema);
    if (!r.rejected.empty()) {
        log_warn(path + ": rejected " + std::to_string(r.rejected.size()) + " rows");
    }
    Dataset ds = dataset_from_records(r.records);
    ds.stats = stats;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        ds.x[i] = normalize_x(stats, ds.x[i]);
        ds.y[i] = normalize_y(stats, ds.y[i]);
    }
    return ds;
}

int component_count(const SavedModel& saved) {
    if (std::holds_alternative<OmgpModel>(saved.model)) {
        return std::get<OmgpModel>(saved.model).k();
    }
    return 1;
}

/// Per-point MAP predictive mean/variance for any model kind.
void model_map_predictions(const SavedModel& saved, const Dataset& test, Eigen::VectorXd& mu,
                           Eigen::VectorXd& var, Eigen::VectorXi& map_k) {
    const Eigen::Index m = test.size();
    mu.resize(m);
    var.resize(m);
    map_k.setZero(m);
    if (std::holds_alternative<GpModel>(saved.model)) {
        const auto pred = gp_predict(std::get<GpModel>(saved.model), test.x, true);
        mu = pred.mean;
        var = pred.variance;
    } else if (std::holds_alternative<HetGpModel>(saved.model)) {
        const auto pred = hetgp_predict(std::get<HetGpModel>(saved.model), test.x, true);
        mu = pred.mean;
        var = pred.variance;
    } else {
        const auto& model = std::get<OmgpModel>(saved.model);
        const OmgpPredictions pred = omgp_predict(model, test.x);
        for (Eigen::Index i = 0; i < m; ++i) {
            const PosteriorClass pc = classify_posterior_from(pred, pred.weights, i, test.y[i]);
            map_k[i] = pc.map_component;
            mu[i] = pred.components[static_cast<std::size_t>(pc.map_component)].mean[i];
            var[i] = pred.components[static_cast<std::size_t>(pc.map_component)].variance[i];
        }
    }
}

int run_app(int argc, char** argv) {
    CLI::App app{"Probabilistic power-curve models for curtailed wind data"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "Write a labelled synthetic dataset to CSV");
    std::string gen_preset = "three-trend";
    int gen_n = 9000;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--preset", gen_preset, "three-trend or four-trend")
        ->check(CLI::IsMember({"three-trend", "four-trend"}));
    gen->add_option("--n", gen_n, "number of observations")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output CSV path")->required();

    // ---- filter ----
    auto* filt = app.add_subcommand("filter", "Remove k-NN outliers from a CSV");
    std::string filt_in, filt_out;
    int filt_k = 10;
    double filt_q = 0.995;
    SchemaFlags filt_schema;
    filt->add_option("--in", filt_in, "input CSV")->required();
    filt->add_option("--out", filt_out, "output CSV")->required();
    filt->add_option("--k", filt_k, "neighbour rank")->check(CLI::PositiveNumber);
    filt->add_option("--quantile", filt_q, "distance quantile in (0,1]");
    filt_schema.attach(filt);

    // ---- fit ----
    auto* fit = app.add_subcommand("fit", "Fit a model and write it to JSON");
    std::string fit_kind = "omgp", fit_in, fit_out = "model.json", fit_test_out;
    int fit_k = 3;
    double fit_train_frac = 1.0;
    std::uint64_t fit_seed = 0;
    bool fit_normalize = false;
    SchemaFlags fit_schema;
    OptimizerConfig fit_opt;
    HetGpConfig het_cfg;
    OmgpConfig omgp_cfg;
    fit->add_option("--kind", fit_kind, "gp | hetgp | omgp | omgp_het")
        ->check(CLI::IsMember({"gp", "hetgp", "omgp", "omgp_het"}));
    fit->add_option("--in", fit_in, "input CSV")->required();
    fit->add_option("--out", fit_out, "output model JSON");
    fit->add_option("--k", fit_k, "number of mixture components");
    fit->add_option("--train-frac", fit_train_frac, "train fraction; < 1 splits off a test set");
    fit->add_option("--test-out", fit_test_out, "write the held-out split to this CSV");
    fit->add_option("--seed", fit_seed, "seed for restarts, splits, and responsibilities");
    fit->add_flag("--normalize,!--no-normalize", fit_normalize, "z-score both axes before fitting");
    fit->add_option("--restarts", fit_opt.restarts, "optimizer restarts");
    fit->add_option("--max-iter", fit_opt.max_iter, "optimizer iterations per restart");
    fit->add_option("--tol", fit_opt.tolerance, "relative objective tolerance");
    fit->add_option("--s", het_cfg.noise_samples, "noise-estimate sample count");
    fit->add_option("--max-outer", het_cfg.max_outer, "heteroscedastic outer iterations");
    fit->add_option("--max-inner", omgp_cfg.max_inner, "mean-field iterations per E-step");
    fit->add_option("--max-em", omgp_cfg.max_em, "EM rounds");
    fit->add_option("--het-min-points", omgp_cfg.het_min_points,
                    "minimum MAP points per component for a noise process");
    fit->add_option("--prune", omgp_cfg.prune_threshold,
                    "responsibility threshold for the per-component active set (0 = exact)");
    fit_schema.attach(fit);

    // ---- predict ----
    auto* pred = app.add_subcommand("predict", "Write per-component predictive curves to CSV");
    std::string pred_model, pred_out, pred_grid = "";
    std::string pred_in;
    bool pred_no_noise = false;
    SchemaFlags pred_schema;
    pred->add_option("--model", pred_model, "model JSON")->required();
    pred->add_option("--out", pred_out, "output CSV")->required();
    pred->add_option("--grid", pred_grid, "query grid lo:hi:count (raw units)");
    pred->add_option("--in", pred_in, "query CSV (wind-speed column)");
    pred->add_flag("--no-noise", pred_no_noise, "exclude observation noise from the variance");
    pred_schema.attach(pred);

    // ---- classify ----
    auto* cls = app.add_subcommand("classify", "Posterior component membership per observation");
    std::string cls_model, cls_in, cls_out, cls_simplex;
    SchemaFlags cls_schema;
    cls->add_option("--model", cls_model, "model JSON")->required();
    cls->add_option("--in", cls_in, "input CSV")->required();
    cls->add_option("--out", cls_out, "output CSV")->required();
    cls->add_option("--simplex-out", cls_simplex, "also write 2D simplex coordinates (K = 3)");
    cls_schema.attach(cls);

    // ---- monitor ----
    auto* mon = app.add_subcommand("monitor", "Entropy-based novelty scoring to JSON lines");
    std::string mon_model, mon_in, mon_out;
    double mon_threshold = -1.0;
    SchemaFlags mon_schema;
    mon->add_option("--model", mon_model, "model JSON")->required();
    mon->add_option("--in", mon_in, "input CSV")->required();
    mon->add_option("--out", mon_out, "output JSON-lines file")->required();
    mon->add_option("--threshold", mon_threshold, "entropy threshold (default 0.8 log K)");
    mon_schema.attach(mon);

    // ---- evaluate ----
    auto* eval = app.add_subcommand("evaluate", "NMSE/MSD report against a test CSV");
    std::string eval_model, eval_in, eval_out;
    SchemaFlags eval_schema;
    eval->add_option("--model", eval_model, "model JSON")->required();
    eval->add_option("--in", eval_in, "test CSV")->required();
    eval->add_option("--out", eval_out, "output report JSON")->required();
    eval_schema.attach(eval);

    // ---- crossval ----
    auto* cv = app.add_subcommand("crossval", "Corrected-bound statistics over a range of K");
    std::string cv_in, cv_out;
    int cv_kmin = 1, cv_kmax = 5, cv_repeats = 12;
    std::uint64_t cv_seed = 0;
    bool cv_normalize = false;
    OmgpConfig cv_cfg;
    SchemaFlags cv_schema;
    cv->add_option("--in", cv_in, "input CSV")->required();
    cv->add_option("--out", cv_out, "output CSV of per-K statistics")->required();
    cv->add_option("--k-min", cv_kmin, "smallest K")->check(CLI::PositiveNumber);
    cv->add_option("--k-max", cv_kmax, "largest K")->check(CLI::PositiveNumber);
    cv->add_option("--repeats", cv_repeats, "seeded restarts per K")->check(CLI::PositiveNumber);
    cv->add_option("--seed", cv_seed, "base seed");
    cv->add_flag("--normalize,!--no-normalize", cv_normalize, "z-score before fitting");
    cv->add_option("--max-em", cv_cfg.max_em, "EM rounds per fit");
    cv->add_option("--max-iter", cv_cfg.mstep_opt.max_iter, "M-step iterations");
    cv->add_option("--prune", cv_cfg.prune_threshold, "active-set threshold (0 = exact)");
    cv_schema.attach(cv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (gen->parsed()) {
        const SynthConfig cfg = gen_preset == "three-trend" ? three_trend_config(gen_n, gen_seed)
                                                            : four_trend_config(gen_n, gen_seed);
        const Dataset ds = generate_synthetic(cfg);
        write_csv(gen_out, dataset_to_records(ds), CsvSchema{}, /*with_labels=*/true);
        std::cout << "wrote " << ds.size() << " observations to " << gen_out << "\n";
        return 0;
    }

    if (filt->parsed()) {
        const CsvLoadResult r = load_csv(filt_in, filt_schema.schema);
        Dataset ds = dataset_from_records(r.records);
        const FilterResult res = knn_outlier_filter(ds, filt_k, filt_q);
        write_csv(filt_out, dataset_to_records(res.kept), filt_schema.schema,
                  res.kept.labels.has_value());
        std::cout << "removed " << res.removed.size() << " of " << ds.size() << " points ("
                  << r.rejected.size() << " rows rejected at parse)\n";
        return 0;
    }

    if (fit->parsed()) {
        if (fit_k < 1) throw CLI::ValidationError("--k", "must be >= 1");
        if (fit_train_frac <= 0.0 || fit_train_frac > 1.0) {
            throw CLI::ValidationError("--train-frac", "must be in (0, 1]");
        }
        Dataset all = load_dataset(fit_in, fit_schema.schema, fit_normalize);
        Dataset train = all;
        if (fit_train_frac < 1.0) {
            auto [tr, te] = split(all, fit_train_frac, fit_seed);
            train = std::move(tr);
            if (!fit_test_out.empty()) {
                Dataset raw_test = te;
                raw_test.x = denormalize_x(te, te.x);
                raw_test.y = denormalize_y(te, te.y);
                write_csv(fit_test_out, dataset_to_records(raw_test), CsvSchema{},
                          raw_test.labels.has_value());
            }
        }

        fit_opt.seed = fit_seed;
        json meta{{"seed", fit_seed}, {"created_at", timestamp_now()}, {"kind", fit_kind},
                  {"n_train", train.size()}};

        if (fit_kind == "gp") {
            const GpFitResult res = fit_gp_detailed(train, default_gp_prior(train), fit_opt);
            meta["nlml"] = res.nlml;
            save_model(res.model, train.stats, meta, fit_out);
            std::cout << "fit gp: nlml " << res.nlml << " -> " << fit_out << "\n";
        } else if (fit_kind == "hetgp") {
            het_cfg.seed = fit_seed;
            het_cfg.opt = fit_opt;
            const HetGpModel model = fit_hetgp(train, default_gp_prior(train), het_cfg);
            meta["history"] = model.history;
            save_model(model, train.stats, meta, fit_out);
            std::cout << "fit hetgp: joint log likelihood " << model.history.back() << " -> "
                      << fit_out << "\n";
        } else {
            omgp_cfg.seed = fit_seed;
            omgp_cfg.mstep_opt.max_iter = fit_opt.max_iter;
            omgp_cfg.mstep_opt.tolerance = fit_opt.tolerance;
            omgp_cfg.het_noise_samples = het_cfg.noise_samples;
            OmgpModel model = fit_omgp(train, default_omgp_prior(fit_k, train), omgp_cfg);
            if (fit_kind == "omgp_het") {
                model = heteroscedastic_update(std::move(model), omgp_cfg);
            }
            meta["bound"] = model.bound;
            meta["em_bounds"] = model.em_bounds;
            save_model(model, train.stats, meta, fit_out);
            std::cout << "fit " << fit_kind << ": final bound " << model.bound << " -> " << fit_out
                      << "\n";
        }
        return 0;
    }

    if (pred->parsed()) {
        const SavedModel saved = load_model(pred_model);
        Eigen::VectorXd q_raw;
        if (!pred_grid.empty()) {
            double lo, hi;
            int count;
            if (std::sscanf(pred_grid.c_str(), "%lf:%lf:%d", &lo, &hi, &count) != 3 || count < 2) {
                throw CLI::ValidationError("--grid", "expected lo:hi:count");
            }
            q_raw = Eigen::VectorXd::LinSpaced(count, lo, hi);
        } else if (!pred_in.empty()) {
            const CsvLoadResult r = load_csv(pred_in, pred_schema.schema);
            q_raw.resize(static_cast<Eigen::Index>(r.records.size()));
            for (std::size_t i = 0; i < r.records.size(); ++i) {
                q_raw[static_cast<Eigen::Index>(i)] = r.records[i].wind_speed;
            }
        } else {
            throw CLI::ValidationError("predict", "one of --grid or --in is required");
        }
        Eigen::VectorXd q(q_raw.size());
        for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = normalize_x(saved.stats, q_raw[i]);

        std::ofstream out(pred_out);
        if (!out) throw IoError("cannot write " + pred_out);
        out.precision(12);
        const bool noise = !pred_no_noise;
        if (std::holds_alternative<OmgpModel>(saved.model)) {
            const auto& model = std::get<OmgpModel>(saved.model);
            const OmgpPredictions p = omgp_predict(model, q);
            out << "wind_speed";
            for (int k = 0; k < model.k(); ++k) {
                out << ",mean_" << k << ",sd_" << k << ",lo3_" << k << ",hi3_" << k;
            }
            out << "\n";
            for (Eigen::Index i = 0; i < q.size(); ++i) {
                out << q_raw[i];
                for (int k = 0; k < model.k(); ++k) {
                    const auto& c = p.components[static_cast<std::size_t>(k)];
                    const double mu = c.mean[i] * saved.stats.y_std + saved.stats.y_mean;
                    const double sd = std::sqrt(c.variance[i]) * saved.stats.y_std;
                    out << ',' << mu << ',' << sd << ',' << mu - 3 * sd << ',' << mu + 3 * sd;
                }
                out << "\n";
            }
        } else {
            PredictiveDistribution p;
            if (std::holds_alternative<GpModel>(saved.model)) {
                p = gp_predict(std::get<GpModel>(saved.model), q, noise);
            } else {
                p = hetgp_predict(std::get<HetGpModel>(saved.model), q, noise);
            }
            out << "wind_speed,mean_0,sd_0,lo3_0,hi3_0\n";
            for (Eigen::Index i = 0; i < q.size(); ++i) {
                const double mu = p.mean[i] * saved.stats.y_std + saved.stats.y_mean;
                const double sd = std::sqrt(p.variance[i]) * saved.stats.y_std;
                out << q_raw[i] << ',' << mu << ',' << sd << ',' << mu - 3 * sd << ','
                    << mu + 3 * sd << "\n";
            }
        }
        std::cout << "wrote " << q.size() << " query rows to " << pred_out << "\n";
        return 0;
    }

    if (cls->parsed()) {
        const SavedModel saved = load_model(cls_model);
        if (!std::holds_alternative<OmgpModel>(saved.model)) {
            throw CLI::ValidationError("--model", "classify requires a mixture model");
        }
        const auto& model = std::get<OmgpModel>(saved.model);
        const Dataset ds = load_dataset_with_stats(cls_in, cls_schema.schema, saved.stats);
        const OmgpPredictions p = omgp_predict(model, ds.x);

        std::ofstream out(cls_out);
        if (!out) throw IoError("cannot write " + cls_out);
        out.precision(12);
        out << "wind_speed,power";
        for (int k = 0; k < model.k(); ++k) out << ",p_" << k;
        out << ",map_component\n";
        std::ofstream simplex;
        if (!cls_simplex.empty()) {
            if (model.k() != 3) {
                throw CLI::ValidationError("--simplex-out", "simplex output requires K = 3");
            }
            simplex.open(cls_simplex);
            simplex.precision(12);
            simplex << "u,v,map_component\n";
        }
        for (Eigen::Index i = 0; i < ds.size(); ++i) {
            const PosteriorClass pc = classify_posterior_from(p, p.weights, i, ds.y[i]);
            out << denormalize_x(ds, ds.x.segment(i, 1))[0] << ','
                << denormalize_y(ds, ds.y.segment(i, 1))[0];
            for (int k = 0; k < model.k(); ++k) out << ',' << pc.probabilities[k];
            out << ',' << pc.map_component << "\n";
            if (simplex.is_open()) {
                const Eigen::Vector2d uv = simplex_coords(pc.probabilities);
                simplex << uv[0] << ',' << uv[1] << ',' << pc.map_component << "\n";
            }
        }
        std::cout << "classified " << ds.size() << " observations -> " << cls_out << "\n";
        return 0;
    }

    if (mon->parsed()) {
        const SavedModel saved = load_model(mon_model);
        if (!std::holds_alternative<OmgpModel>(saved.model)) {
            throw CLI::ValidationError("--model", "monitor requires a mixture model");
        }
        const auto& model = std::get<OmgpModel>(saved.model);
        const Dataset ds = load_dataset_with_stats(mon_in, mon_schema.schema, saved.stats);
        const double threshold =
            mon_threshold >= 0.0 ? mon_threshold : 0.8 * std::log(static_cast<double>(model.k()));
        std::vector<std::pair<double, double>> obs;
        obs.reserve(static_cast<std::size_t>(ds.size()));
        for (Eigen::Index i = 0; i < ds.size(); ++i) obs.emplace_back(ds.x[i], ds.y[i]);
        const auto records = score_stream(model, obs, threshold);

        std::ofstream out(mon_out);
        if (!out) throw IoError("cannot write " + mon_out);
        int flagged = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            json row{{"entropy", records[i].entropy},
                     {"flagged", records[i].flagged},
                     {"map_component", records[i].map_component},
                     {"posterior", std::vector<double>(records[i].posterior.data(),
                                                       records[i].posterior.data() +
                                                           records[i].posterior.size())},
                     {"wind_speed", obs[i].first * saved.stats.x_std + saved.stats.x_mean},
                     {"power", obs[i].second * saved.stats.y_std + saved.stats.y_mean}};
            out << row.dump() << "\n";
            if (records[i].flagged) ++flagged;
        }
        std::cout << "scored " << records.size() << " observations, flagged " << flagged
                  << " (threshold " << threshold << ") -> " << mon_out << "\n";
        return 0;
    }

    if (eval->parsed()) {
        const SavedModel saved = load_model(eval_model);
        const Dataset test = load_dataset_with_stats(eval_in, eval_schema.schema, saved.stats);
        Eigen::VectorXd mu, var;
        Eigen::VectorXi map_k;
        model_map_predictions(saved, test, mu, var, map_k);

        EvaluationReport rep;
        rep.n_test = test.size();
        rep.nmse_percent = nmse_from_predictions(mu, test.y);
        rep.msd = msd_from_predictions(mu, var, test.y);
        rep.per_component_counts = Eigen::VectorXi::Zero(component_count(saved));
        for (Eigen::Index i = 0; i < test.size(); ++i) rep.per_component_counts[map_k[i]] += 1;

        json doc{{"nmse_percent", rep.nmse_percent},
                 {"msd", rep.msd},
                 {"n_test", rep.n_test},
                 {"per_component_counts",
                  std::vector<int>(rep.per_component_counts.data(),
                                   rep.per_component_counts.data() + rep.per_component_counts.size())}};
        std::ofstream out(eval_out);
        if (!out) throw IoError("cannot write " + eval_out);
        out << doc.dump(2) << "\n";
        std::cout << "nmse_percent " << rep.nmse_percent << ", msd " << rep.msd << " -> "
                  << eval_out << "\n";
        return 0;
    }

    if (cv->parsed()) {
        if (cv_kmax < cv_kmin) throw CLI::ValidationError("--k-max", "must be >= --k-min");
        const Dataset ds = load_dataset(cv_in, cv_schema.schema, cv_normalize);
        std::vector<int> ks;
        for (int k = cv_kmin; k <= cv_kmax; ++k) ks.push_back(k);
        const CvResult res = cross_validate_k(ds, default_omgp_prior, ks, cv_repeats, cv_seed, cv_cfg);

        std::ofstream out(cv_out);
        if (!out) throw IoError("cannot write " + cv_out);
        out.precision(12);
        out << "k,mean_bound,std_bound\n";
        for (const auto& e : res.entries) {
            out << e.k << ',' << e.mean_bound << ',' << e.std_bound << "\n";
        }
        std::cout << "selected k = " << res.selected_k << " -> " << cv_out << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_app(argc, argv);
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
