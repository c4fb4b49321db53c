#include "curvemix/serialize.hpp"

#include <fstream>

namespace curvemix {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::VectorXd vec_from_json(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

Eigen::MatrixXd mat_from_json(const json& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n == 0) return {};
    const auto k = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
        }
    }
    return m;
}

json mean_to_json(const MeanSpec& mean) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ZeroMean>) {
                return {{"type", "zero"}};
            } else if constexpr (std::is_same_v<T, ConstantMean>) {
                return {{"type", "constant"}, {"value", m.value}};
            } else {
                return {{"type", "soft_clip"}, {"alpha1", m.alpha1}, {"alpha2", m.alpha2},
                        {"alpha3", m.alpha3}, {"beta", m.beta}};
            }
        },
        mean);
}

MeanSpec mean_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "zero") return ZeroMean{};
    if (type == "constant") return ConstantMean{j.at("value").get<double>()};
    if (type == "soft_clip") {
        return SoftClipMean{j.at("alpha1").get<double>(), j.at("alpha2").get<double>(),
                            j.at("alpha3").get<double>(), j.at("beta").get<double>()};
    }
    throw CorruptModel("unknown mean type '" + type + "'");
}

json kernel_to_json(const KernelSpec& kernel) {
    return std::visit(
        [](const auto& k) -> json {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SquaredExponentialKernel>) {
                return {{"type", "squared_exponential"}, {"process_std", k.process_std},
                        {"length_scale", k.length_scale}};
            } else {
                return {{"type", "constant"}, {"level", k.level}};
            }
        },
        kernel);
}

KernelSpec kernel_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "squared_exponential") {
        return SquaredExponentialKernel{j.at("process_std").get<double>(),
                                        j.at("length_scale").get<double>()};
    }
    if (type == "constant") return ConstantKernel{j.at("level").get<double>()};
    throw CorruptModel("unknown kernel type '" + type + "'");
}

json stats_to_json(const NormStats& s) {
    return {{"x_mean", s.x_mean}, {"x_std", s.x_std}, {"y_mean", s.y_mean}, {"y_std", s.y_std}};
}

NormStats stats_from_json(const json& j) {
    return {j.at("x_mean").get<double>(), j.at("x_std").get<double>(), j.at("y_mean").get<double>(),
            j.at("y_std").get<double>()};
}

json noise_process_to_json(const NoiseProcess& np) {
    return {{"mean_level", np.mean_level},
            {"process_std", np.kernel.process_std},
            {"length_scale", np.kernel.length_scale},
            {"fit_noise_std", np.fit_noise_std},
            {"train_x", vec_to_json(np.train_x)},
            {"train_g", vec_to_json(np.train_g)}};
}

NoiseProcess noise_process_from_json(const json& j) {
    NoiseProcess np;
    np.mean_level = j.at("mean_level").get<double>();
    np.kernel = SquaredExponentialKernel{j.at("process_std").get<double>(),
                                         j.at("length_scale").get<double>()};
    np.fit_noise_std = j.at("fit_noise_std").get<double>();
    np.train_x = vec_from_json(j.at("train_x"));
    np.train_g = vec_from_json(j.at("train_g"));
    if (np.train_x.size() > 0) {
        Eigen::MatrixXd a = gram_matrix(np.train_x, np.train_x, KernelSpec{np.kernel});
        a.diagonal().array() += np.fit_noise_std * np.fit_noise_std;
        const double budget = 1e-4 * std::max(a.diagonal().mean(), 1e-12);
        np.chol = cholesky_factor(a, budget);
        np.weights = solve_spd(np.chol, Eigen::VectorXd(np.train_g.array() - np.mean_level));
    }
    return np;
}

json config_to_json(const OmgpConfig& c) {
    return {{"max_inner", c.max_inner},
            {"max_em", c.max_em},
            {"inner_tol", c.inner_tol},
            {"em_tol", c.em_tol},
            {"seed", c.seed},
            {"het_min_points", c.het_min_points},
            {"resp_floor", c.resp_floor},
            {"prune_threshold", c.prune_threshold},
            {"het_noise_samples", c.het_noise_samples}};
}

OmgpConfig config_from_json(const json& j) {
    OmgpConfig c;
    c.max_inner = j.at("max_inner").get<int>();
    c.max_em = j.at("max_em").get<int>();
    c.inner_tol = j.at("inner_tol").get<double>();
    c.em_tol = j.at("em_tol").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.het_min_points = j.at("het_min_points").get<int>();
    c.resp_floor = j.at("resp_floor").get<double>();
    c.prune_threshold = j.at("prune_threshold").get<double>();
    c.het_noise_samples = j.at("het_noise_samples").get<int>();
    return c;
}

void write_file(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path);
}

json model_header(ModelKind kind, const NormStats& stats, const json& metadata) {
    json doc;
    doc["schema_version"] = kModelSchemaVersion;
    doc["model_kind"] = model_kind_name(kind);
    doc["normalization"] = stats_to_json(stats);
    doc["metadata"] = metadata.is_null() ? json::object() : metadata;
    return doc;
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Gp: return "gp";
        case ModelKind::HetGp: return "hetgp";
        case ModelKind::Omgp: return "omgp";
        default: return "omgp_het";
    }
}

void save_model(const GpModel& model, const NormStats& stats, const json& metadata,
                const std::string& path) {
    json doc = model_header(ModelKind::Gp, stats, metadata);
    doc["model"] = {{"mean", mean_to_json(model.prior.mean)},
                    {"kernel", kernel_to_json(model.prior.kernel)},
                    {"noise_std", model.prior.noise_std},
                    {"train_x", vec_to_json(model.train_x)},
                    {"train_y", vec_to_json(model.train_y)}};
    write_file(doc, path);
}

void save_model(const HetGpModel& model, const NormStats& stats, const json& metadata,
                const std::string& path) {
    json doc = model_header(ModelKind::HetGp, stats, metadata);
    doc["model"] = {{"mean", mean_to_json(model.prior.mean)},
                    {"kernel", kernel_to_json(model.prior.kernel)},
                    {"noise_std", model.prior.noise_std},
                    {"train_x", vec_to_json(model.train_x)},
                    {"train_y", vec_to_json(model.train_y)},
                    {"noise_process", noise_process_to_json(model.noise_process)}};
    write_file(doc, path);
}

void save_model(const OmgpModel& model, const NormStats& stats, const json& metadata,
                const std::string& path) {
    const ModelKind kind = model.heteroscedastic() ? ModelKind::OmgpHet : ModelKind::Omgp;
    json doc = model_header(kind, stats, metadata);
    json components = json::array();
    for (const auto& [mean, kernel] : model.prior.component_priors) {
        components.push_back({{"mean", mean_to_json(mean)}, {"kernel", kernel_to_json(kernel)}});
    }
    json m = {{"k", model.prior.k_components},
              {"components", std::move(components)},
              {"noise_std", model.prior.shared_noise_std},
              {"train_x", vec_to_json(model.train_x)},
              {"train_y", vec_to_json(model.train_y)},
              {"resp", mat_to_json(model.resp)},
              {"config", config_to_json(model.config)}};
    m["train_prior_pi"] =
        model.prior.train_prior_pi.size() == 0 ? json("uniform") : mat_to_json(model.prior.train_prior_pi);
    m["query_prior_pi"] =
        model.prior.query_prior_pi.size() == 0 ? json("uniform") : vec_to_json(model.prior.query_prior_pi);
    if (model.heteroscedastic()) {
        json nps = json::array();
        for (const auto& np : model.noise_processes) {
            nps.push_back(np ? noise_process_to_json(*np) : json(nullptr));
        }
        m["noise_processes"] = std::move(nps);
    }
    doc["model"] = std::move(m);
    write_file(doc, path);
}

SavedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw CorruptModel(path + ": " + e.what());
    }

    try {
        if (!doc.contains("schema_version")) throw CorruptModel(path + ": missing schema_version");
        const int version = doc.at("schema_version").get<int>();
        if (version != kModelSchemaVersion) {
            throw SchemaVersionMismatch(path + ": schema_version " + std::to_string(version) +
                                        ", expected " + std::to_string(kModelSchemaVersion));
        }
        SavedModel out;
        out.stats = stats_from_json(doc.at("normalization"));
        out.metadata = doc.value("metadata", json::object());
        const std::string kind = doc.at("model_kind").get<std::string>();
        const json& m = doc.at("model");

        if (kind == "gp") {
            out.kind = ModelKind::Gp;
            GpPrior prior{mean_from_json(m.at("mean")), kernel_from_json(m.at("kernel")),
                          m.at("noise_std").get<double>()};
            out.model = make_gp_model(prior, vec_from_json(m.at("train_x")),
                                      vec_from_json(m.at("train_y")));
        } else if (kind == "hetgp") {
            out.kind = ModelKind::HetGp;
            GpPrior prior{mean_from_json(m.at("mean")), kernel_from_json(m.at("kernel")),
                          m.at("noise_std").get<double>()};
            NoiseProcess np = noise_process_from_json(m.at("noise_process"));
            const Eigen::VectorXd x = vec_from_json(m.at("train_x"));
            const Eigen::VectorXd y = vec_from_json(m.at("train_y"));
            const Eigen::VectorXd r = predict_noise(np, x).cwiseMax(1e-8);
            out.model = make_hetgp_model(prior, x, y, r, std::move(np));
        } else if (kind == "omgp" || kind == "omgp_het") {
            out.kind = kind == "omgp" ? ModelKind::Omgp : ModelKind::OmgpHet;
            OmgpModel model;
            model.prior.k_components = m.at("k").get<int>();
            for (const auto& comp : m.at("components")) {
                model.prior.component_priors.emplace_back(mean_from_json(comp.at("mean")),
                                                          kernel_from_json(comp.at("kernel")));
            }
            model.prior.shared_noise_std = m.at("noise_std").get<double>();
            if (!m.at("train_prior_pi").is_string()) {
                model.prior.train_prior_pi = mat_from_json(m.at("train_prior_pi"));
            }
            if (!m.at("query_prior_pi").is_string()) {
                model.prior.query_prior_pi = vec_from_json(m.at("query_prior_pi"));
            }
            model.train_x = vec_from_json(m.at("train_x"));
            model.train_y = vec_from_json(m.at("train_y"));
            model.resp = mat_from_json(m.at("resp"));
            model.config = config_from_json(m.at("config"));
            const double shared_var =
                model.prior.shared_noise_std * model.prior.shared_noise_std;
            model.noise_var =
                Eigen::MatrixXd::Constant(model.train_x.size(), model.prior.k_components, shared_var);
            if (kind == "omgp_het") {
                const json& nps = m.at("noise_processes");
                if (static_cast<int>(nps.size()) != model.prior.k_components) {
                    throw CorruptModel(path + ": noise_processes length mismatch");
                }
                model.noise_processes.resize(nps.size());
                for (std::size_t c = 0; c < nps.size(); ++c) {
                    if (!nps[c].is_null()) {
                        model.noise_processes[c] = noise_process_from_json(nps[c]);
                        model.noise_var.col(static_cast<Eigen::Index>(c)) =
                            predict_noise(*model.noise_processes[c], model.train_x).cwiseMax(1e-8);
                    }
                }
            }
            refresh_omgp_state(model);
            out.model = std::move(model);
        } else {
            throw CorruptModel(path + ": unknown model_kind '" + kind + "'");
        }
        return out;
    } catch (const json::exception& e) {
        throw CorruptModel(path + ": " + e.what());
    }
}

}  // namespace curvemix
