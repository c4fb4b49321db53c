#ifndef CURVEMIX_SERIALIZE_HPP
#define CURVEMIX_SERIALIZE_HPP

#include <string>
#include <variant>

#include "json.hpp"

#include "curvemix/hetgp.hpp"
#include "curvemix/omgp.hpp"

namespace curvemix {

inline constexpr int kModelSchemaVersion = 1;

enum class ModelKind { Gp, HetGp, Omgp, OmgpHet };

std::string model_kind_name(ModelKind kind);

struct SavedModel {
    ModelKind kind = ModelKind::Gp;
    NormStats stats;
    std::variant<GpModel, HetGpModel, OmgpModel> model;
    nlohmann::json metadata;
};

/// Canonical JSON (sorted keys); timestamps and traces live in a separate
/// metadata block so the model section is byte-stable for a given fit.
void save_model(const GpModel& model, const NormStats& stats, const nlohmann::json& metadata,
                const std::string& path);
void save_model(const HetGpModel& model, const NormStats& stats, const nlohmann::json& metadata,
                const std::string& path);
void save_model(const OmgpModel& model, const NormStats& stats, const nlohmann::json& metadata,
                const std::string& path);

/// Rebuilds factorizations and cached weights; loaded models reproduce the
/// original predictions exactly.
SavedModel load_model(const std::string& path);

}  // namespace curvemix

#endif
