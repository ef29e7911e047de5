#pragma once

#include "semfit/model.hpp"
#include "semfit/simulation.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>

namespace semfit {

/// Malformed model or plan document; the message names the offending field.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model document:
///   observed   [names]
///   factors    [names]
///   loadings   [{var, factor, value?, start?}]   unlisted loadings are fixed at 0
///   factor_cov [{pair: [f, g], value?, start?}]  unlisted: diagonal fixed 1, off-diagonal fixed 0
///   unique_cov [{pair: [x, y], value?, start?}]  unlisted: diagonal free, off-diagonal fixed 0
/// An entry with `value` is fixed; without it, free. Free indices follow
/// document order: loadings, factor_cov, unique_cov, then unlisted variances.
[[nodiscard]] CfaModel model_from_json(const nlohmann::json& doc);
[[nodiscard]] CfaModel load_model(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json model_to_json(const CfaModel& model);

/// Plan document with keys scenario, sample_sizes, replications, seed,
/// estimators, lm_enabled. Omitted keys take SimulationPlan::defaults.
[[nodiscard]] SimulationPlan plan_from_json(const nlohmann::json& doc);
[[nodiscard]] SimulationPlan load_plan(const std::filesystem::path& path);

}  // namespace semfit
