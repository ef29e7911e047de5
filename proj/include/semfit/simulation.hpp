#pragma once

#include "semfit/datagen.hpp"
#include "semfit/inference.hpp"
#include "semfit/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace semfit {

enum class Scenario { CorrectNormal, MisspecifiedNormal, EllipticalNormalTheory, SmallSampleRls };

enum class ModelVariant { Base, LmModified };

[[nodiscard]] const char* to_string(Scenario scenario) noexcept;
[[nodiscard]] const char* to_string(ModelVariant variant) noexcept;
[[nodiscard]] Scenario parse_scenario(std::string_view text);
/// Accepts ml / rls / sb in any case.
[[nodiscard]] StatisticKind parse_estimator(std::string_view text);
[[nodiscard]] ModelVariant parse_variant(std::string_view text);

struct SimulationPlan {
    Scenario scenario = Scenario::CorrectNormal;
    std::vector<int> sample_sizes;
    int replications = 500;
    std::uint64_t master_seed = 0;
    std::vector<StatisticKind> estimators;
    bool lm_enabled = false;

    /// Throws std::invalid_argument naming the violated rule.
    void validate() const;

    /// Default grid {60, ..., 5000}, R = 500 and the scenario's natural estimators.
    [[nodiscard]] static SimulationPlan defaults(Scenario scenario);
};

inline const std::vector<int> kDefaultSampleSizes{60, 100, 150, 200, 300, 500, 1000, 2500, 5000};

struct ScenarioResultRow {
    Scenario scenario = Scenario::CorrectNormal;
    int n = 0;
    int replication = 0;
    StatisticKind estimator = StatisticKind::ML;
    ModelVariant variant = ModelVariant::Base;
    double t = 0.0;
    int df = 0;
    double p_value = 1.0;
    bool converged = false;
    double nfi = 0.0;
    double cfi = 0.0;
    double tli = 0.0;
    double rmsea = 0.0;
};

struct AggregateRow {
    Scenario scenario = Scenario::CorrectNormal;
    int n = 0;
    StatisticKind estimator = StatisticKind::ML;
    ModelVariant variant = ModelVariant::Base;
    // Means are NaN when no replication converged.
    double mean_t = 0.0;
    double rejection_rate_05 = 0.0;
    double mean_nfi = 0.0;
    double mean_cfi = 0.0;
    double mean_tli = 0.0;
    double mean_rmsea = 0.0;
    double nonconvergence_rate = 0.0;
    int converged_count = 0;
    int df = 0;
};

/// Data-generating population with one extra cross-loading, the simple
/// structure model that omits it, and the omitted position.
struct MisspecifiedPair {
    PopulationSpec population;
    CfaModel analysis_model;
    PatternPosition lm_target;
};

inline constexpr double kOmittedCrossLoading = 0.35;

[[nodiscard]] MisspecifiedPair misspecified_pair();

/// Population and analysis model used by a scenario.
[[nodiscard]] PopulationSpec scenario_population(Scenario scenario);
[[nodiscard]] CfaModel scenario_model(Scenario scenario);

/// Runs every (N, replication) cell. Output is sorted and independent of
/// `threads`.
[[nodiscard]] std::vector<ScenarioResultRow> run_plan(const SimulationPlan& plan, int threads = 1);

/// Rows for a single (N index, replication) cell.
[[nodiscard]] std::vector<ScenarioResultRow> run_replication(const SimulationPlan& plan, std::size_t n_index,
                                                             int replication);

[[nodiscard]] std::vector<AggregateRow> aggregate(const std::vector<ScenarioResultRow>& rows);

inline constexpr std::string_view kRowsHeader =
    "scenario,N,replication,estimator,model_variant,T,df,p_value,converged,nfi,cfi,tli,rmsea";
inline constexpr std::string_view kAggregateHeader =
    "scenario,N,estimator,model_variant,mean_T,rejection_rate_05,mean_nfi,mean_cfi,mean_tli,mean_rmsea,"
    "nonconvergence_rate,converged_count,df";

void write_rows_csv(std::ostream& out, const std::vector<ScenarioResultRow>& rows);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);
/// Throws std::runtime_error on a header or field mismatch.
[[nodiscard]] std::vector<AggregateRow> read_aggregate_csv(std::istream& in);

}  // namespace semfit
