#include "semfit/simulation.hpp"

#include "semfit/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace semfit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kAlpha = 0.05;

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

const char* to_string(Scenario scenario) noexcept {
    switch (scenario) {
        case Scenario::CorrectNormal:
            return "CorrectNormal";
        case Scenario::MisspecifiedNormal:
            return "MisspecifiedNormal";
        case Scenario::EllipticalNormalTheory:
            return "EllipticalNormalTheory";
        case Scenario::SmallSampleRls:
            return "SmallSampleRls";
    }
    return "?";
}

const char* to_string(ModelVariant variant) noexcept {
    return variant == ModelVariant::Base ? "base" : "lm_modified";
}

Scenario parse_scenario(std::string_view text) {
    const auto key = lower(text);
    for (auto s : {Scenario::CorrectNormal, Scenario::MisspecifiedNormal, Scenario::EllipticalNormalTheory,
                   Scenario::SmallSampleRls}) {
        if (key == lower(to_string(s))) {
            return s;
        }
    }
    throw std::invalid_argument("unknown scenario '" + std::string(text) + "'");
}

StatisticKind parse_estimator(std::string_view text) {
    const auto key = lower(text);
    if (key == "ml") {
        return StatisticKind::ML;
    }
    if (key == "rls") {
        return StatisticKind::RLS;
    }
    if (key == "sb") {
        return StatisticKind::SB;
    }
    throw std::invalid_argument("unknown estimator '" + std::string(text) + "' (expected ml, rls or sb)");
}

ModelVariant parse_variant(std::string_view text) {
    if (text == "base") {
        return ModelVariant::Base;
    }
    if (text == "lm_modified") {
        return ModelVariant::LmModified;
    }
    throw std::invalid_argument("unknown model variant '" + std::string(text) + "'");
}

void SimulationPlan::validate() const {
    if (sample_sizes.empty()) {
        throw std::invalid_argument("plan needs at least one sample size");
    }
    for (std::size_t i = 1; i < sample_sizes.size(); ++i) {
        if (sample_sizes[i] <= sample_sizes[i - 1]) {
            throw std::invalid_argument("sample sizes must be strictly increasing");
        }
    }
    const int p = scenario_model(scenario).p();
    if (sample_sizes.front() <= p) {
        throw std::invalid_argument("every sample size must exceed the number of observed variables (" +
                                    std::to_string(p) + ")");
    }
    if (replications < 1) {
        throw std::invalid_argument("replications must be at least 1");
    }
    if (estimators.empty()) {
        throw std::invalid_argument("plan needs at least one estimator");
    }
    auto sorted = estimators;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("estimators must not repeat");
    }
}

SimulationPlan SimulationPlan::defaults(Scenario scenario) {
    SimulationPlan plan;
    plan.scenario = scenario;
    plan.sample_sizes = kDefaultSampleSizes;
    plan.replications = 500;
    plan.master_seed = 20240101;
    switch (scenario) {
        case Scenario::CorrectNormal:
            plan.estimators = {StatisticKind::ML};
            break;
        case Scenario::MisspecifiedNormal:
            plan.estimators = {StatisticKind::ML};
            plan.lm_enabled = true;
            break;
        case Scenario::EllipticalNormalTheory:
            plan.estimators = {StatisticKind::ML, StatisticKind::SB};
            break;
        case Scenario::SmallSampleRls:
            plan.estimators = {StatisticKind::ML, StatisticKind::RLS};
            break;
    }
    return plan;
}

MisspecifiedPair misspecified_pair() {
    auto pop = population_model();
    auto mats = unpack(pop.model, pop.theta);
    const auto target = PatternPosition::make(MatrixKind::Lambda, 5, 0);
    mats.lambda(target.row, target.col) = kOmittedCrossLoading;
    const Matrix common = mats.lambda * mats.phi * mats.lambda.transpose();
    mats.psi(target.row, target.row) = 1.0 - common(target.row, target.row);
    return MisspecifiedPair{PopulationSpec::from_matrices(mats), pop.model, target};
}

PopulationSpec scenario_population(Scenario scenario) {
    if (scenario == Scenario::MisspecifiedNormal) {
        return misspecified_pair().population;
    }
    const auto pop = population_model();
    return PopulationSpec::from_matrices(unpack(pop.model, pop.theta), scenario == Scenario::EllipticalNormalTheory
                                                                           ? Distribution::Elliptical
                                                                           : Distribution::Normal);
}

CfaModel scenario_model(Scenario scenario) {
    if (scenario == Scenario::MisspecifiedNormal) {
        return misspecified_pair().analysis_model;
    }
    return population_model().model;
}

namespace {

struct ReplicationContext {
    const SimulationPlan& plan;
    const PopulationSpec& population;
    const CfaModel& model;
};

ScenarioResultRow failed_row(const SimulationPlan& plan, int n, int rep, StatisticKind est, ModelVariant variant,
                             int df) {
    ScenarioResultRow row;
    row.scenario = plan.scenario;
    row.n = n;
    row.replication = rep;
    row.estimator = est;
    row.variant = variant;
    row.t = kNaN;
    row.df = df;
    row.p_value = kNaN;
    row.converged = false;
    row.nfi = row.cfi = row.tli = row.rmsea = kNaN;
    return row;
}

TestStatistic statistic_for(StatisticKind kind, const CfaModel& model, const FitSolution& sol,
                            const SampleMoments& moments, int df) {
    const auto tml = t_ml(sol.f_min, moments.N, df);
    switch (kind) {
        case StatisticKind::ML:
            return tml;
        case StatisticKind::RLS:
            return t_rls(moments.S, implied_covariance(model, sol.theta_hat), moments.N, df);
        case StatisticKind::SB:
            return satorra_bentler(tml, model, sol.theta_hat, moments);
    }
    return tml;
}

// Emits one row per estimator for a fitted variant. Failures in one
// estimator's statistic flag only that row.
void emit_variant(const ReplicationContext& ctx, const SampleMoments& moments, int rep, ModelVariant variant,
                  const CfaModel& model, const FitSolution& sol, const FitSolution& baseline,
                  std::vector<ScenarioResultRow>& out) {
    const int df = degrees_of_freedom(model);
    const auto base_model = independence_model(moments.p());
    const int base_df = degrees_of_freedom(base_model);
    for (const auto est : ctx.plan.estimators) {
        try {
            const auto t = statistic_for(est, model, sol, moments, df);
            const auto tb = statistic_for(est, base_model, baseline, moments, base_df);
            const auto idx = fit_indices(t, tb, moments.N);
            ScenarioResultRow row;
            row.scenario = ctx.plan.scenario;
            row.n = moments.N;
            row.replication = rep;
            row.estimator = est;
            row.variant = variant;
            row.t = t.value;
            row.df = df;
            row.p_value = t.p_value;
            row.converged = sol.converged;
            row.nfi = idx.nfi;
            row.cfi = idx.cfi;
            row.tli = idx.tli;
            row.rmsea = idx.rmsea;
            out.push_back(row);
        } catch (const std::exception&) {
            out.push_back(failed_row(ctx.plan, moments.N, rep, est, variant, df));
        }
    }
}

std::vector<ScenarioResultRow> replicate(const ReplicationContext& ctx, std::size_t n_index, int rep) {
    const auto& plan = ctx.plan;
    const int n = plan.sample_sizes[n_index];
    const int df_base = degrees_of_freedom(ctx.model);
    std::vector<ScenarioResultRow> out;

    auto fail_all = [&](ModelVariant variant, int df) {
        for (const auto est : plan.estimators) {
            out.push_back(failed_row(plan, n, rep, est, variant, df));
        }
    };

    auto rng = RngStream::for_coordinates(plan.master_seed, static_cast<std::uint64_t>(plan.scenario), n_index,
                                          static_cast<std::uint64_t>(rep));
    const auto moments = sample_covariance(generate_sample(ctx.population, n, rng));

    std::optional<FitSolution> base_fit;
    std::optional<FitSolution> baseline;
    try {
        base_fit = fit(ctx.model, moments, Method::ML);
        baseline = fit_independence(moments);
    } catch (const std::exception&) {
        fail_all(ModelVariant::Base, df_base);
        if (plan.lm_enabled) {
            fail_all(ModelVariant::LmModified, df_base - 1);
        }
        return out;
    }
    emit_variant(ctx, moments, rep, ModelVariant::Base, ctx.model, *base_fit, *baseline, out);

    if (plan.lm_enabled) {
        try {
            if (!base_fit->converged) {
                throw std::runtime_error("LM test requires a converged base fit");
            }
            const auto lm = lm_test(ctx.model, base_fit->theta_hat, moments, default_lm_candidates(ctx.model));
            if (lm.candidates.empty()) {
                throw std::runtime_error("no LM candidate");
            }
            const auto freed = ctx.model.with_freed(lm.candidates.front().target);
            Vector start(freed.q());
            start << base_fit->theta_hat.values, std::get<FreeParam>(freed.entry(lm.candidates.front().target))
                                                     .start.value_or(0.0);
            const auto refit = fit(freed, moments, Method::ML, ParameterVector(start));
            emit_variant(ctx, moments, rep, ModelVariant::LmModified, freed, refit, *baseline, out);
        } catch (const std::exception&) {
            fail_all(ModelVariant::LmModified, df_base - 1);
        }
    }
    return out;
}

auto row_key(const ScenarioResultRow& r) {
    return std::make_tuple(static_cast<int>(r.scenario), r.n, r.replication, static_cast<int>(r.estimator),
                           static_cast<int>(r.variant));
}

}  // namespace

std::vector<ScenarioResultRow> run_replication(const SimulationPlan& plan, std::size_t n_index, int replication) {
    plan.validate();
    const auto population = scenario_population(plan.scenario);
    const auto model = scenario_model(plan.scenario);
    return replicate(ReplicationContext{plan, population, model}, n_index, replication);
}

std::vector<ScenarioResultRow> run_plan(const SimulationPlan& plan, int threads) {
    plan.validate();
    const auto population = scenario_population(plan.scenario);
    const auto model = scenario_model(plan.scenario);
    const ReplicationContext ctx{plan, population, model};

    const std::size_t reps = static_cast<std::size_t>(plan.replications);
    const std::size_t cells = plan.sample_sizes.size() * reps;
    std::vector<std::vector<ScenarioResultRow>> slots(cells);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t task = next++; task < cells; task = next++) {
            slots[task] = replicate(ctx, task / reps, static_cast<int>(task % reps));
        }
    };
    const int workers = std::max(1, threads);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < workers; ++i) {
            pool.emplace_back(worker);
        }
    }

    std::vector<ScenarioResultRow> rows;
    for (auto& s : slots) {
        rows.insert(rows.end(), s.begin(), s.end());
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return row_key(a) < row_key(b); });
    return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<ScenarioResultRow>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("cannot aggregate an empty row list");
    }
    using Key = std::tuple<int, int, int, int>;
    struct Acc {
        AggregateRow row;
        int total = 0;
        int rejected = 0;
        double t = 0, nfi = 0, cfi = 0, tli = 0, rmsea = 0;
    };
    std::map<Key, Acc> groups;
    for (const auto& r : rows) {
        const Key key{static_cast<int>(r.scenario), r.n, static_cast<int>(r.estimator), static_cast<int>(r.variant)};
        auto& acc = groups[key];
        if (acc.total == 0) {
            acc.row.scenario = r.scenario;
            acc.row.n = r.n;
            acc.row.estimator = r.estimator;
            acc.row.variant = r.variant;
            acc.row.df = r.df;
        }
        ++acc.total;
        if (!r.converged) {
            continue;
        }
        ++acc.row.converged_count;
        acc.rejected += r.p_value < kAlpha ? 1 : 0;
        acc.t += r.t;
        acc.nfi += r.nfi;
        acc.cfi += r.cfi;
        acc.tli += r.tli;
        acc.rmsea += r.rmsea;
    }
    std::vector<AggregateRow> out;
    out.reserve(groups.size());
    for (auto& [key, acc] : groups) {
        auto row = acc.row;
        const int c = row.converged_count;
        const double inv = c > 0 ? 1.0 / c : kNaN;
        row.mean_t = acc.t * inv;
        row.rejection_rate_05 = acc.rejected * inv;
        row.mean_nfi = acc.nfi * inv;
        row.mean_cfi = acc.cfi * inv;
        row.mean_tli = acc.tli * inv;
        row.mean_rmsea = acc.rmsea * inv;
        row.nonconvergence_rate = static_cast<double>(acc.total - c) / acc.total;
        out.push_back(row);
    }
    return out;
}

namespace {

std::string fmt(double v) { return std::isnan(v) ? std::string("NA") : format_double(v); }

double parse_number(const std::string& field, int line_no) {
    if (field == "NA") {
        return kNaN;
    }
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw std::runtime_error("aggregate CSV line " + std::to_string(line_no) + ": bad number '" + field + "'");
    }
    return v;
}

int parse_int(const std::string& field, int line_no) {
    int v = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw std::runtime_error("aggregate CSV line " + std::to_string(line_no) + ": bad integer '" + field + "'");
    }
    return v;
}

}  // namespace

void write_rows_csv(std::ostream& out, const std::vector<ScenarioResultRow>& rows) {
    out << kRowsHeader << '\n';
    for (const auto& r : rows) {
        out << to_string(r.scenario) << ',' << r.n << ',' << r.replication << ',' << to_string(r.estimator) << ','
            << to_string(r.variant) << ',' << fmt(r.t) << ',' << r.df << ',' << fmt(r.p_value) << ','
            << (r.converged ? "true" : "false") << ',' << fmt(r.nfi) << ',' << fmt(r.cfi) << ',' << fmt(r.tli) << ','
            << fmt(r.rmsea) << '\n';
    }
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
    out << kAggregateHeader << '\n';
    for (const auto& r : rows) {
        out << to_string(r.scenario) << ',' << r.n << ',' << to_string(r.estimator) << ',' << to_string(r.variant)
            << ',' << fmt(r.mean_t) << ',' << fmt(r.rejection_rate_05) << ',' << fmt(r.mean_nfi) << ','
            << fmt(r.mean_cfi) << ',' << fmt(r.mean_tli) << ',' << fmt(r.mean_rmsea) << ','
            << fmt(r.nonconvergence_rate) << ',' << r.converged_count << ',' << r.df << '\n';
    }
}

std::vector<AggregateRow> read_aggregate_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("aggregate CSV is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != kAggregateHeader) {
        throw std::runtime_error("aggregate CSV header mismatch: expected '" + std::string(kAggregateHeader) + "'");
    }
    std::vector<AggregateRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) {
            f.push_back(field);
        }
        if (f.size() != 13) {
            throw std::runtime_error("aggregate CSV line " + std::to_string(line_no) + " has " +
                                     std::to_string(f.size()) + " fields, expected 13");
        }
        try {
            AggregateRow r;
            r.scenario = parse_scenario(f[0]);
            r.n = parse_int(f[1], line_no);
            r.estimator = parse_estimator(f[2]);
            r.variant = parse_variant(f[3]);
            r.mean_t = parse_number(f[4], line_no);
            r.rejection_rate_05 = parse_number(f[5], line_no);
            r.mean_nfi = parse_number(f[6], line_no);
            r.mean_cfi = parse_number(f[7], line_no);
            r.mean_tli = parse_number(f[8], line_no);
            r.mean_rmsea = parse_number(f[9], line_no);
            r.nonconvergence_rate = parse_number(f[10], line_no);
            r.converged_count = parse_int(f[11], line_no);
            r.df = parse_int(f[12], line_no);
            rows.push_back(r);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("aggregate CSV line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (rows.empty()) {
        throw std::runtime_error("aggregate CSV has no data rows");
    }
    return rows;
}

}  // namespace semfit
