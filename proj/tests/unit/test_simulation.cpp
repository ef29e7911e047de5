#include <doctest.h>

#include "semfit/io.hpp"
#include "semfit/report.hpp"
#include "semfit/simulation.hpp"

#include <cmath>
#include <sstream>

using namespace semfit;

namespace {

SimulationPlan smoke_plan(Scenario s) {
    auto plan = SimulationPlan::defaults(s);
    plan.sample_sizes = {100, 200};
    plan.replications = 2;
    plan.master_seed = 7;
    return plan;
}

std::size_t count_lines(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("plan validation") {
    auto plan = smoke_plan(Scenario::CorrectNormal);
    CHECK_NOTHROW(plan.validate());
    auto bad = plan;
    bad.sample_sizes = {200, 100};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = plan;
    bad.sample_sizes = {10};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = plan;
    bad.replications = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = plan;
    bad.estimators.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("scenario and estimator names round trip") {
    for (auto s : {Scenario::CorrectNormal, Scenario::MisspecifiedNormal, Scenario::EllipticalNormalTheory,
                   Scenario::SmallSampleRls}) {
        CHECK(parse_scenario(to_string(s)) == s);
    }
    CHECK(parse_estimator("Rls") == StatisticKind::RLS);
    CHECK(parse_variant("lm_modified") == ModelVariant::LmModified);
    CHECK_THROWS((void)parse_scenario("Nope"));
}

TEST_CASE("misspecified population has unit variances and real misfit") {
    const auto pair = misspecified_pair();
    const Matrix sigma = pair.population.sigma();
    for (int i = 0; i < sigma.rows(); ++i) {
        CHECK(std::abs(sigma(i, i) - 1.0) < 1e-12);
    }
    CHECK(pair.population.lambda(5, 0) == kOmittedCrossLoading);
    SampleMoments m{sigma, 3001, std::nullopt};
    const auto sol = fit(pair.analysis_model, m, Method::ML);
    CHECK(sol.f_min > 0.0);

    // Population CFI from noncentralities at large n.
    const double n = 1e6;
    const auto base = fit_independence(m);
    const double lk = n * sol.f_min - 87;
    const double li = n * base.f_min - 105;
    CHECK(1.0 - lk / li >= 0.95);

    const auto lm = lm_test(pair.analysis_model, sol.theta_hat, m, default_lm_candidates(pair.analysis_model));
    CHECK(lm.candidates.front().target == pair.lm_target);
}

TEST_CASE("row accounting for a smoke plan") {
    auto plan = smoke_plan(Scenario::MisspecifiedNormal);
    plan.estimators = {StatisticKind::ML, StatisticKind::RLS};
    plan.lm_enabled = true;
    const auto rows = run_plan(plan, 1);
    CHECK(rows.size() == 2u * 2u * 2u * 2u);
    std::ostringstream out;
    write_rows_csv(out, rows);
    CHECK(count_lines(out.str()) == rows.size() + 1);
    CHECK(out.str().rfind(std::string(kRowsHeader), 0) == 0);

    const auto agg = aggregate(rows);
    CHECK(agg.size() == 2u * 2u * 2u);
    for (const auto& a : agg) {
        CHECK(a.converged_count + std::lround(a.nonconvergence_rate * 2) == 2);
        CHECK(a.df == (a.variant == ModelVariant::Base ? 87 : 86));
    }
}

TEST_CASE("results do not depend on thread count") {
    const auto plan = smoke_plan(Scenario::EllipticalNormalTheory);
    std::ostringstream a;
    std::ostringstream b;
    write_rows_csv(a, run_plan(plan, 1));
    write_rows_csv(b, run_plan(plan, 3));
    CHECK(a.str() == b.str());

    const auto cell = run_replication(plan, 1, 1);
    const auto all = run_plan(plan, 1);
    std::size_t matched = 0;
    for (const auto& r : all) {
        if (r.n == 200 && r.replication == 1) {
            CHECK(r.t == cell[matched].t);
            ++matched;
        }
    }
    CHECK(matched == cell.size());
}

TEST_CASE("aggregate of an all-failed cell writes NA") {
    ScenarioResultRow r;
    r.n = 100;
    r.df = 87;
    r.converged = false;
    r.t = std::nan("");
    const auto agg = aggregate({r, r});
    REQUIRE(agg.size() == 1);
    CHECK(std::isnan(agg[0].mean_t));
    CHECK(agg[0].nonconvergence_rate == 1.0);
    std::stringstream s;
    write_aggregate_csv(s, agg);
    CHECK(s.str().find("NA") != std::string::npos);
    const auto back = read_aggregate_csv(s);
    REQUIRE(back.size() == 1);
    CHECK(std::isnan(back[0].mean_t));
}

TEST_CASE("aggregate CSV round trip and schema checks") {
    const auto agg = aggregate(run_plan(smoke_plan(Scenario::SmallSampleRls), 1));
    std::stringstream s;
    write_aggregate_csv(s, agg);
    const auto back = read_aggregate_csv(s);
    REQUIRE(back.size() == agg.size());
    for (std::size_t i = 0; i < agg.size(); ++i) {
        CHECK(back[i].mean_t == agg[i].mean_t);
        CHECK(back[i].mean_cfi == agg[i].mean_cfi);
        CHECK(back[i].estimator == agg[i].estimator);
    }
    std::stringstream header_only{std::string(kAggregateHeader) + "\n"};
    CHECK_THROWS((void)read_aggregate_csv(header_only));
    std::stringstream wrong("a,b,c\n1,2,3\n");
    CHECK_THROWS((void)read_aggregate_csv(wrong));
}

TEST_CASE("report renders one polyline per series") {
    auto plan = smoke_plan(Scenario::MisspecifiedNormal);
    plan.lm_enabled = true;
    const auto agg = aggregate(run_plan(plan, 1));
    const auto svg = render_svg(agg, Panel::Both);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    std::size_t polylines = 0;
    for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) {
        ++polylines;
    }
    // Two chi-square series and three indices for each of them.
    CHECK(polylines == 2 + 3 * 2);
    CHECK(svg.find("class=\"reference\"") != std::string::npos);
    CHECK(render_svg(agg, Panel::ChiSquare).find("data-panel=\"indices\"") == std::string::npos);
    const auto table = render_table(agg);
    CHECK(table.find("lm_modified") != std::string::npos);
    CHECK(parse_panel("chisq") == Panel::ChiSquare);
    CHECK_THROWS((void)parse_panel("pie"));
}

TEST_CASE("plan JSON parsing") {
    const auto plan = plan_from_json(nlohmann::json::parse(
        R"({"scenario": "SmallSampleRls", "sample_sizes": [60, 100], "replications": 3, "seed": 9})"));
    CHECK(plan.scenario == Scenario::SmallSampleRls);
    CHECK(plan.sample_sizes == std::vector<int>{60, 100});
    CHECK(plan.master_seed == 9u);
    CHECK(plan.estimators.size() == 2);
    CHECK_THROWS_AS((void)plan_from_json(nlohmann::json::parse(R"({"scenario": "CorrectNormal", "bogus": 1})")),
                    InputError);
    CHECK_THROWS_AS((void)plan_from_json(nlohmann::json::parse(R"({"replications": 1})")), InputError);
}

TEST_CASE("model JSON round trip") {
    const auto pop = population_model();
    const auto doc = model_to_json(pop.model);
    const auto back = model_from_json(doc);
    CHECK(back.q() == pop.model.q());
    CHECK(back.free_positions() == pop.model.free_positions());
    CHECK_THROWS_AS((void)model_from_json(nlohmann::json::parse(R"({"observed": ["a"], "extra": 1})")), InputError);
    CHECK_THROWS_AS((void)model_from_json(nlohmann::json::parse(
                        R"({"observed": ["a"], "factors": ["F"], "loadings": [{"var": "b", "factor": "F"}]})")),
                    InputError);
}
