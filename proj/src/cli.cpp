#include "semfit/cli.hpp"

#include "semfit/datagen.hpp"
#include "semfit/errors.hpp"
#include "semfit/io.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace semfit::cli {

namespace {

using nlohmann::json;

std::string parameter_label(const CfaModel& model, const PatternPosition& pos) {
    const auto& obs = model.observed_names();
    const auto& fac = model.factor_names();
    const auto r = static_cast<std::size_t>(pos.row);
    const auto c = static_cast<std::size_t>(pos.col);
    switch (pos.matrix) {
        case MatrixKind::Lambda:
            return fac[c] + " =~ " + obs[r];
        case MatrixKind::Phi:
            return fac[c] + " ~~ " + fac[r];
        case MatrixKind::Psi:
            return obs[c] + " ~~ " + obs[r];
    }
    return "?";
}

// Reorders CSV columns to the model's observed variable order.
Matrix select_columns(const CsvData& csv, const CfaModel& model, const std::string& data_name) {
    std::map<std::string, Eigen::Index> column;
    for (std::size_t j = 0; j < csv.names.size(); ++j) {
        column.emplace(csv.names[j], static_cast<Eigen::Index>(j));
    }
    Matrix out(csv.values.rows(), model.p());
    for (int i = 0; i < model.p(); ++i) {
        const auto& name = model.observed_names()[static_cast<std::size_t>(i)];
        const auto it = column.find(name);
        if (it == column.end()) {
            throw InputError(data_name + ": observed variable '" + name + "' is missing from the CSV header");
        }
        out.col(i) = csv.values.col(it->second);
    }
    return out;
}

struct EstimatorResult {
    TestStatistic model;
    TestStatistic baseline;
    FitIndexSet indices;
};

EstimatorResult evaluate_estimator(StatisticKind kind, const CfaModel& model, const FitSolution& sol,
                                   const FitSolution& baseline, const SampleMoments& moments) {
    const int df = degrees_of_freedom(model);
    const auto base_model = independence_model(moments.p());
    const int base_df = degrees_of_freedom(base_model);
    const auto tml = t_ml(sol.f_min, moments.N, df);
    const auto bml = t_ml(baseline.f_min, moments.N, base_df);
    EstimatorResult r;
    switch (kind) {
        case StatisticKind::ML:
            r.model = tml;
            r.baseline = bml;
            break;
        case StatisticKind::RLS:
            r.model = t_rls(moments.S, implied_covariance(model, sol.theta_hat), moments.N, df);
            r.baseline = t_rls(moments.S, implied_covariance(base_model, baseline.theta_hat), moments.N, base_df);
            break;
        case StatisticKind::SB:
            r.model = satorra_bentler(tml, model, sol.theta_hat, moments);
            r.baseline = satorra_bentler(bml, base_model, baseline.theta_hat, moments);
            break;
    }
    r.indices = fit_indices(r.model, r.baseline, moments.N);
    return r;
}

const char* verdict(bool ok) { return ok ? "good" : "poor"; }

}  // namespace

int cmd_fit(const FitRequest& request, std::ostream& out, std::ostream& err) {
    CfaModel model = [&] {
        try {
            return load_model(request.model_path);
        } catch (const std::exception& e) {
            throw InputError(e.what());
        }
    }();
    std::ifstream data_in(request.data_path);
    if (!data_in) {
        throw InputError("cannot open data file '" + request.data_path.string() + "'");
    }
    CsvData csv;
    try {
        csv = read_csv(data_in);
    } catch (const std::exception& e) {
        throw InputError(request.data_path.string() + ": " + e.what());
    }
    const Matrix data = select_columns(csv, model, request.data_path.string());
    if (data.rows() < 2) {
        throw InputError(request.data_path.string() + ": need at least two observations");
    }
    const auto moments = sample_covariance(data);
    try {
        require_positive_definite(moments.S, "S");
    } catch (const SingularMatrixError&) {
        throw InputError(request.data_path.string() + ": sample covariance matrix is not positive definite");
    }

    const auto sol = fit(model, moments, Method::ML);
    const auto baseline = fit_independence(moments);
    const int df = degrees_of_freedom(model);

    out << "Model: " << request.model_path.string() << "  (p = " << model.p() << ", q = " << model.q()
        << ", df = " << df << ")\n";
    out << "Data:  " << request.data_path.string() << "  (N = " << moments.N << ")\n";
    out << "ML estimation " << (sol.converged ? "converged" : "DID NOT CONVERGE") << " after " << sol.iterations
        << " iterations (max |gradient| = " << format_double(sol.gradient_norm) << ")\n\n";

    json doc;
    doc["model"] = request.model_path.string();
    doc["data"] = request.data_path.string();
    doc["N"] = moments.N;
    doc["converged"] = sol.converged;
    doc["iterations"] = sol.iterations;
    doc["gradient_norm"] = sol.gradient_norm;
    doc["f_min"] = sol.f_min;
    doc["parameters"] = json::array();

    out << "Parameter estimates\n";
    for (int k = 0; k < model.q(); ++k) {
        const auto& pos = model.free_position(k);
        const auto label = parameter_label(model, pos);
        out << "  " << std::left << std::setw(24) << label << std::right << std::setw(12)
            << format_double(sol.theta_hat[k]) << '\n';
        doc["parameters"].push_back({{"index", k},
                                     {"matrix", to_string(pos.matrix)},
                                     {"row", pos.row},
                                     {"col", pos.col},
                                     {"label", label},
                                     {"estimate", sol.theta_hat[k]}});
    }

    out << "\nTest statistics and fit indices (cutoffs: CFI > 0.95, TLI > 0.95, RMSEA < 0.06)\n";
    doc["statistics"] = json::array();
    for (const auto kind : request.estimators) {
        EstimatorResult r;
        try {
            r = evaluate_estimator(kind, model, sol, baseline, moments);
        } catch (const std::exception& e) {
            err << to_string(kind) << " statistic unavailable: " << e.what() << '\n';
            continue;
        }
        const auto& ix = r.indices;
        out << "  " << to_string(kind) << ": T = " << format_double(r.model.value) << ", df = " << r.model.df
            << ", p = " << format_double(r.model.p_value) << '\n';
        out << "      baseline T = " << format_double(r.baseline.value) << " (df " << r.baseline.df << ")\n";
        out << "      NFI = " << format_double(ix.nfi) << "  CFI = " << format_double(ix.cfi) << " [" << verdict(ix.verdict_cfi)
            << "]  TLI = " << format_double(ix.tli) << " [" << verdict(ix.verdict_tli) << "]  RMSEA = " << format_double(ix.rmsea)
            << " [" << verdict(ix.verdict_rmsea) << "]\n";
        json stat{{"kind", to_string(kind)},
                  {"T", r.model.value},
                  {"df", r.model.df},
                  {"p_value", r.model.p_value},
                  {"baseline_T", r.baseline.value},
                  {"baseline_df", r.baseline.df},
                  {"nfi", ix.nfi},
                  {"cfi", ix.cfi},
                  {"tli", ix.tli},
                  {"rmsea", ix.rmsea},
                  {"cfi_ok", ix.verdict_cfi},
                  {"tli_ok", ix.verdict_tli},
                  {"rmsea_ok", ix.verdict_rmsea}};
        if (r.model.df > 0) {
            const double conv = conventional_tli(r.model.value, r.model.df, r.baseline.value, r.baseline.df);
            out << "      conventional Tucker-Lewis index (not used for the verdict above) = " << format_double(conv)
                << '\n';
            stat["conventional_tli"] = conv;
        }
        doc["statistics"].push_back(stat);
    }

    doc["lm"] = json::array();
    const auto candidates = default_lm_candidates(model);
    if (sol.converged && !candidates.empty()) {
        const auto lm = lm_test(model, sol.theta_hat, moments, candidates);
        out << "\nLagrange multiplier tests (top " << std::min<std::size_t>(10, lm.candidates.size()) << " of "
            << lm.candidates.size() << " fixed parameters)\n";
        for (std::size_t i = 0; i < lm.candidates.size() && i < 10; ++i) {
            const auto& c = lm.candidates[i];
            const auto label = parameter_label(model, c.target);
            out << "  " << std::left << std::setw(24) << label << "  LM = " << std::setw(22) << format_double(c.score)
                << std::right << "p = " << format_double(c.p_value) << '\n';
            doc["lm"].push_back({{"matrix", to_string(c.target.matrix)},
                                 {"row", c.target.row},
                                 {"col", c.target.col},
                                 {"label", label},
                                 {"score", c.score},
                                 {"p_value", c.p_value},
                                 {"expected_drop", c.expected_drop}});
        }
    }

    if (request.json_path) {
        std::ofstream json_out(*request.json_path);
        if (!json_out) {
            throw InputError("cannot write JSON report '" + request.json_path->string() + "'");
        }
        json_out << doc.dump(2) << '\n';
    }
    return sol.converged ? kExitOk : kExitNotConverged;
}

int cmd_simulate(const SimulateRequest& request, std::ostream& out, std::ostream& /*err*/) {
    SimulationPlan plan = request.plan;
    if (request.plan_path) {
        plan = load_plan(*request.plan_path);
    } else {
        try {
            plan.validate();
        } catch (const std::invalid_argument& e) {
            throw InputError(std::string("plan: ") + e.what());
        }
    }
    std::error_code ec;
    std::filesystem::create_directories(request.out_dir, ec);
    if (ec) {
        throw InputError("cannot create output directory '" + request.out_dir.string() + "': " + ec.message());
    }

    const auto rows = run_plan(plan, request.threads);
    const auto agg = aggregate(rows);
    {
        std::ofstream f(request.out_dir / "rows.csv", std::ios::binary);
        write_rows_csv(f, rows);
    }
    {
        std::ofstream f(request.out_dir / "aggregate.csv", std::ios::binary);
        write_aggregate_csv(f, agg);
    }
    const auto failed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.converged; });
    out << to_string(plan.scenario) << ": " << plan.sample_sizes.size() << " sample sizes x " << plan.replications
        << " replications -> " << rows.size() << " rows (" << failed << " flagged non-converged)\n";
    out << render_table(agg);
    out << "wrote " << (request.out_dir / "rows.csv").string() << " and " << (request.out_dir / "aggregate.csv").string()
        << '\n';
    return kExitOk;
}

int cmd_report(const ReportRequest& request, std::ostream& out, std::ostream& /*err*/) {
    std::ifstream in(request.aggregate_path);
    if (!in) {
        throw InputError("cannot open aggregate file '" + request.aggregate_path.string() + "'");
    }
    std::vector<AggregateRow> rows;
    try {
        rows = read_aggregate_csv(in);
    } catch (const std::exception& e) {
        throw InputError(request.aggregate_path.string() + ": " + e.what());
    }
    out << render_table(rows);
    std::ofstream svg(request.svg_path, std::ios::binary);
    if (!svg) {
        throw InputError("cannot write SVG '" + request.svg_path.string() + "'");
    }
    svg << render_svg(rows, request.panel);
    return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Covariance structure fitting, chi-square tests and Monte Carlo scenarios"};
    app.require_subcommand(1);

    FitRequest fit_req;
    std::vector<std::string> fit_estimators;
    std::string json_path;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a CFA model to a CSV dataset");
    fit_cmd->add_option("--model", fit_req.model_path, "Model JSON file")->required();
    fit_cmd->add_option("--data", fit_req.data_path, "CSV data with a header row")->required();
    fit_cmd->add_option("--estimator", fit_estimators, "ml, rls or sb (repeatable)");
    fit_cmd->add_option("--json", json_path, "Write a machine-readable report here");

    SimulateRequest sim_req;
    std::string plan_path;
    std::string scenario;
    std::vector<int> sizes;
    int reps = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> sim_estimators;
    bool lm_flag = false;
    std::string out_dir;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo plan");
    auto* plan_opt = sim_cmd->add_option("--plan", plan_path, "Plan JSON file");
    auto* scen_opt = sim_cmd->add_option("--scenario", scenario,
                                         "CorrectNormal | MisspecifiedNormal | EllipticalNormalTheory | SmallSampleRls");
    auto* sizes_opt = sim_cmd->add_option("--sizes", sizes, "Sample sizes, comma separated")->delimiter(',');
    auto* reps_opt = sim_cmd->add_option("--reps", reps, "Replications per sample size");
    auto* seed_opt = sim_cmd->add_option("--seed", seed, "Master seed");
    auto* est_opt = sim_cmd->add_option("--estimators", sim_estimators, "ml, rls, sb")->delimiter(',');
    auto* lm_opt = sim_cmd->add_flag("--lm,!--no-lm", lm_flag, "Add the LM-modified model variant");
    sim_cmd->add_option("--out", out_dir, "Output directory")->required();
    sim_cmd->add_option("--threads", sim_req.threads, "Worker threads")
        ->default_val(std::max(1u, std::thread::hardware_concurrency()));
    plan_opt->excludes(scen_opt)->excludes(sizes_opt)->excludes(reps_opt)->excludes(seed_opt)->excludes(est_opt)
        ->excludes(lm_opt);

    ReportRequest rep_req;
    std::string panel = "both";
    auto* rep_cmd = app.add_subcommand("report", "Render aggregate results as a table and an SVG chart");
    rep_cmd->add_option("--aggregate", rep_req.aggregate_path, "aggregate.csv")->required();
    rep_cmd->add_option("--out", rep_req.svg_path, "SVG output path")->required();
    rep_cmd->add_option("--panel", panel, "chisq | indices | both")
        ->check(CLI::IsMember({"chisq", "indices", "both"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    }

    try {
        if (*fit_cmd) {
            if (!fit_estimators.empty()) {
                fit_req.estimators.clear();
                for (const auto& e : fit_estimators) {
                    fit_req.estimators.push_back(parse_estimator(e));
                }
            }
            if (!json_path.empty()) {
                fit_req.json_path = json_path;
            }
            return cmd_fit(fit_req, out, err);
        }
        if (*sim_cmd) {
            sim_req.out_dir = out_dir;
            if (!plan_path.empty()) {
                sim_req.plan_path = plan_path;
            } else {
                if (scenario.empty()) {
                    throw InputError("simulate needs --plan or --scenario");
                }
                sim_req.plan = SimulationPlan::defaults(parse_scenario(scenario));
                if (!sizes.empty()) {
                    sim_req.plan.sample_sizes = sizes;
                }
                if (reps_opt->count() > 0) {
                    sim_req.plan.replications = reps;
                }
                if (seed_opt->count() > 0) {
                    sim_req.plan.master_seed = seed;
                }
                if (!sim_estimators.empty()) {
                    sim_req.plan.estimators.clear();
                    for (const auto& e : sim_estimators) {
                        sim_req.plan.estimators.push_back(parse_estimator(e));
                    }
                }
                if (lm_opt->count() > 0) {
                    sim_req.plan.lm_enabled = lm_flag;
                }
            }
            return cmd_simulate(sim_req, out, err);
        }
        rep_req.panel = parse_panel(panel);
        return cmd_report(rep_req, out, err);
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    }
}

}  // namespace semfit::cli
