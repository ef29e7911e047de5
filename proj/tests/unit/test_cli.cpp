#include <doctest.h>

#include "semfit/cli.hpp"
#include "semfit/datagen.hpp"
#include "semfit/inference.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace semfit;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "semfit");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "semfit_cli_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path population_csv() {
    const auto path = scratch("pop_seed42.csv");
    const auto pop = population_model();
    const auto spec = PopulationSpec::from_matrices(unpack(pop.model, pop.theta));
    RngStream rng(42);
    std::ofstream out(path);
    write_csv(out, pop.model.observed_names(), generate_sample(spec, 1000, rng));
    return path;
}

const std::string kModel = SEMFIT_DATA_DIR "/population_model.json";

}  // namespace

TEST_CASE("fit on seed-42 data gives a plausible statistic and exact JSON round trip") {
    const auto csv = population_csv();
    const auto json_path = scratch("fit.json");
    const auto r = invoke({"fit", "--model", kModel, "--data", csv.string(), "--estimator", "ml", "--estimator",
                           "rls", "--estimator", "sb", "--json", json_path.string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(r.out.find("F1 =~ x1") != std::string::npos);
    CHECK(r.out.find("conventional") != std::string::npos);
    CHECK(r.out.find("Lagrange") != std::string::npos);

    const auto doc = nlohmann::json::parse(slurp(json_path));
    CHECK(doc["parameters"].size() == 33);
    CHECK(doc["lm"].size() == 10);
    REQUIRE(doc["statistics"].size() == 3);
    for (const auto& s : doc["statistics"]) {
        const TestStatistic model{s["T"].get<double>(), s["df"].get<int>()};
        const TestStatistic base{s["baseline_T"].get<double>(), s["baseline_df"].get<int>()};
        const auto ix = fit_indices(model, base, doc["N"].get<int>());
        CHECK(ix.nfi == s["nfi"].get<double>());
        CHECK(ix.cfi == s["cfi"].get<double>());
        CHECK(ix.tli == s["tli"].get<double>());
        CHECK(ix.rmsea == s["rmsea"].get<double>());
        CHECK(ix.verdict_cfi == s["cfi_ok"].get<bool>());
    }
    const double t_ml = doc["statistics"][0]["T"].get<double>();
    CHECK(t_ml >= 60.0);
    CHECK(t_ml <= 120.0);
}

TEST_CASE("saturated model gives a perfect fit") {
    const auto csv = population_csv();
    const auto model_path = scratch("saturated.json");
    {
        nlohmann::json doc;
        doc["observed"] = {"x1", "x2", "x3"};
        doc["unique_cov"] = nlohmann::json::array();
        for (int i = 1; i <= 3; ++i) {
            for (int j = 1; j <= i; ++j) {
                doc["unique_cov"].push_back({{"pair", {"x" + std::to_string(i), "x" + std::to_string(j)}}});
            }
        }
        std::ofstream(model_path) << doc.dump();
    }
    const auto json_path = scratch("saturated_fit.json");
    const auto r = invoke({"fit", "--model", model_path.string(), "--data", csv.string(), "--json", json_path.string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    const auto doc = nlohmann::json::parse(slurp(json_path));
    const auto& s = doc["statistics"][0];
    CHECK(s["T"].get<double>() < 1e-8);
    CHECK(s["df"].get<int>() == 0);
    CHECK(s["p_value"].get<double>() == 1.0);
    CHECK(s["nfi"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s["cfi"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s["tli"].get<double>() == 1.0);
    CHECK(s["rmsea"].get<double>() == 0.0);
}

TEST_CASE("input errors exit 1 with a useful message") {
    const auto csv = scratch("renamed.csv");
    {
        std::ofstream out(csv);
        std::string pop = slurp(population_csv());
        out << "y1" << pop.substr(2);
    }
    auto r = invoke({"fit", "--model", kModel, "--data", csv.string()});
    CHECK(r.code == cli::kExitInputError);
    CHECK(r.err.find("x1") != std::string::npos);

    r = invoke({"fit", "--model", "/nonexistent/model.json", "--data", csv.string()});
    CHECK(r.code == cli::kExitInputError);
    CHECK(r.err.find("/nonexistent/model.json") != std::string::npos);

    CHECK(invoke({"fit", "--model", kModel, "--data", csv.string(), "--bogus"}).code == cli::kExitInputError);
    CHECK(invoke({}).code == cli::kExitInputError);
    CHECK(invoke({"fit", "--model", kModel, "--data", csv.string(), "--estimator", "wls"}).code ==
          cli::kExitInputError);

    const auto collinear = scratch("collinear.csv");
    {
        std::ofstream out(collinear);
        out << "x1,x2,x3\n1,2,3\n2,4,6\n3,6,9.5\n";
    }
    const auto model_path = scratch("three.json");
    std::ofstream(model_path) << R"({"observed": ["x1", "x2", "x3"]})";
    r = invoke({"fit", "--model", model_path.string(), "--data", collinear.string()});
    CHECK(r.code == cli::kExitInputError);
    CHECK(r.err.find("positive definite") != std::string::npos);
}

TEST_CASE("simulate is deterministic and report renders it") {
    const auto dir_a = scratch("sim_a");
    const auto dir_b = scratch("sim_b");
    const std::vector<std::string> common{"--scenario", "MisspecifiedNormal", "--sizes", "100,200", "--reps", "2",
                                          "--seed", "5", "--lm"};
    auto args_a = common;
    args_a.insert(args_a.begin(), "simulate");
    args_a.insert(args_a.end(), {"--out", dir_a.string(), "--threads", "1"});
    auto args_b = common;
    args_b.insert(args_b.begin(), "simulate");
    args_b.insert(args_b.end(), {"--out", dir_b.string(), "--threads", "2"});
    REQUIRE(invoke(args_a).code == cli::kExitOk);
    REQUIRE(invoke(args_b).code == cli::kExitOk);
    CHECK(slurp(dir_a / "rows.csv") == slurp(dir_b / "rows.csv"));
    CHECK(slurp(dir_a / "aggregate.csv") == slurp(dir_b / "aggregate.csv"));
    const auto rows = slurp(dir_a / "rows.csv");
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 2 * 2 * 2);

    const auto r = invoke({"report", "--aggregate", (dir_a / "aggregate.csv").string(), "--out",
                           (dir_a / "chart.svg").string(), "--panel", "chisq"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("MisspecifiedNormal") != std::string::npos);
    CHECK(slurp(dir_a / "chart.svg").find("</svg>") != std::string::npos);
}

TEST_CASE("simulate and report reject bad input") {
    const auto plan = scratch("bad_plan.json");
    std::ofstream(plan) << R"({"scenario": "CorrectNormal", "sample_sizes": [500, 100]})";
    CHECK(invoke({"simulate", "--plan", plan.string(), "--out", scratch("never").string()}).code ==
          cli::kExitInputError);
    CHECK(invoke({"simulate", "--scenario", "Nope", "--out", scratch("never").string()}).code ==
          cli::kExitInputError);
    CHECK(invoke({"simulate", "--plan", plan.string(), "--reps", "3", "--out", scratch("never").string()}).code ==
          cli::kExitInputError);

    const auto empty = scratch("empty_aggregate.csv");
    std::ofstream(empty) << kAggregateHeader << '\n';
    CHECK(invoke({"report", "--aggregate", empty.string(), "--out", scratch("x.svg").string()}).code ==
          cli::kExitInputError);
    const auto wrong = scratch("wrong_aggregate.csv");
    std::ofstream(wrong) << "scenario,N\nCorrectNormal,100\n";
    CHECK(invoke({"report", "--aggregate", wrong.string(), "--out", scratch("x.svg").string()}).code ==
          cli::kExitInputError);
    CHECK(invoke({"report", "--aggregate", wrong.string(), "--out", scratch("x.svg").string(), "--panel", "pie"})
              .code == cli::kExitInputError);
}
