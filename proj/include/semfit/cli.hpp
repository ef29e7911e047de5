#pragma once

#include "semfit/inference.hpp"
#include "semfit/report.hpp"
#include "semfit/simulation.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace semfit::cli {

/// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNotConverged = 2;

struct FitRequest {
    std::filesystem::path model_path;
    std::filesystem::path data_path;
    std::vector<StatisticKind> estimators{StatisticKind::ML};
    std::optional<std::filesystem::path> json_path;
};

struct SimulateRequest {
    std::optional<std::filesystem::path> plan_path;
    SimulationPlan plan;  // used when plan_path is empty
    std::filesystem::path out_dir;
    int threads = 1;
};

struct ReportRequest {
    std::filesystem::path aggregate_path;
    std::filesystem::path svg_path;
    Panel panel = Panel::Both;
};

int cmd_fit(const FitRequest& request, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateRequest& request, std::ostream& out, std::ostream& err);
int cmd_report(const ReportRequest& request, std::ostream& out, std::ostream& err);

/// Parses argv (including the program name) and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace semfit::cli
