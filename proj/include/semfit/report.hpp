#pragma once

#include "semfit/simulation.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace semfit {

enum class Panel { ChiSquare, Indices, Both };

/// chisq | indices | both
[[nodiscard]] Panel parse_panel(std::string_view text);

/// Fixed-width text table of aggregate rows.
[[nodiscard]] std::string render_table(const std::vector<AggregateRow>& rows);

/// Self-contained SVG line chart over log10(N). The chi-square panel plots
/// mean T per (estimator, variant) with a reference line at each df; the
/// index panel plots mean CFI, TLI and RMSEA with lines at 0.95 and 0.06.
[[nodiscard]] std::string render_svg(const std::vector<AggregateRow>& rows, Panel panel);

}  // namespace semfit
