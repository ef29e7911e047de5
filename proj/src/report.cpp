#include "semfit/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace semfit {

Panel parse_panel(std::string_view text) {
    if (text == "chisq") {
        return Panel::ChiSquare;
    }
    if (text == "indices") {
        return Panel::Indices;
    }
    if (text == "both") {
        return Panel::Both;
    }
    throw std::invalid_argument("unknown panel '" + std::string(text) + "' (expected chisq, indices or both)");
}

namespace {

std::string fixed(double v, int digits) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
    return std::string(buf.data(), res.ptr);
}

std::string cell(double v, int digits) { return std::isnan(v) ? std::string("NA") : fixed(v, digits); }

}  // namespace

std::string render_table(const std::vector<AggregateRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(24) << "scenario" << std::right << std::setw(6) << "N" << std::setw(5) << "est"
        << std::setw(13) << "variant" << std::setw(5) << "df" << std::setw(10) << "mean_T" << std::setw(8) << "rej.05"
        << std::setw(8) << "NFI" << std::setw(8) << "CFI" << std::setw(8) << "TLI" << std::setw(8) << "RMSEA"
        << std::setw(8) << "nonconv" << '\n';
    for (const auto& r : rows) {
        out << std::left << std::setw(24) << to_string(r.scenario) << std::right << std::setw(6) << r.n
            << std::setw(5) << to_string(r.estimator) << std::setw(13) << to_string(r.variant) << std::setw(5) << r.df
            << std::setw(10) << cell(r.mean_t, 2) << std::setw(8) << cell(r.rejection_rate_05, 3) << std::setw(8)
            << cell(r.mean_nfi, 3) << std::setw(8) << cell(r.mean_cfi, 3) << std::setw(8) << cell(r.mean_tli, 3)
            << std::setw(8) << cell(r.mean_rmsea, 3) << std::setw(8) << cell(r.nonconvergence_rate, 3) << '\n';
    }
    return out.str();
}

namespace {

constexpr double kPanelWidth = 480.0;
constexpr double kPanelHeight = 360.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

struct Series {
    std::string label;
    std::vector<std::pair<int, double>> points;  // (N, y)
};

class PanelFrame {
public:
    PanelFrame(double x_offset, double log_lo, double log_hi, double y_lo, double y_hi)
        : x0_(x_offset + kLeft),
          x1_(x_offset + kPanelWidth - kRight),
          y0_(kPanelHeight - kBottom),
          y1_(kTop),
          log_lo_(log_lo),
          log_hi_(log_hi),
          y_lo_(y_lo),
          y_hi_(y_hi) {}

    [[nodiscard]] double x(int n) const {
        return x0_ + (std::log10(static_cast<double>(n)) - log_lo_) / (log_hi_ - log_lo_) * (x1_ - x0_);
    }
    [[nodiscard]] double y(double v) const { return y0_ - (v - y_lo_) / (y_hi_ - y_lo_) * (y0_ - y1_); }
    [[nodiscard]] double left() const { return x0_; }
    [[nodiscard]] double right() const { return x1_; }
    [[nodiscard]] double bottom() const { return y0_; }
    [[nodiscard]] double top() const { return y1_; }
    [[nodiscard]] double y_lo() const { return y_lo_; }
    [[nodiscard]] double y_hi() const { return y_hi_; }

private:
    double x0_, x1_, y0_, y1_;
    double log_lo_, log_hi_, y_lo_, y_hi_;
};

void draw_axes(std::ostringstream& out, const PanelFrame& f, const std::set<int>& sizes, const std::string& title,
               const std::string& y_label) {
    out << "<rect x=\"" << fixed(f.left(), 2) << "\" y=\"" << fixed(f.top(), 2) << "\" width=\""
        << fixed(f.right() - f.left(), 2) << "\" height=\"" << fixed(f.bottom() - f.top(), 2)
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << fixed((f.left() + f.right()) / 2, 2) << "\" y=\"24\" text-anchor=\"middle\">" << title
        << "</text>\n";
    for (int n : sizes) {
        out << "<line x1=\"" << fixed(f.x(n), 2) << "\" y1=\"" << fixed(f.bottom(), 2) << "\" x2=\""
            << fixed(f.x(n), 2) << "\" y2=\"" << fixed(f.bottom() + 5, 2) << "\" stroke=\"#444\"/>\n";
        out << "<text x=\"" << fixed(f.x(n), 2) << "\" y=\"" << fixed(f.bottom() + 18, 2)
            << "\" text-anchor=\"middle\" font-size=\"10\">" << n << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const double v = f.y_lo() + (f.y_hi() - f.y_lo()) * k / 4.0;
        out << "<text x=\"" << fixed(f.left() - 6, 2) << "\" y=\"" << fixed(f.y(v) + 3, 2)
            << "\" text-anchor=\"end\" font-size=\"10\">" << fixed(v, 2) << "</text>\n";
    }
    out << "<text x=\"" << fixed((f.left() + f.right()) / 2, 2) << "\" y=\"" << fixed(f.bottom() + 38, 2)
        << "\" text-anchor=\"middle\" font-size=\"11\">N (log scale)</text>\n";
    out << "<text x=\"14\" y=\"" << fixed((f.top() + f.bottom()) / 2, 2) << "\" font-size=\"11\" transform=\"rotate(-90 14 "
        << fixed((f.top() + f.bottom()) / 2, 2) << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
}

void draw_reference(std::ostringstream& out, const PanelFrame& f, double v, const std::string& label) {
    if (v < f.y_lo() || v > f.y_hi()) {
        return;
    }
    out << "<line class=\"reference\" x1=\"" << fixed(f.left(), 2) << "\" y1=\"" << fixed(f.y(v), 2) << "\" x2=\""
        << fixed(f.right(), 2) << "\" y2=\"" << fixed(f.y(v), 2)
        << "\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n";
    out << "<text x=\"" << fixed(f.right() - 4, 2) << "\" y=\"" << fixed(f.y(v) - 4, 2)
        << "\" text-anchor=\"end\" font-size=\"10\" fill=\"#666\">" << label << "</text>\n";
}

void draw_series(std::ostringstream& out, const PanelFrame& f, const std::vector<Series>& series,
                 const char* panel_name) {
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPalette.size()];
        out << "<polyline class=\"series\" data-panel=\"" << panel_name << "\" data-series=\"" << series[s].label
            << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series[s].points.size(); ++i) {
            const auto& [n, v] = series[s].points[i];
            out << (i ? " " : "") << fixed(f.x(n), 2) << ',' << fixed(f.y(v), 2);
        }
        out << "\"/>\n";
        for (const auto& [n, v] : series[s].points) {
            out << "<circle cx=\"" << fixed(f.x(n), 2) << "\" cy=\"" << fixed(f.y(v), 2) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        }
        out << "<text x=\"" << fixed(f.left() + 8, 2) << "\" y=\"" << fixed(f.top() + 14 + 13.0 * s, 2)
            << "\" font-size=\"10\" fill=\"" << color << "\">" << series[s].label << "</text>\n";
    }
}

std::string series_label(const AggregateRow& r) {
    return std::string(to_string(r.estimator)) + " " + to_string(r.variant);
}

}  // namespace

std::string render_svg(const std::vector<AggregateRow>& rows, Panel panel) {
    if (rows.empty()) {
        throw std::invalid_argument("no aggregate rows to plot");
    }
    using Key = std::tuple<int, int, int>;
    std::map<Key, std::vector<const AggregateRow*>> groups;
    std::set<int> sizes;
    std::set<int> dfs;
    bool multi_scenario = false;
    for (const auto& r : rows) {
        groups[Key{static_cast<int>(r.scenario), static_cast<int>(r.estimator), static_cast<int>(r.variant)}]
            .push_back(&r);
        sizes.insert(r.n);
        dfs.insert(r.df);
        multi_scenario = multi_scenario || r.scenario != rows.front().scenario;
    }
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(), [](const auto* a, const auto* b) { return a->n < b->n; });
    }

    double log_lo = std::log10(static_cast<double>(*sizes.begin()));
    double log_hi = std::log10(static_cast<double>(*sizes.rbegin()));
    if (log_hi - log_lo < 1e-9) {
        log_lo -= 0.1;
        log_hi += 0.1;
    }

    auto collect = [&](auto value, const std::string& suffix) {
        std::vector<Series> out;
        for (const auto& [key, members] : groups) {
            Series s;
            s.label = (multi_scenario ? std::string(to_string(members.front()->scenario)) + " " : std::string()) +
                      series_label(*members.front()) + suffix;
            for (const auto* r : members) {
                const double v = value(*r);
                if (std::isfinite(v)) {
                    s.points.emplace_back(r->n, v);
                }
            }
            out.push_back(std::move(s));
        }
        return out;
    };

    const bool show_chi = panel != Panel::Indices;
    const bool show_idx = panel != Panel::ChiSquare;
    const double width = kPanelWidth * ((show_chi ? 1 : 0) + (show_idx ? 1 : 0));

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\""
        << fixed(kPanelHeight, 0) << "\" viewBox=\"0 0 " << fixed(width, 0) << ' ' << fixed(kPanelHeight, 0)
        << "\" font-family=\"sans-serif\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    double x_offset = 0.0;
    if (show_chi) {
        const auto series = collect([](const AggregateRow& r) { return r.mean_t; }, "");
        double y_hi = static_cast<double>(*dfs.rbegin());
        for (const auto& s : series) {
            for (const auto& pt : s.points) {
                y_hi = std::max(y_hi, pt.second);
            }
        }
        const PanelFrame frame(x_offset, log_lo, log_hi, 0.0, y_hi * 1.1);
        out << "<g class=\"panel\" id=\"chisq\">\n";
        draw_axes(out, frame, sizes, "Mean chi-square statistic", "mean T");
        for (int df : dfs) {
            draw_reference(out, frame, df, "df = " + std::to_string(df));
        }
        draw_series(out, frame, series, "chisq");
        out << "</g>\n";
        x_offset += kPanelWidth;
    }
    if (show_idx) {
        std::vector<Series> series;
        for (auto&& part : {collect([](const AggregateRow& r) { return r.mean_cfi; }, " CFI"),
                            collect([](const AggregateRow& r) { return r.mean_tli; }, " TLI"),
                            collect([](const AggregateRow& r) { return r.mean_rmsea; }, " RMSEA")}) {
            series.insert(series.end(), part.begin(), part.end());
        }
        double y_lo = 0.0;
        double y_hi = 1.0;
        for (const auto& s : series) {
            for (const auto& pt : s.points) {
                y_lo = std::min(y_lo, pt.second);
                y_hi = std::max(y_hi, pt.second);
            }
        }
        const PanelFrame frame(x_offset, log_lo, log_hi, y_lo, y_hi + 0.05 * (y_hi - y_lo));
        out << "<g class=\"panel\" id=\"indices\">\n";
        draw_axes(out, frame, sizes, "Mean fit indices", "index value");
        draw_reference(out, frame, 0.95, "0.95 (CFI, TLI)");
        draw_reference(out, frame, 0.06, "0.06 (RMSEA)");
        draw_series(out, frame, series, "indices");
        out << "</g>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace semfit
