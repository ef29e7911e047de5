#pragma once

#include "semfit/estimation.hpp"
#include "semfit/model.hpp"

#include <vector>

namespace semfit {

enum class StatisticKind { ML, RLS, SB };

[[nodiscard]] const char* to_string(StatisticKind kind) noexcept;

/// A chi-square referred goodness-of-fit statistic.
struct TestStatistic {
    double value = 0.0;
    int df = 0;
    double p_value = 1.0;
    StatisticKind kind = StatisticKind::ML;
};

/// Upper tail P(chi2_df > x) through the regularized incomplete gamma function.
[[nodiscard]] double chi_square_sf(double x, int df);

/// (N - 1) F_ML at the minimum.
[[nodiscard]] TestStatistic t_ml(double f_min, int n_obs, int df);

/// (n / 2) tr{[(S - Sigma_ml) Sigma_ml^-1]^2}: the GLS function evaluated at
/// the ML solution with weight Sigma_ml^-1.
[[nodiscard]] TestStatistic t_rls(const Matrix& s, const Matrix& sigma_ml, int n_obs, int df);

/// Mean-scaling correction c = tr(U Gamma) / df, where U is the residual
/// weight matrix of the model at theta_hat and Gamma the distribution-free
/// covariance of the vech of centered cross-products. Requires raw data.
[[nodiscard]] double satorra_bentler_scaling(const CfaModel& model, const ParameterVector& theta_hat,
                                             const SampleMoments& moments, int df);

/// T divided by a scaling correction, re-referred to chi-square(df).
[[nodiscard]] TestStatistic scale_statistic(const TestStatistic& t, double scaling);

/// Satorra-Bentler scaled statistic T_ML / c.
[[nodiscard]] TestStatistic satorra_bentler(const TestStatistic& t_ml, const CfaModel& model,
                                            const ParameterVector& theta_hat, const SampleMoments& moments);

struct LmCandidate {
    PatternPosition target;
    double score = 0.0;
    double p_value = 1.0;
    double expected_drop = 0.0;
};

struct LmResult {
    std::vector<LmCandidate> candidates;          // sorted by descending score
    std::vector<PatternPosition> degenerate;      // singular information, no score
};

/// Univariate Lagrange-multiplier (score) tests for freeing each fixed
/// position, using the expected information at the ML solution.
[[nodiscard]] LmResult lm_test(const CfaModel& model, const ParameterVector& theta_hat, const SampleMoments& moments,
                               const std::vector<PatternPosition>& candidates);

/// Fixed zero loadings followed by fixed unique covariances, capped.
[[nodiscard]] std::vector<PatternPosition> default_lm_candidates(const CfaModel& model, std::size_t cap = 200);

[[nodiscard]] double nfi(double t_baseline, double t_model);
[[nodiscard]] double cfi(double t_model, int df_model, double t_baseline, int df_baseline);
/// 1 - (T_k / df_k) / (T_i / df_i), uncapped.
[[nodiscard]] double tli(double t_model, int df_model, double t_baseline, int df_baseline);
/// (T_i/df_i - T_k/df_k) / (T_i/df_i - 1), the textbook Tucker-Lewis form.
[[nodiscard]] double conventional_tli(double t_model, int df_model, double t_baseline, int df_baseline);
[[nodiscard]] double rmsea(double t_model, int df_model, double n);

struct FitIndexSet {
    double nfi = 1.0;
    double cfi = 1.0;
    double tli = 1.0;
    double rmsea = 0.0;
    double baseline_t = 0.0;
    int baseline_df = 0;
    bool verdict_cfi = true;
    bool verdict_tli = true;
    bool verdict_rmsea = true;
};

inline constexpr double kCfiCutoff = 0.95;
inline constexpr double kTliCutoff = 0.95;
inline constexpr double kRmseaCutoff = 0.06;

/// Indices from a model statistic and a baseline statistic of the same kind.
/// A saturated model (df 0) gets perfect TLI and RMSEA.
[[nodiscard]] FitIndexSet fit_indices(const TestStatistic& model, const TestStatistic& baseline, int n_obs);

/// T_ML for both fits, then the indices and cutoff verdicts.
[[nodiscard]] FitIndexSet evaluate_fit(const FitSolution& fit, const FitSolution& baseline,
                                       const SampleMoments& moments, int model_df, int baseline_df);

}  // namespace semfit
