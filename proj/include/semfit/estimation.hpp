#pragma once

#include "semfit/model.hpp"

#include <optional>

namespace semfit {

/// Sample covariance S (divisor N - 1), observation count, and optionally
/// the raw N x p data needed by fourth-moment statistics.
struct SampleMoments {
    Matrix S;
    int N = 0;
    std::optional<Matrix> data;

    [[nodiscard]] int p() const noexcept { return static_cast<int>(S.rows()); }
    /// Multiplier applied to discrepancies in test statistics: N - 1.
    [[nodiscard]] double n() const noexcept { return static_cast<double>(N - 1); }
};

enum class Method { ML, GLS };

[[nodiscard]] const char* to_string(Method method) noexcept;

struct FitOptions {
    double gradient_tolerance = 1e-6;    // max-norm of the (projected) gradient
    double relative_f_tolerance = 1e-15;
    int max_iterations = 500;
    double unique_variance_floor = 1e-4;
};

struct FitSolution {
    ParameterVector theta_hat;
    double f_min = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    Method method = Method::ML;
};

/// Wishart discrepancy log|Sigma| - log|S| + tr(S Sigma^-1) - p.
[[nodiscard]] double f_ml(const Matrix& s, const Matrix& sigma);

/// Normal-theory GLS discrepancy 1/2 tr{[(S - Sigma) V]^2}.
[[nodiscard]] double f_gls(const Matrix& s, const Matrix& sigma, const Matrix& v);

[[nodiscard]] Vector gradient_f_ml(const CfaModel& model, const ParameterVector& theta, const Matrix& s);
[[nodiscard]] Vector gradient_f_gls(const CfaModel& model, const ParameterVector& theta, const Matrix& s,
                                    const Matrix& v);

/// Loadings at their declared start (0.7 otherwise), factor covariances 0,
/// free factor variances 1, unique variances 0.5 * S_jj, unique covariances 0.
/// An explicitly declared start always wins.
[[nodiscard]] ParameterVector starting_values(const CfaModel& model, const Matrix& s);

/// Minimizes the ML or GLS (V = S^-1) discrepancy with BFGS and a
/// backtracking Armijo line search. Non-convergence is reported through
/// FitSolution::converged rather than thrown.
[[nodiscard]] FitSolution fit(const CfaModel& model, const SampleMoments& moments, Method method,
                              const FitOptions& options = {});
[[nodiscard]] FitSolution fit(const CfaModel& model, const SampleMoments& moments, Method method,
                              const ParameterVector& start, const FitOptions& options = {});

/// Closed-form ML fit of independence_model(p): theta_jj = S_jj.
[[nodiscard]] FitSolution fit_independence(const SampleMoments& moments);

/// Throws SingularMatrixError(which) unless `a` is symmetric positive definite.
void require_positive_definite(const Matrix& a, const std::string& which);

}  // namespace semfit
