#include "semfit/inference.hpp"

#include "semfit/errors.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace semfit {

const char* to_string(StatisticKind kind) noexcept {
    switch (kind) {
        case StatisticKind::ML:
            return "ML";
        case StatisticKind::RLS:
            return "RLS";
        case StatisticKind::SB:
            return "SB";
    }
    return "?";
}

double chi_square_sf(double x, int df) {
    if (df < 1) {
        throw DomainError("chi-square degrees of freedom must be positive");
    }
    if (!(x >= 0.0)) {
        throw DomainError("chi-square argument must be nonnegative");
    }
    if (x == 0.0) {
        return 1.0;
    }
    if (std::isinf(x)) {
        return 0.0;
    }
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

namespace {

double p_value_for(double value, int df) {
    if (df == 0) {
        // A saturated model reproduces S; any residual T is rounding.
        return 1.0;
    }
    return chi_square_sf(std::max(value, 0.0), df);
}

// W = 1/2 D'(V (x) V) D for symmetric V, indexed by vech positions.
Matrix normal_theory_weight(const Matrix& v) {
    const int p = static_cast<int>(v.rows());
    const int ps = moment_count(p);
    std::vector<std::pair<int, int>> idx;
    idx.reserve(static_cast<std::size_t>(ps));
    for (int j = 0; j < p; ++j) {
        for (int i = j; i < p; ++i) {
            idx.emplace_back(i, j);
        }
    }
    Matrix w(ps, ps);
    for (int a = 0; a < ps; ++a) {
        const auto [i, j] = idx[static_cast<std::size_t>(a)];
        for (int b = 0; b <= a; ++b) {
            const auto [k, l] = idx[static_cast<std::size_t>(b)];
            // D'(V(x)V)D = (V_ik V_jl + V_il V_jk) scaled by 2 per off-diagonal index pair, halved.
            const double base = v(i, k) * v(j, l) + v(i, l) * v(j, k);
            const double mult = (i == j ? 1.0 : 2.0) * (k == l ? 1.0 : 2.0);
            w(a, b) = 0.25 * mult * base;
            w(b, a) = w(a, b);
        }
    }
    return w;
}

Matrix inverse_spd(const Matrix& a, const std::string& which) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
        throw SingularMatrixError(which, "matrix is not positive definite");
    }
    return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

// Biased (divide-by-N) covariance of vech((x_i - xbar)(x_i - xbar)').
Matrix fourth_moment_covariance(const Matrix& data) {
    const auto n = data.rows();
    const int p = static_cast<int>(data.cols());
    const int ps = moment_count(p);
    const Matrix centered = data.rowwise() - data.colwise().mean();
    Matrix d(n, ps);
    for (Eigen::Index r = 0; r < n; ++r) {
        int idx = 0;
        for (int j = 0; j < p; ++j) {
            for (int i = j; i < p; ++i) {
                d(r, idx++) = centered(r, i) * centered(r, j);
            }
        }
    }
    d.rowwise() -= d.colwise().mean();
    Matrix gamma = Matrix::Zero(ps, ps);
    gamma.selfadjointView<Eigen::Lower>().rankUpdate(d.transpose(), 1.0 / static_cast<double>(n));
    return gamma.selfadjointView<Eigen::Lower>();
}

}  // namespace

TestStatistic t_ml(double f_min, int n_obs, int df) {
    if (n_obs < 2) {
        throw DomainError("test statistics need N >= 2");
    }
    TestStatistic t;
    t.value = std::max(static_cast<double>(n_obs - 1) * f_min, 0.0);
    t.df = df;
    t.p_value = p_value_for(t.value, df);
    t.kind = StatisticKind::ML;
    return t;
}

TestStatistic t_rls(const Matrix& s, const Matrix& sigma_ml, int n_obs, int df) {
    if (n_obs < 2) {
        throw DomainError("test statistics need N >= 2");
    }
    if (s.rows() != sigma_ml.rows() || s.cols() != sigma_ml.cols()) {
        throw DimensionError("S and Sigma_ml differ in size");
    }
    Eigen::LLT<Matrix> llt(sigma_ml);
    if (llt.info() != Eigen::Success) {
        throw SingularMatrixError("Sigma_ml", "matrix is not positive definite");
    }
    // (S - Sigma) Sigma^-1 = (Sigma^-1 (S - Sigma))' since both are symmetric.
    const Matrix r = llt.solve(s - sigma_ml).transpose();
    TestStatistic t;
    t.value = 0.5 * static_cast<double>(n_obs - 1) * (r * r).trace();
    t.df = df;
    t.p_value = p_value_for(t.value, df);
    t.kind = StatisticKind::RLS;
    return t;
}

double satorra_bentler_scaling(const CfaModel& model, const ParameterVector& theta_hat, const SampleMoments& moments,
                               int df) {
    if (!moments.data) {
        throw std::invalid_argument("Satorra-Bentler scaling requires raw data");
    }
    if (df < 1) {
        throw DomainError("Satorra-Bentler scaling requires df >= 1");
    }
    const Matrix sigma = implied_covariance(model, theta_hat);
    const Matrix w = normal_theory_weight(inverse_spd(sigma, "Sigma"));
    const Matrix delta = vech_jacobian(model, theta_hat);
    const Matrix wd = w * delta;
    const Matrix info = delta.transpose() * wd;
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
        throw SingularMatrixError("Delta'W Delta", "Jacobian information is rank deficient");
    }
    const Matrix u = w - wd * ldlt.solve(wd.transpose());
    const Matrix gamma = fourth_moment_covariance(*moments.data);
    return u.cwiseProduct(gamma).sum() / static_cast<double>(df);
}

TestStatistic scale_statistic(const TestStatistic& t, double scaling) {
    if (!(scaling > 0.0)) {
        throw DomainError("scaling correction must be positive");
    }
    TestStatistic out = t;
    out.value = t.value / scaling;
    out.p_value = p_value_for(out.value, t.df);
    out.kind = StatisticKind::SB;
    return out;
}

TestStatistic satorra_bentler(const TestStatistic& t_ml, const CfaModel& model, const ParameterVector& theta_hat,
                              const SampleMoments& moments) {
    return scale_statistic(t_ml, satorra_bentler_scaling(model, theta_hat, moments, t_ml.df));
}

LmResult lm_test(const CfaModel& model, const ParameterVector& theta_hat, const SampleMoments& moments,
                 const std::vector<PatternPosition>& candidates) {
    const auto mats = unpack(model, theta_hat);
    const Matrix sigma = implied_covariance(mats);
    const Matrix sigma_inv = inverse_spd(sigma, "Sigma");
    // dF_ML/dtheta_c = tr(M dSigma_c)
    Matrix m = sigma_inv - sigma_inv * moments.S * sigma_inv;
    m = 0.5 * (m + m.transpose());
    // Expected Hessian of F_ML: tr(V S_k V S_l) = vech(S_k)' 2W vech(S_l).
    const Matrix w2 = 2.0 * normal_theory_weight(sigma_inv);
    const Matrix delta = vech_jacobian(model, theta_hat);
    const Matrix w2d = w2 * delta;
    Eigen::LDLT<Matrix> info_free(delta.transpose() * w2d);
    const double half_n = 0.5 * moments.n();

    LmResult result;
    for (const auto& raw : candidates) {
        const auto pos = PatternPosition::make(raw.matrix, raw.row, raw.col);
        if (is_free(model.entry(pos))) {
            throw ModelSpecError(to_string(pos) + " is already free; LM candidates must be fixed");
        }
        const Matrix d_sigma = sigma_derivative(mats, pos);
        const double g = m.cwiseProduct(d_sigma).sum();
        const Vector dc = vech(d_sigma);
        const Vector cross = w2d.transpose() * dc;  // I_theta,c
        const double icc = dc.dot(w2 * dc);
        const double schur = icc - cross.dot(info_free.solve(cross));
        if (!(schur > 1e-10 * std::max(icc, 1.0)) || !std::isfinite(schur)) {
            result.degenerate.push_back(pos);
            continue;
        }
        LmCandidate c;
        c.target = pos;
        c.score = half_n * g * g / schur;
        c.p_value = chi_square_sf(c.score, 1);
        c.expected_drop = c.score;
        result.candidates.push_back(c);
    }
    std::stable_sort(result.candidates.begin(), result.candidates.end(),
                     [](const LmCandidate& a, const LmCandidate& b) { return a.score > b.score; });
    return result;
}

std::vector<PatternPosition> default_lm_candidates(const CfaModel& model, std::size_t cap) {
    std::vector<PatternPosition> out;
    for (int j = 0; j < model.m(); ++j) {
        for (int i = 0; i < model.p(); ++i) {
            const auto& e = model.lambda_pattern().at(i, j);
            if (!is_free(e) && std::get<FixedValue>(e).value == 0.0) {
                out.push_back(PatternPosition::make(MatrixKind::Lambda, i, j));
            }
        }
    }
    for (int j = 0; j < model.p(); ++j) {
        for (int i = j + 1; i < model.p(); ++i) {
            if (!is_free(model.psi_pattern().at(i, j))) {
                out.push_back(PatternPosition::make(MatrixKind::Psi, i, j));
            }
        }
    }
    if (out.size() > cap) {
        out.resize(cap);
    }
    return out;
}

double nfi(double t_baseline, double t_model) {
    if (t_baseline == 0.0) {
        throw DomainError("NFI undefined for a zero baseline statistic");
    }
    return (t_baseline - t_model) / t_baseline;
}

double cfi(double t_model, int df_model, double t_baseline, int df_baseline) {
    const double lambda_k = std::max(t_model - df_model, 0.0);
    const double lambda_i = std::max({t_baseline - df_baseline, 0.0, lambda_k});
    if (lambda_i == 0.0) {
        return 1.0;
    }
    return std::clamp(1.0 - lambda_k / lambda_i, 0.0, 1.0);
}

double tli(double t_model, int df_model, double t_baseline, int df_baseline) {
    if (df_model < 1 || df_baseline < 1) {
        throw DomainError("TLI needs positive degrees of freedom");
    }
    if (t_baseline == 0.0) {
        throw DomainError("TLI undefined for a zero baseline statistic");
    }
    return 1.0 - (t_model / df_model) / (t_baseline / df_baseline);
}

double conventional_tli(double t_model, int df_model, double t_baseline, int df_baseline) {
    if (df_model < 1 || df_baseline < 1) {
        throw DomainError("TLI needs positive degrees of freedom");
    }
    const double base = t_baseline / df_baseline;
    return (base - t_model / df_model) / (base - 1.0);
}

double rmsea(double t_model, int df_model, double n) {
    if (df_model < 1) {
        throw DomainError("RMSEA needs positive degrees of freedom");
    }
    if (!(n >= 1.0)) {
        throw DomainError("RMSEA needs n >= 1");
    }
    return std::sqrt(std::max((t_model - df_model) / (n * df_model), 0.0));
}

FitIndexSet fit_indices(const TestStatistic& model, const TestStatistic& baseline, int n_obs) {
    FitIndexSet out;
    out.baseline_t = baseline.value;
    out.baseline_df = baseline.df;
    out.nfi = nfi(baseline.value, model.value);
    out.cfi = cfi(model.value, model.df, baseline.value, baseline.df);
    if (model.df == 0) {
        out.tli = 1.0;
        out.rmsea = 0.0;
    } else {
        out.tli = tli(model.value, model.df, baseline.value, baseline.df);
        out.rmsea = rmsea(model.value, model.df, static_cast<double>(n_obs - 1));
    }
    out.verdict_cfi = out.cfi > kCfiCutoff;
    out.verdict_tli = out.tli > kTliCutoff;
    out.verdict_rmsea = out.rmsea < kRmseaCutoff;
    return out;
}

FitIndexSet evaluate_fit(const FitSolution& fit, const FitSolution& baseline, const SampleMoments& moments,
                         int model_df, int baseline_df) {
    return fit_indices(t_ml(fit.f_min, moments.N, model_df), t_ml(baseline.f_min, moments.N, baseline_df),
                       moments.N);
}

}  // namespace semfit
