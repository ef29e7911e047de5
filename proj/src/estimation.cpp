#include "semfit/estimation.hpp"

#include "semfit/errors.hpp"

#include <cmath>
#include <limits>

namespace semfit {

const char* to_string(Method method) noexcept { return method == Method::ML ? "ML" : "GLS"; }

namespace {

struct Factor {
    Eigen::LLT<Matrix> llt;
    double log_det = 0.0;
};

std::optional<Factor> try_factor(const Matrix& a) {
    Factor f{Eigen::LLT<Matrix>(a), 0.0};
    if (f.llt.info() != Eigen::Success) {
        return std::nullopt;
    }
    const auto diag = f.llt.matrixLLT().diagonal();
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
        if (!(diag(i) > 0.0) || !std::isfinite(diag(i))) {
            return std::nullopt;
        }
        f.log_det += 2.0 * std::log(diag(i));
    }
    return f;
}

Factor factor_or_throw(const Matrix& a, const std::string& which) {
    auto f = try_factor(a);
    if (!f) {
        throw SingularMatrixError(which, "matrix is not positive definite");
    }
    return std::move(*f);
}

void require_square(const Matrix& a, Eigen::Index p, const char* which) {
    if (a.rows() != p || a.cols() != p) {
        throw DimensionError(std::string(which) + " must be " + std::to_string(p) + " x " + std::to_string(p));
    }
}

// Discrepancy and its "derivative kernel" M with dF/dtheta_k = tr(M dSigma_k).
class Objective {
public:
    Objective(const CfaModel& model, const Matrix& s, Method method)
        : model_(model), s_(s), method_(method), p_(static_cast<int>(s.rows())) {
        const auto fs = factor_or_throw(s, "S");
        log_det_s_ = fs.log_det;
        if (method == Method::GLS) {
            v_ = fs.llt.solve(Matrix::Identity(p_, p_));
        }
    }

    // nullopt when Sigma(theta) is not positive definite.
    std::optional<double> value(const ParameterVector& theta, Vector* gradient) const {
        const auto mats = unpack(model_, theta);
        const Matrix sigma = implied_covariance(mats);
        auto fsig = try_factor(sigma);
        if (!fsig) {
            return std::nullopt;
        }
        double f = 0.0;
        Matrix m;
        if (method_ == Method::ML) {
            const Matrix sigma_inv_s = fsig->llt.solve(s_);
            f = fsig->log_det - log_det_s_ + sigma_inv_s.trace() - p_;
            if (gradient != nullptr) {
                const Matrix sigma_inv = fsig->llt.solve(Matrix::Identity(p_, p_));
                m = sigma_inv - sigma_inv_s * sigma_inv;
            }
        } else {
            const Matrix rv = (s_ - sigma) * v_;
            f = 0.5 * (rv * rv).trace();
            if (gradient != nullptr) {
                m = -(v_ * (s_ - sigma) * v_);
            }
        }
        if (!std::isfinite(f)) {
            return std::nullopt;
        }
        if (gradient != nullptr) {
            m = 0.5 * (m + m.transpose());
            *gradient = contract_sigma_derivatives(model_, mats, m);
        }
        return f;
    }

private:
    const CfaModel& model_;
    const Matrix& s_;
    Method method_;
    int p_;
    double log_det_s_ = 0.0;
    Matrix v_;
};

std::vector<int> floored_indices(const CfaModel& model) {
    std::vector<int> out;
    for (int k = 0; k < model.q(); ++k) {
        const auto& pos = model.free_position(k);
        if (pos.matrix == MatrixKind::Psi && pos.row == pos.col) {
            out.push_back(k);
        }
    }
    return out;
}

}  // namespace

void require_positive_definite(const Matrix& a, const std::string& which) {
    if (a.rows() != a.cols()) {
        throw DimensionError(which + " must be square");
    }
    if (!a.isApprox(a.transpose(), 1e-12) && !(a - a.transpose()).isZero(1e-12)) {
        throw SingularMatrixError(which, "matrix is not symmetric");
    }
    (void)factor_or_throw(a, which);
}

double f_ml(const Matrix& s, const Matrix& sigma) {
    require_square(sigma, s.rows(), "Sigma");
    const auto fs = factor_or_throw(s, "S");
    const auto fsig = factor_or_throw(sigma, "Sigma");
    if (s == sigma) {
        return 0.0;
    }
    return fsig.log_det - fs.log_det + fsig.llt.solve(s).trace() - static_cast<double>(s.rows());
}

double f_gls(const Matrix& s, const Matrix& sigma, const Matrix& v) {
    require_square(sigma, s.rows(), "Sigma");
    require_square(v, s.rows(), "V");
    const Matrix rv = (s - sigma) * v;
    return 0.5 * (rv * rv).trace();
}

Vector gradient_f_ml(const CfaModel& model, const ParameterVector& theta, const Matrix& s) {
    require_square(s, model.p(), "S");
    Vector g;
    if (!Objective(model, s, Method::ML).value(theta, &g)) {
        throw SingularMatrixError("Sigma", "implied covariance is not positive definite");
    }
    return g;
}

Vector gradient_f_gls(const CfaModel& model, const ParameterVector& theta, const Matrix& s, const Matrix& v) {
    require_square(s, model.p(), "S");
    require_square(v, model.p(), "V");
    const auto mats = unpack(model, theta);
    const Matrix sigma = implied_covariance(mats);
    Matrix m = -(v * (s - sigma) * v);
    m = 0.5 * (m + m.transpose());
    return contract_sigma_derivatives(model, mats, m);
}

ParameterVector starting_values(const CfaModel& model, const Matrix& s) {
    require_square(s, model.p(), "S");
    Vector theta(model.q());
    for (int k = 0; k < model.q(); ++k) {
        const auto& pos = model.free_position(k);
        const auto& start = std::get<FreeParam>(model.entry(pos)).start;
        if (start) {
            theta(k) = *start;
            continue;
        }
        const bool diagonal = pos.row == pos.col;
        switch (pos.matrix) {
            case MatrixKind::Lambda:
                theta(k) = 0.7;
                break;
            case MatrixKind::Phi:
                theta(k) = diagonal ? 1.0 : 0.0;
                break;
            case MatrixKind::Psi:
                theta(k) = diagonal ? 0.5 * s(pos.row, pos.row) : 0.0;
                break;
        }
    }
    return ParameterVector(std::move(theta));
}

FitSolution fit(const CfaModel& model, const SampleMoments& moments, Method method, const FitOptions& options) {
    require_square(moments.S, model.p(), "S");
    return fit(model, moments, method, starting_values(model, moments.S), options);
}

FitSolution fit(const CfaModel& model, const SampleMoments& moments, Method method, const ParameterVector& start,
                const FitOptions& options) {
    require_square(moments.S, model.p(), "S");
    if (start.size() != model.q()) {
        throw DimensionError("start vector length does not match model");
    }
    (void)degrees_of_freedom(model);
    const Objective objective(model, moments.S, method);
    const auto floored = floored_indices(model);
    const int q = model.q();

    auto project = [&](Vector& x) {
        for (int k : floored) {
            x(k) = std::max(x(k), options.unique_variance_floor);
        }
    };
    // Zero gradient components pinned at the variance floor and pushing outward.
    auto projected = [&](const Vector& x, const Vector& g) {
        Vector out = g;
        for (int k : floored) {
            if (x(k) <= options.unique_variance_floor && g(k) > 0.0) {
                out(k) = 0.0;
            }
        }
        return out;
    };

    Vector x = start.values;
    project(x);
    Vector g(q);
    auto f0 = objective.value(ParameterVector(x), &g);
    if (!f0) {
        // Declared starts can be infeasible; the default start is diagonal-dominant.
        x = starting_values(model, moments.S).values;
        project(x);
        f0 = objective.value(ParameterVector(x), &g);
        if (!f0) {
            throw SingularMatrixError("Sigma", "no positive definite starting point");
        }
    }
    double f = *f0;

    FitSolution sol;
    sol.method = method;
    Matrix h = Matrix::Identity(q, q);
    bool h_is_identity = true;
    bool first_update = true;
    Vector pg = projected(x, g);
    int iter = 0;
    int stalled = 0;
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxHalvings = 60;

    while (iter < options.max_iterations) {
        if (q == 0 || pg.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
            break;
        }
        Vector d = -(h * pg);
        for (int k : floored) {
            if (x(k) <= options.unique_variance_floor && pg(k) == 0.0) {
                d(k) = 0.0;
            }
        }
        double slope = pg.dot(d);
        if (!(slope < 0.0)) {
            h.setIdentity();
            h_is_identity = true;
            first_update = true;
            d = -pg;
            slope = -pg.squaredNorm();
        }

        double step = 1.0;
        bool accepted = false;
        Vector x_new;
        Vector g_new(q);
        double f_new = f;
        for (int halving = 0; halving < kMaxHalvings; ++halving, step *= 0.5) {
            x_new = x + step * d;
            project(x_new);
            const auto trial = objective.value(ParameterVector(x_new), &g_new);
            if (trial && *trial <= f + kArmijo * step * slope) {
                f_new = *trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (!h_is_identity) {
                h.setIdentity();
                h_is_identity = true;
                first_update = true;
                continue;
            }
            break;
        }
        ++iter;

        const Vector s_step = x_new - x;
        const Vector y = g_new - g;
        const double sy = s_step.dot(y);
        if (sy > 1e-12 * s_step.norm() * y.norm()) {
            if (first_update) {
                h *= sy / y.squaredNorm();
                first_update = false;
            }
            const double rho = 1.0 / sy;
            const Vector hy = h * y;
            h += ((1.0 + rho * y.dot(hy)) * rho) * (s_step * s_step.transpose()) -
                 rho * (hy * s_step.transpose() + s_step * hy.transpose());
            h_is_identity = false;
        }

        const double change = std::abs(f - f_new);
        x = std::move(x_new);
        g = g_new;
        f = f_new;
        pg = projected(x, g);
        // A stalled objective ends the search only once it persists; the
        // gradient test above decides convergence.
        stalled = change <= options.relative_f_tolerance * std::max(std::abs(f), options.relative_f_tolerance)
                      ? stalled + 1
                      : 0;
        if (stalled >= 3) {
            break;
        }
    }

    sol.theta_hat = ParameterVector(x);
    sol.f_min = f;
    sol.iterations = iter;
    sol.gradient_norm = q == 0 ? 0.0 : pg.lpNorm<Eigen::Infinity>();
    sol.converged = sol.gradient_norm <= options.gradient_tolerance;
    return sol;
}

FitSolution fit_independence(const SampleMoments& moments) {
    const auto fs = factor_or_throw(moments.S, "S");
    const int p = moments.p();
    FitSolution sol;
    sol.theta_hat = ParameterVector(moments.S.diagonal());
    double log_det_diag = 0.0;
    for (int j = 0; j < p; ++j) {
        log_det_diag += std::log(moments.S(j, j));
    }
    sol.f_min = log_det_diag - fs.log_det;
    sol.converged = true;
    sol.iterations = 0;
    sol.gradient_norm = 0.0;
    sol.method = Method::ML;
    return sol;
}

}  // namespace semfit
