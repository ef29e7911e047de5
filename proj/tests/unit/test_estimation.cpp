#include <doctest.h>

#include "semfit/errors.hpp"
#include "semfit/estimation.hpp"

#include <cmath>
#include <random>

using namespace semfit;

namespace {

Matrix random_spd(int p, std::mt19937_64& gen) {
    std::normal_distribution<double> z;
    Matrix a(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            a(i, j) = z(gen);
        }
    }
    return a * a.transpose() / p + Matrix::Identity(p, p) * 0.5;
}

// Direct evaluation of the Wishart discrepancy through determinants and an explicit inverse.
double f_ml_oracle(const Matrix& s, const Matrix& sigma) {
    return std::log(sigma.determinant()) - std::log(s.determinant()) + (s * sigma.inverse()).trace() -
           static_cast<double>(s.rows());
}

}  // namespace

TEST_CASE("f_ml worked value") {
    Matrix s(2, 2);
    s << 1.0, 0.5, 0.5, 1.0;
    const double expected = -std::log(0.75);
    CHECK(f_ml(s, Matrix::Identity(2, 2)) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(expected - 0.287682) < 1e-6);
}

TEST_CASE("f_ml is zero at S and agrees with the determinant form") {
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix s = random_spd(5, gen);
        const Matrix sigma = random_spd(5, gen);
        CHECK(f_ml(s, s) == 0.0);
        CHECK(f_ml(s, sigma) == doctest::Approx(f_ml_oracle(s, sigma)).epsilon(1e-10));
        CHECK(f_ml(s, sigma) > 0.0);
    }
}

TEST_CASE("f_ml rejects a non positive definite sigma") {
    Matrix s = Matrix::Identity(2, 2);
    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS((void)f_ml(s, bad), SingularMatrixError);
}

TEST_CASE("f_gls worked value") {
    const Matrix s = Matrix::Identity(2, 2) * 2.0;
    CHECK(f_gls(s, Matrix::Identity(2, 2), Matrix::Identity(2, 2)) == doctest::Approx(1.0));
    CHECK(f_gls(s, s, s.inverse()) == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
    const auto pop = population_model();
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    const Matrix s = implied_covariance(pop.model, pop.theta) + Matrix::Identity(15, 15) * 0.05;
    const Matrix v = s.inverse();
    for (int rep = 0; rep < 5; ++rep) {
        ParameterVector theta = pop.theta;
        for (int k = 0; k < theta.size(); ++k) {
            theta[k] += jitter(gen);
        }
        const Vector g_ml = gradient_f_ml(pop.model, theta, s);
        const Vector g_gls = gradient_f_gls(pop.model, theta, s, v);
        const double h = 1e-5;
        for (int k = 0; k < theta.size(); ++k) {
            ParameterVector up = theta;
            ParameterVector dn = theta;
            up[k] += h;
            dn[k] -= h;
            const double fd_ml = (f_ml(s, implied_covariance(pop.model, up)) -
                                  f_ml(s, implied_covariance(pop.model, dn))) / (2 * h);
            const double fd_gls = (f_gls(s, implied_covariance(pop.model, up), v) -
                                   f_gls(s, implied_covariance(pop.model, dn), v)) / (2 * h);
            CHECK(std::abs(fd_ml - g_ml(k)) <= 1e-6 * std::max(1.0, std::abs(fd_ml)));
            CHECK(std::abs(fd_gls - g_gls(k)) <= 1e-6 * std::max(1.0, std::abs(fd_gls)));
        }
    }
}

TEST_CASE("starting values follow the documented defaults") {
    const auto pop = population_model();
    const Matrix s = Matrix::Identity(15, 15) * 2.0;
    const auto start = starting_values(pop.model, s);
    for (int k = 0; k < pop.model.q(); ++k) {
        const auto& pos = pop.model.free_position(k);
        switch (pos.matrix) {
            case MatrixKind::Lambda:
                CHECK(start[k] == 0.7);
                break;
            case MatrixKind::Phi:
                CHECK(start[k] == 0.0);
                break;
            case MatrixKind::Psi:
                CHECK(start[k] == 1.0);
                break;
        }
    }
}

TEST_CASE("fit recovers the population from its own covariance") {
    const auto pop = population_model();
    SampleMoments m{implied_covariance(pop.model, pop.theta), 1000, std::nullopt};
    const auto sol = fit(pop.model, m, Method::ML);
    CHECK(sol.converged);
    CHECK(sol.f_min <= 1e-10);
    CHECK((sol.theta_hat.values - pop.theta.values).cwiseAbs().maxCoeff() <= 1e-5);

    const auto gls = fit(pop.model, m, Method::GLS);
    CHECK(gls.converged);
    CHECK(gls.f_min <= 1e-10);
}

TEST_CASE("two-variable independence fit matches the closed form") {
    Matrix s(2, 2);
    s << 1.0, 0.5, 0.5, 1.0;
    SampleMoments m{s, 100, std::nullopt};
    const auto closed = fit_independence(m);
    const auto iter = fit(independence_model(2), m, Method::ML);
    CHECK(closed.f_min == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(std::abs(iter.f_min - closed.f_min) <= 1e-8);
}

TEST_CASE("saturated model fits exactly") {
    std::mt19937_64 gen(5);
    const Matrix s = random_spd(4, gen);
    SampleMoments m{s, 50, std::nullopt};
    const auto sol = fit(saturated_model(4), m, Method::ML);
    CHECK(sol.converged);
    CHECK(sol.f_min <= 1e-10);
}

TEST_CASE("non-convergence is reported rather than thrown") {
    const auto pop = population_model();
    SampleMoments m{implied_covariance(pop.model, pop.theta) + Matrix::Identity(15, 15) * 0.1, 500, std::nullopt};
    FitOptions opts;
    opts.max_iterations = 2;
    const auto sol = fit(pop.model, m, Method::ML, opts);
    CHECK_FALSE(sol.converged);
    CHECK(sol.iterations <= 2);
}

TEST_CASE("require_positive_definite names the matrix") {
    Matrix bad(2, 2);
    bad << 1.0, 1.0, 1.0, 1.0;
    try {
        require_positive_definite(bad, "S");
        FAIL("expected throw");
    } catch (const SingularMatrixError& e) {
        CHECK(e.which() == "S");
    }
}
