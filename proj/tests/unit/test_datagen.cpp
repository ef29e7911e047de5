#include <doctest.h>

#include "semfit/datagen.hpp"
#include "semfit/errors.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace semfit;

namespace {

PopulationSpec population_spec(Distribution d) {
    const auto pop = population_model();
    return PopulationSpec::from_matrices(unpack(pop.model, pop.theta), d);
}

}  // namespace

TEST_CASE("generator is deterministic and streams differ") {
    RngStream a(42);
    RngStream b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    auto c = RngStream::for_coordinates(1, 0, 0, 0);
    auto d = RngStream::for_coordinates(1, 0, 0, 1);
    auto e = RngStream::for_coordinates(1, 0, 1, 0);
    const auto xc = c.next_u64();
    CHECK(xc != d.next_u64());
    CHECK(xc != e.next_u64());
}

TEST_CASE("uniform and normal moments") {
    RngStream rng(2024);
    const int n = 200000;
    double su = 0.0;
    double sz = 0.0;
    double szz = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK_MESSAGE((u >= 0.0 && u < 1.0), "uniform out of range");
        su += u;
        const double z = rng.normal();
        sz += z;
        szz += z * z;
    }
    CHECK(std::abs(su / n - 0.5) < 0.005);
    CHECK(std::abs(sz / n) < 0.01);
    CHECK(std::abs(szz / n - 1.0) < 0.02);
    double sc = 0.0;
    for (int i = 0; i < 20000; ++i) {
        sc += rng.chi_square(5);
    }
    CHECK(std::abs(sc / 20000 - 5.0) < 0.1);
}

TEST_CASE("Cholesky factor reconstructs random SPD matrices") {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> z;
    for (int rep = 0; rep < 20; ++rep) {
        Matrix a(6, 6);
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                a(i, j) = z(gen);
            }
        }
        const Matrix spd = a * a.transpose() + Matrix::Identity(6, 6);
        const Matrix l = matrix_sqrt_factor(spd);
        CHECK((l * l.transpose() - spd).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(l(0, 5) == 0.0);
    }
    Matrix bad(2, 2);
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS((void)matrix_sqrt_factor(bad), SingularMatrixError);
}

TEST_CASE("large normal sample reproduces the population covariance") {
    const auto spec = population_spec(Distribution::Normal);
    RngStream rng(5);
    const auto m = sample_covariance(generate_sample(spec, 200000, rng));
    CHECK((m.S - spec.sigma()).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("elliptical sample keeps the covariance and has heavy tails") {
    const auto spec = population_spec(Distribution::Elliptical);
    RngStream rng(6);
    const Matrix x = generate_sample(spec, 200000, rng);
    const auto m = sample_covariance(x);
    CHECK((m.S - spec.sigma()).cwiseAbs().maxCoeff() <= 0.03);
    for (int j = 0; j < x.cols(); ++j) {
        const Vector c = x.col(j).array() - x.col(j).mean();
        const double m2 = c.array().square().mean();
        const double m4 = c.array().pow(4).mean();
        CHECK(m4 / (m2 * m2) - 3.0 > 0.5);
    }
}

TEST_CASE("sample covariance hand examples") {
    Matrix two(2, 2);
    two << 0, 0, 1, 1;
    const auto m = sample_covariance(two);
    CHECK(m.S(0, 0) == 0.5);
    CHECK(m.S(0, 1) == 0.5);
    CHECK(m.S(1, 1) == 0.5);
    CHECK(m.N == 2);
    REQUIRE(m.data.has_value());

    std::mt19937_64 gen(8);
    std::normal_distribution<double> z;
    Matrix x(10, 3);
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 3; ++j) {
            x(i, j) = z(gen);
        }
    }
    Matrix dup(20, 3);
    dup << x, x;
    const auto a = sample_covariance(x);
    const auto b = sample_covariance(dup);
    const double ratio = 2.0 * (10.0 - 1.0) / (2.0 * 10.0 - 1.0);
    CHECK((b.S - a.S * ratio).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS((void)sample_covariance(Matrix::Zero(1, 3)));
}

TEST_CASE("CSV round trip is exact") {
    RngStream rng(3);
    Matrix x(5, 2);
    for (int i = 0; i < 5; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal() * 1e-7;
    }
    std::stringstream s;
    write_csv(s, {"a", "b"}, x);
    const auto back = read_csv(s);
    CHECK(back.names == std::vector<std::string>{"a", "b"});
    CHECK(back.values == x);
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("malformed CSV names the line") {
    std::stringstream s("a,b\n1,2\n3,oops\n");
    try {
        (void)read_csv(s);
        FAIL("expected throw");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find('3') != std::string::npos);
    }
}
