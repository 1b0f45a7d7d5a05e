#include <cmath>

#include <doctest.h>

#include "fiss/distkit.hpp"
#include "fiss/error.hpp"
#include "fiss/numkit.hpp"

using namespace fiss;
using namespace fiss::num;

namespace {

Matrix random_spd(std::size_t n, std::uint64_t seed)
{
    dist::RngStream rng(seed, 0);
    Matrix a(n, n);
    for (double& v : a.entries()) {
        v = rng.normal();
    }
    return add(gram(a), Matrix::identity(n));
}

double max_abs_diff(const Matrix& a, const Matrix& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
        m = std::max(m, std::abs(a.entries()[i] - b.entries()[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("cholesky of identity is identity")
{
    const Matrix l = cholesky(Matrix::identity(3));
    CHECK(max_abs_diff(l, Matrix::identity(3)) == 0.0);
}

TEST_CASE("cholesky of a 2x2 matches hand factor")
{
    const Matrix l = cholesky(Matrix{{4, 2}, {2, 3}});
    CHECK(l(0, 0) == doctest::Approx(2.0));
    CHECK(l(1, 0) == doctest::Approx(1.0));
    CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK(l(0, 1) == 0.0);
    const Matrix back = multiply(l, transpose(l));
    CHECK(max_abs_diff(back, Matrix{{4, 2}, {2, 3}}) < 1e-14);
}

TEST_CASE("cholesky rejects an indefinite matrix")
{
    try {
        cholesky(Matrix{{1, 2}, {2, 1}});
        FAIL("expected NotPositiveDefinite");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::NotPositiveDefinite);
    }
}

TEST_CASE("cholesky round trip on random SPD matrices")
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Matrix m = random_spd(3 + s % 7, s);
        const Matrix l = cholesky(m);
        const Matrix back = multiply(l, transpose(l));
        CHECK(frobenius_norm(subtract(back, m)) / frobenius_norm(m) < 1e-10);
    }
}

TEST_CASE("asymmetric input is rejected")
{
    CHECK_THROWS_AS(cholesky(Matrix{{1, 0.5}, {0.4, 1}}), Error);
    CHECK_THROWS_AS(cholesky(Matrix{{1, 0, 0}, {0, 1, 0}}), Error);
}

TEST_CASE("solve_spd")
{
    const Vector v{1.5, -2.0, 3.0};
    const Vector x0 = solve_spd(Matrix::identity(3), v);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(x0[i] == doctest::Approx(v[i]));
    }
    const Vector x1 = solve_spd(Matrix{{2, 0}, {0, 4}}, Vector{2, 8});
    CHECK(x1[0] == doctest::Approx(1.0));
    CHECK(x1[1] == doctest::Approx(2.0));

    const Matrix m = random_spd(5, 99);
    const Vector rhs{1, -1, 2, 0.5, 3};
    const Vector x = solve_spd(m, rhs);
    const Vector r = axpy(-1.0, rhs, multiply(m, x));
    CHECK(norm2(r) / norm2(rhs) < 1e-8);

    // 2x2 against the explicit inverse.
    const Matrix a{{3, 1}, {1, 2}};
    const double det = 5.0;
    const Vector b{1, 4};
    const Vector xa = solve_spd(a, b);
    CHECK(std::abs(xa[0] - (2 * 1 - 1 * 4) / det) < 1e-10);
    CHECK(std::abs(xa[1] - (-1 * 1 + 3 * 4) / det) < 1e-10);
}

TEST_CASE("sym_eigen small cases")
{
    const SymEigen id = sym_eigen(Matrix::identity(3));
    for (double v : id.values) {
        CHECK(v == doctest::Approx(1.0));
    }
    const SymEigen e2 = sym_eigen(Matrix{{2, 1}, {1, 2}});
    CHECK(e2.values[0] == doctest::Approx(3.0));
    CHECK(e2.values[1] == doctest::Approx(1.0));
    const double d[] = {5, 2, -1};
    const SymEigen e3 = sym_eigen(Matrix::diagonal(d));
    CHECK(e3.values[0] == doctest::Approx(5.0));
    CHECK(e3.values[1] == doctest::Approx(2.0));
    CHECK(e3.values[2] == doctest::Approx(-1.0));
    CHECK_THROWS_AS(sym_eigen(Matrix(2, 3)), Error);
}

TEST_CASE("sym_eigen decomposition property")
{
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Matrix m = random_spd(8, 100 + s);
        const SymEigen e = sym_eigen(m);
        const Matrix mv = multiply(m, e.vectors);
        const Matrix vl = multiply(e.vectors, Matrix::diagonal(e.values));
        CHECK(max_abs_diff(mv, vl) < 1e-8 * frobenius_norm(m));
        CHECK(max_abs_diff(gram(e.vectors), Matrix::identity(8)) < 1e-8);
        for (std::size_t i = 1; i < e.values.size(); ++i) {
            CHECK(e.values[i - 1] >= e.values[i]);
        }
    }
}

TEST_CASE("spd_inverse_sqrt")
{
    CHECK(max_abs_diff(spd_inverse_sqrt(Matrix::identity(3)), Matrix::identity(3)) < 1e-14);
    const double d[] = {4, 9};
    const Matrix r = spd_inverse_sqrt(Matrix::diagonal(d));
    CHECK(r(0, 0) == doctest::Approx(0.5));
    CHECK(r(1, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(std::abs(r(0, 1)) < 1e-14);

    const Matrix m{{2, 1}, {1, 2}};
    const Matrix s = spd_inverse_sqrt(m);
    CHECK(max_abs_diff(multiply(multiply(s, s), m), Matrix::identity(2)) < 1e-7);
    CHECK(max_abs_diff(multiply(multiply(s, m), s), Matrix::identity(2)) < 1e-7);
    CHECK_THROWS_AS(spd_inverse_sqrt(Matrix{{1, 2}, {2, 1}}), Error);
}

TEST_CASE("normal cdf and quantile")
{
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(std::abs(normal_quantile(0.975) - 1.959963984540054) < 1e-8);
    for (double x = -8.0; x <= 8.0; x += 0.37) {
        CHECK(std::abs(normal_cdf(x) + normal_cdf(-x) - 1.0) < 1e-15);
    }
    for (double p : {1e-10, 0.001, 0.1, 0.5, 0.77, 0.999}) {
        CHECK(std::abs(normal_cdf(normal_quantile(p)) - p) < 1e-10);
    }
    CHECK_THROWS_AS(normal_quantile(0.0), Error);
    CHECK_THROWS_AS(normal_quantile(1.0), Error);
}

TEST_CASE("chi-square and t")
{
    CHECK(std::abs(chisq_quantile(0.5, 2) - 2.0 * std::log(2.0)) < 1e-6);
    // df = 2 is exponential with mean 2.
    for (double x : {0.1, 1.0, 5.0}) {
        CHECK(std::abs(chisq_cdf(x, 2) - (1.0 - std::exp(-x / 2))) < 1e-12);
    }
    CHECK(chisq_quantile(0.3, 0) == 0.0);
    CHECK(std::abs(chisq_quantile(0.95, 10) - 18.307038053275146) < 1e-6);
    CHECK(std::abs(t_quantile(0.975, 10) - 2.2281388519649385) < 1e-6);
    CHECK(t_cdf(0.0, 3) == doctest::Approx(0.5));
    // df = 1 is Cauchy.
    CHECK(std::abs(t_cdf(1.0, 1) - 0.75) < 1e-12);
    for (double x : {-3.0, -1.0, 0.5, 2.0}) {
        CHECK(std::abs(t_cdf(x, 1000) - normal_cdf(x)) < 1e-3);
    }
    CHECK(log_gamma(5.0) == doctest::Approx(std::log(24.0)));
    CHECK_THROWS_AS(log_gamma(0.0), Error);
    CHECK_THROWS_AS(t_cdf(1.0, 0.0), Error);
}
