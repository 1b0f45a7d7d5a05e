#include <algorithm>
#include <cmath>
#include <sstream>

#include <doctest.h>

#include "fiss/error.hpp"
#include "fiss/trendfilter.hpp"

using namespace fiss;
using namespace fiss::trend;
using num::Matrix;
using num::Vector;

namespace {

/// Accelerated projected gradient with adaptive restart on the dual:
/// min ½‖y − Dᵀν‖² over |ν| ≤ λ.
Vector dual_oracle(const Vector& y, int k, double lambda, int iterations)
{
    const Matrix D = diff_matrix(y.size(), k);
    const Matrix DDt = num::multiply(D, num::transpose(D));
    const double L = num::sym_eigen(DDt).values.front();
    const Vector Dy = num::multiply(D, y);
    const std::size_t m = D.rows();
    Vector nu(m, 0.0);
    Vector prev(m, 0.0);
    Vector w(m, 0.0);
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        const Vector grad = num::multiply(DDt, w);
        prev = nu;
        for (std::size_t r = 0; r < m; ++r) {
            const double v = w[r] - (grad[r] - Dy[r]) / L;
            nu[r] = std::clamp(v, -lambda, lambda);
        }
        double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        double turn = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            turn += (w[r] - nu[r]) * (nu[r] - prev[r]);
        }
        if (turn > 0.0) {
            tn = 1.0;
        }
        for (std::size_t r = 0; r < m; ++r) {
            w[r] = nu[r] + (t - 1.0) / tn * (nu[r] - prev[r]);
        }
        t = tn;
    }
    Vector x = y;
    const Vector dtnu = num::multiply(num::transpose(D), nu);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] -= dtnu[i];
    }
    return x;
}

Vector slope_walk(std::size_t n, double p_knot, double sigma, dist::RngStream& rng, Vector* mean = nullptr)
{
    Vector f(n);
    Vector y(n);
    double v = rng.uniform() - 0.5;
    double level = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0 && rng.uniform() < p_knot) {
            v = rng.uniform() - 0.5;
        }
        level += v;
        f[t] = level;
        y[t] = level + sigma * rng.normal();
    }
    if (mean != nullptr) {
        *mean = f;
    }
    return y;
}

}  // namespace

TEST_CASE("difference matrices match the small examples")
{
    const Matrix d0 = diff_matrix(4, 0);
    CHECK(d0.rows() == 3);
    CHECK(d0.cols() == 4);
    const double e0[3][4] = {{-1, 1, 0, 0}, {0, -1, 1, 0}, {0, 0, -1, 1}};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(d0(i, j) == e0[i][j]);
        }
    }
    const Matrix d1 = diff_matrix(4, 1);
    const double e1[2][4] = {{1, -2, 1, 0}, {0, 1, -2, 1}};
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(d1(i, j) == e1[i][j]);
        }
    }
    const Vector lin = num::multiply(d1, Vector{1, 2, 3, 4});
    CHECK(lin[0] == 0.0);
    CHECK(lin[1] == 0.0);
    CHECK_THROWS_AS(diff_matrix(2, 1), Error);
}

TEST_CASE("higher order differences follow the recursion")
{
    for (int k = 0; k <= 3; ++k) {
        const std::size_t n = 9;
        const Matrix next = diff_matrix(n, k + 1);
        const Matrix first = diff_matrix(n - static_cast<std::size_t>(k) - 1, 0);
        const Matrix prod = num::multiply(first, diff_matrix(n, k));
        REQUIRE(prod.rows() == next.rows());
        for (std::size_t i = 0; i < next.rows(); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(prod(i, j) == next(i, j));
            }
        }
    }
}

TEST_CASE("differences annihilate polynomials of degree k exactly")
{
    for (int k = 0; k <= 4; ++k) {
        const std::size_t n = 12;
        for (int deg = 0; deg <= k; ++deg) {
            Vector p(n);
            for (std::size_t t = 0; t < n; ++t) {
                p[t] = std::pow(static_cast<double>(t), deg) + (deg >= 1 ? 3.0 * static_cast<double>(t) : 0.0) - 7.0;
            }
            for (double v : apply_diff(p, k)) {
                CHECK(v == 0.0);
            }
        }
        Vector q(n);
        for (std::size_t t = 0; t < n; ++t) {
            q[t] = std::pow(static_cast<double>(t), k + 1);
        }
        for (double v : apply_diff(q, k)) {
            CHECK(v != 0.0);
        }
    }
}

TEST_CASE("ADMM edge cases")
{
    dist::RngStream rng(11, 0);
    Vector y(30);
    for (double& v : y) {
        v = rng.normal();
    }
    const TrendFit zero = trendfilter_admm(y, 1, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(zero.fitted[i] == y[i]);
    }

    const TrendFit line = trendfilter_admm(y, 1, 10.0 * trend_lambda_max(y, 1) + 1.0);
    const std::size_t n = y.size();
    Matrix X(n, 2);
    for (std::size_t t = 0; t < n; ++t) {
        X(t, 0) = 1.0;
        X(t, 1) = static_cast<double>(t + 1);
    }
    const Vector coef = num::solve_spd(num::gram(X), num::multiply_transposed(X, y));
    const Vector ols = num::multiply(X, coef);
    for (std::size_t t = 0; t < n; ++t) {
        CHECK(line.fitted[t] == doctest::Approx(ols[t]).epsilon(1e-9));
    }
    CHECK(line.knots.empty());

    const TrendFit pair = trendfilter_admm(Vector{0.0, 1.0}, 0, 0.25);
    CHECK(pair.fitted[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(pair.fitted[1] == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(trendfilter_admm(y, 1, -1.0), Error);
}

TEST_CASE("ADMM reaches the oracle objective on small instances")
{
    dist::RngStream rng(12, 0);
    for (int inst = 0; inst < 6; ++inst) {
        const int k = inst % 3;
        const std::size_t n = 12 + 3 * static_cast<std::size_t>(inst);
        const Vector y = slope_walk(n, 0.2, 0.3, rng);
        const double lambda = trend_lambda_max(y, k) * (0.02 + 0.1 * inst);
        const TrendFit fit = trendfilter_admm(y, k, lambda);
        const Vector ox = dual_oracle(y, k, lambda, 200000);
        const double oracle = trend_objective(y, ox, k, lambda);
        CHECK(fit.objective <= oracle + 1e-6 * (1.0 + std::abs(oracle)));
        CHECK(std::abs(fit.objective - oracle) <= 1e-6 * std::abs(oracle));
    }
}

TEST_CASE("ADMM without polishing converges to the same fit")
{
    dist::RngStream rng(13, 0);
    const Vector y = slope_walk(40, 0.2, 0.5, rng);
    const double lambda = 0.05 * trend_lambda_max(y, 1);
    AdmmOptions plain;
    plain.polish = false;
    plain.abs_tol = 1e-9;
    plain.rel_tol = 1e-8;
    plain.max_iter = 200000;
    const TrendFit a = trendfilter_admm(y, 1, lambda);
    const TrendFit b = trendfilter_admm(y, 1, lambda, plain);
    CHECK(b.objective == doctest::Approx(a.objective).epsilon(1e-6));
    CHECK(a.objective <= b.objective + 1e-9);
}

TEST_CASE("knots are read from the fitted differences")
{
    Vector x(10);
    for (std::size_t t = 0; t < x.size(); ++t) {
        x[t] = t <= 4 ? static_cast<double>(t) : 4.0 - 2.0 * (static_cast<double>(t) - 4.0);
    }
    const auto knots = knots_of(x, 1);
    REQUIRE(knots.size() == 1);
    CHECK(knots[0] == 4);
    x[7] += 1e-9;
    CHECK(knots_of(x, 1).size() == 1);
}

TEST_CASE("lambda grid starts where the fit becomes polynomial")
{
    dist::RngStream rng(14, 0);
    const Vector y = slope_walk(50, 0.2, 0.2, rng);
    const Vector grid = trend_lambda_grid(y, 1, 10, 1e-3);
    REQUIRE(grid.size() == 10);
    CHECK(grid.front() == doctest::Approx(trend_lambda_max(y, 1)));
    CHECK(grid.back() == doctest::Approx(1e-3 * grid.front()));
    CHECK(trendfilter_admm(y, 1, grid.front() * (1.0 + 1e-9)).knots.empty());
    CHECK(!trendfilter_admm(y, 1, grid.front() * 0.9).knots.empty());
}

TEST_CASE("falling factorial basis examples")
{
    const Matrix A0 = falling_factorial_basis(std::vector<std::size_t>{}, 1, 6);
    REQUIRE(A0.cols() == 2);
    for (std::size_t t = 0; t < 6; ++t) {
        CHECK(A0(t, 0) == 1.0);
        CHECK(A0(t, 1) == static_cast<double>(t));
    }
    const Matrix A1 = falling_factorial_basis(std::vector<std::size_t>{3, 3}, 1, 8);
    REQUIRE(A1.cols() == 3);
    for (std::size_t t = 0; t < 8; ++t) {
        CHECK(A1(t, 2) == std::max(static_cast<double>(t) - 3.0, 0.0));
    }
    CHECK_THROWS_AS(falling_factorial_basis(std::vector<std::size_t>{7}, 1, 8), Error);
    CHECK_THROWS_AS(falling_factorial_basis(std::vector<std::size_t>{0}, 1, 8), Error);
}

TEST_CASE("each knot column is a unit impulse under the differences")
{
    for (int k = 0; k <= 3; ++k) {
        const std::size_t n = 14;
        const std::vector<std::size_t> knots{static_cast<std::size_t>(k) + 2, 8, 11};
        const Matrix A = falling_factorial_basis(knots, k, n);
        double fact = 1.0;
        for (int l = 2; l <= k; ++l) {
            fact *= l;
        }
        for (std::size_t m = 0; m < knots.size(); ++m) {
            const Vector col = A.col(static_cast<std::size_t>(k) + 1 + m);
            const Vector d = apply_diff(col, k);
            for (std::size_t r = 0; r < d.size(); ++r) {
                CHECK(d[r] == (r + static_cast<std::size_t>(k) == knots[m] ? fact : 0.0));
            }
        }
    }
}

TEST_CASE("projection reproduces a piecewise-linear function with the same knot")
{
    const std::size_t n = 20;
    Vector f(n);
    for (std::size_t t = 0; t < n; ++t) {
        f[t] = 2.0 + 0.5 * static_cast<double>(t) - 1.5 * std::max(static_cast<double>(t) - 9.0, 0.0);
    }
    const Matrix A = falling_factorial_basis(std::vector<std::size_t>{9}, 1, n);
    const Vector proj = projected_mean(A, f);
    for (std::size_t t = 0; t < n; ++t) {
        CHECK(std::abs(proj[t] - f[t]) < 1e-10);
    }
}

TEST_CASE("pointwise band widths")
{
    const std::size_t n = 25;
    const Matrix A(n, 1, 1.0);
    Vector g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = static_cast<double>(i % 4);
    }
    const double sigma = 0.7;
    const double tau = 0.5;
    const double alpha = 0.1;
    const Band b = pointwise_band(g, A, Matrix{{sigma * sigma}}, tau, alpha);
    const double z = num::normal_quantile(1.0 - alpha / 2.0);
    const double expect = z * sigma * std::sqrt((1.0 + 1.0 / (tau * tau)) / static_cast<double>(n));
    double mean = 0.0;
    for (double v : g) {
        mean += v / static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(b.halfwidths[i] == doctest::Approx(expect).epsilon(1e-12));
        CHECK(b.centers[i] == doctest::Approx(mean).epsilon(1e-12));
    }
    CHECK(b.kind == BandKind::Pointwise);
    CHECK(b.multiplier == doctest::Approx(z));

    Matrix full(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        full(i, i) = sigma * sigma;
    }
    const Band same = pointwise_band(g, A, full, tau, alpha);
    CHECK(same.halfwidths[3] == doctest::Approx(expect).epsilon(1e-12));

    const Matrix B = falling_factorial_basis(std::vector<std::size_t>{8, 15}, 1, n);
    const Band b1 = pointwise_band(g, B, Matrix{{1.0}}, 1.0, alpha);
    const Band b2 = pointwise_band(g, B, Matrix{{1.0}}, 3.0, alpha);
    const Band binf = pointwise_band(g, B, Matrix{{1.0}}, INFINITY, alpha);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(b1.halfwidths[i] / b2.halfwidths[i] == doctest::Approx(std::sqrt(2.0 / (1.0 + 1.0 / 9.0))));
        CHECK(b1.halfwidths[i] / binf.halfwidths[i] == doctest::Approx(std::sqrt(2.0)));
    }

    Matrix singular(n, 2, 1.0);
    CHECK_THROWS_AS(pointwise_band(g, singular, Matrix{{1.0}}, 1.0, alpha), Error);
}

TEST_CASE("uniform multiplier equation")
{
    for (double alpha : {0.05, 0.1, 0.2}) {
        CHECK(solve_multiplier(0.0, alpha) == doctest::Approx(num::normal_quantile(1.0 - alpha / 2.0)).epsilon(1e-10));
    }
    const double c = solve_multiplier(10.0, 0.05);
    CHECK(std::abs(multiplier_lhs(c, 10.0) - 0.025) < 1e-8);
    CHECK(c > num::normal_quantile(0.975));
    const double ct = solve_multiplier(10.0, 0.05, 8.0);
    CHECK(std::abs(multiplier_lhs(ct, 10.0, 8.0) - 0.025) < 1e-8);
    CHECK(ct > c);
    for (double x = 0.0; x < 6.0; x += 0.25) {
        CHECK(multiplier_lhs(x + 0.25, 10.0) < multiplier_lhs(x, 10.0));
    }
    CHECK(solve_multiplier(0.0, 0.999, 3.0) == doctest::Approx(num::t_quantile(1.0 - 0.4995, 3.0)).epsilon(1e-9));
}

TEST_CASE("tube length of a constant basis is zero")
{
    const Matrix A(10, 1, 1.0);
    CHECK(tube_length(A) == doctest::Approx(0.0));
    const Multiplier m = uniform_multiplier(A, 0.1);
    CHECK(m.c == doctest::Approx(num::normal_quantile(0.95)).epsilon(1e-10));
}

TEST_CASE("uniform bands are wider than pointwise bands")
{
    dist::RngStream rng(15, 0);
    const std::size_t n = 60;
    const Vector y = slope_walk(n, 0.1, 0.1, rng);
    const Matrix A = falling_factorial_basis(std::vector<std::size_t>{10, 30, 45}, 1, n);
    const Band pw = pointwise_band(y, A, Matrix{{0.01}}, 1.0, 0.2);
    const Band un = uniform_band(y, A, 0.1, 1.0, 0.2);
    CHECK(un.kind == BandKind::Uniform);
    CHECK(un.gamma > 0.0);
    CHECK(un.multiplier >= pw.multiplier);
    CHECK(std::abs(multiplier_lhs(un.multiplier, un.gamma) - 0.1) < 1e-8);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(un.halfwidths[i] >= pw.halfwidths[i]);
        CHECK(un.halfwidths[i] > 0.0);
        CHECK(un.centers[i] == doctest::Approx(pw.centers[i]));
    }
}

TEST_CASE("t multiplier with one degree of freedom is large but finite")
{
    const std::size_t n = 12;
    std::vector<std::size_t> knots;
    for (std::size_t kn = 0; kn < n - 2; ++kn) {
        knots.push_back(kn);
    }
    const Matrix A = falling_factorial_basis(knots, 0, n);
    const double v = static_cast<double>(n - knots.size() - 1);
    CHECK(v == 1.0);
    const Multiplier m = uniform_multiplier(A, 0.05, v);
    CHECK(std::isfinite(m.c));
    CHECK(m.c > 50.0);
}

TEST_CASE("difference-based variance estimate")
{
    CHECK(estimate_sigma_differences(Vector(7, 3.0)) == 0.0);
    CHECK(estimate_sigma_differences(Vector{0.0, 2.0}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(estimate_sigma_differences(Vector{1.0}), Error);
    dist::RngStream rng(16, 0);
    Vector y(10000);
    for (double& v : y) {
        v = rng.normal();
    }
    const double s2 = estimate_sigma_differences(y);
    CHECK(s2 > 0.95);
    CHECK(s2 < 1.05);
    Vector trend(10000);
    for (std::size_t t = 0; t < trend.size(); ++t) {
        trend[t] = y[t] + 0.3 * static_cast<double>(t);
    }
    CHECK(estimate_sigma_differences(trend) > s2);
}

TEST_CASE("SURE scores")
{
    dist::RngStream rng(17, 0);
    const std::size_t n = 80;
    Vector f;
    const Vector y = slope_walk(n, 0.05, 0.05, rng, &f);
    const double s2 = 0.05 * 0.05;
    const double sat = sure_score(y, y, s2, n - 2);
    CHECK(sat == doctest::Approx(2.0 * s2 * static_cast<double>(n - 2) / static_cast<double>(n)));

    KnotOptions opt;
    opt.rule = KnotRule::Sure;
    opt.sigma2 = s2;
    const KnotSelection sel = knot_select(y, 1, opt);
    REQUIRE(sel.scores.size() == sel.lambdas.size());
    CHECK(sel.score_se.empty());
    CHECK(sel.scores[sel.chosen] == doctest::Approx(*std::min_element(sel.scores.begin(), sel.scores.end())));
    CHECK(sel.scores[sel.chosen] < sat);

    const auto true_knots = knots_of(f, 1);
    const Matrix A = falling_factorial_basis(true_knots, 1, n);
    const Vector fit = projected_mean(A, y);
    CHECK(sure_score(y, fit, s2, true_knots.size()) < sat);

    opt.sure_df = SureDf::KnotsPlusOne;
    const KnotSelection plus = knot_select(y, 1, opt);
    CHECK(plus.sure_df == SureDf::KnotsPlusOne);
    const std::size_t m = plus.fit.knots.size() + 1;
    CHECK(plus.scores[plus.chosen] == doctest::Approx(sure_score(y, plus.fit.fitted, s2, m)));
}

TEST_CASE("noiseless kink is found on the grid")
{
    const std::size_t n = 60;
    Vector y(n);
    for (std::size_t t = 0; t < n; ++t) {
        y[t] = 0.2 * static_cast<double>(t) + 0.8 * std::max(static_cast<double>(t) - 25.0, 0.0);
    }
    const Vector grid = trend_lambda_grid(y, 1, 30, 1e-4);
    bool found = false;
    for (double lam : grid) {
        const TrendFit tf = trendfilter_admm(y, 1, lam);
        if (std::find(tf.knots.begin(), tf.knots.end(), 25u) != tf.knots.end()) {
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("cross-validation selects a sensible fit")
{
    dist::RngStream rng(18, 0);
    Vector f;
    const Vector y = slope_walk(200, 0.05, 0.1, rng, &f);
    const KnotSelection cv = knot_select(y, 1);
    REQUIRE(cv.scores.size() == cv.lambdas.size());
    REQUIRE(cv.score_se.size() == cv.lambdas.size());
    CHECK(cv.scores[cv.chosen] == *std::min_element(cv.scores.begin(), cv.scores.end()));
    double err_fit = 0.0;
    double err_raw = 0.0;
    for (std::size_t t = 0; t < f.size(); ++t) {
        err_fit += (cv.fit.fitted[t] - f[t]) * (cv.fit.fitted[t] - f[t]);
        err_raw += (y[t] - f[t]) * (y[t] - f[t]);
    }
    CHECK(err_fit < err_raw);

    KnotOptions one;
    one.rule = KnotRule::Cv1se;
    const KnotSelection se = knot_select(y, 1, one);
    CHECK(se.chosen <= cv.chosen);
    CHECK(se.scores[se.chosen] <= cv.scores[cv.chosen] + cv.score_se[cv.chosen]);
    CHECK(se.fit.knots.size() <= cv.fit.knots.size());
}

TEST_CASE("series reader")
{
    std::istringstream in("t,y\n0,1.5\n1;2.5\n# comment\n2\t-3e-1\n\n3 4\n");
    const Series s = read_series(in);
    REQUIRE(s.t.size() == 4);
    CHECK(s.t[2] == 2.0);
    CHECK(s.y[2] == doctest::Approx(-0.3));
    CHECK(s.y[3] == 4.0);

    std::istringstream bad("0,1\n1,x\n");
    CHECK_THROWS_AS(read_series(bad), Error);
    std::istringstream three("0,1,2\n");
    CHECK_THROWS_AS(read_series(three), Error);
}

TEST_CASE("band CSV output")
{
    Band b;
    b.centers = {1.0, 2.0};
    b.halfwidths = {0.5, 0.25};
    b.kind = BandKind::Uniform;
    std::ostringstream out;
    write_band_csv(out, Vector{0.0, 1.0}, b);
    CHECK(out.str() == "t,fit,lower,upper,kind\n0,1,0.5,1.5,uniform\n1,2,1.75,2.25,uniform\n");
    CHECK_THROWS_AS(write_band_csv(out, Vector{0.0}, b), Error);
}
