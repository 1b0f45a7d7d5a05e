#include <cmath>

#include <doctest.h>

#include "fiss/error.hpp"
#include "fiss/infosplit.hpp"

using namespace fiss;
using namespace fiss::info;

TEST_CASE("fraction and tau")
{
    CHECK(tau_for_fraction(0.5) == doctest::Approx(1.0));
    CHECK(tau_for_fraction(0.2) == doctest::Approx(2.0));
    CHECK(fraction_for_tau(1e12) < 1e-20);
    CHECK(fraction_for_tau(INFINITY) == 0.0);
    for (double a = 0.01; a < 1.0; a += 0.07) {
        CHECK(std::abs(fraction_for_tau(tau_for_fraction(a)) - a) < 1e-14);
    }
    CHECK(poisson_fraction(0.3) == 0.3);
    CHECK(poisson_fraction(0.999999) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK_THROWS_AS(tau_for_fraction(1.0), Error);
    CHECK_THROWS_AS(fraction_for_tau(0.0), Error);
    CHECK_THROWS_AS(poisson_fraction(0.0), Error);
    CHECK(gaussian_budget(0.2).tuning == doctest::Approx(2.0));
    CHECK(poisson_budget(0.4).tuning == 0.4);
}

TEST_CASE("closed-form information pieces")
{
    dist::RngStream rng(4, 0);
    const AdditivityReport g = info_additivity_check(rules::GaussP1{1.0}, 0.0, 1000, rng);
    CHECK(g.info_x == doctest::Approx(1.0));
    CHECK(g.info_f == doctest::Approx(0.5));
    CHECK(g.info_g_given_f == doctest::Approx(0.5));
    const AdditivityReport p = info_additivity_check(rules::PoissonP1{0.3}, 2.0, 1000, rng);
    CHECK(p.info_f == doctest::Approx(0.15));
    CHECK(p.info_x == doctest::Approx(0.5));
    const AdditivityReport small = info_additivity_check(rules::GaussP1{1e-4}, 0.0, 100, rng);
    CHECK(small.info_f == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(small.info_g_given_f < 1e-7);
    CHECK_THROWS_AS(info_additivity_check(rules::BernoulliP2{0.2}, 0.4, 100, rng), Error);
}

TEST_CASE("additivity holds within the Monte Carlo band")
{
    dist::RngStream rng(5, 0);
    for (double tau : {0.5, 1.0, 3.0}) {
        const AdditivityReport r = info_additivity_check(rules::GaussP1{tau, num::Matrix{{2.0}}}, 1.0, 100000, rng);
        CHECK(r.residual < r.band);
        CHECK(std::abs(r.mc_info_f - r.info_f) < 0.05 * r.info_x);
    }
    for (double p : {0.2, 0.7}) {
        const AdditivityReport r = info_additivity_check(rules::PoissonP1{p}, 3.0, 100000, rng);
        CHECK(r.residual < r.band);
        CHECK(std::abs(r.mc_info_g_given_f - r.info_g_given_f) < 0.05 * r.info_x);
    }
}
