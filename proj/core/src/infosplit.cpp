#include "fiss/infosplit.hpp"

#include <cmath>

#include "fiss/error.hpp"

namespace fiss::info {

double tau_for_fraction(double a)
{
    require(a > 0.0 && a < 1.0, Errc::DomainError, "fraction must lie in (0, 1)");
    return std::sqrt((1.0 - a) / a);
}

double fraction_for_tau(double tau)
{
    require(tau > 0.0, Errc::DomainError, "tau must be positive");
    if (std::isinf(tau)) {
        return 0.0;
    }
    return 1.0 / (1.0 + tau * tau);
}

double poisson_fraction(double p)
{
    require(p > 0.0 && p < 1.0, Errc::DomainError, "p must lie in (0, 1)");
    return p;
}

InfoBudget gaussian_budget(double a)
{
    return {a, tau_for_fraction(a)};
}

InfoBudget poisson_budget(double a)
{
    return {poisson_fraction(a), a};
}

namespace {

using num::Vector;

/// Central-difference derivative of a log density in the scalar parameter.
template <class LogDensity>
double score(LogDensity&& ld, double theta)
{
    const double h = 1e-5 * std::max(1.0, std::abs(theta));
    return (ld(theta + h) - ld(theta - h)) / (2.0 * h);
}

}  // namespace

AdditivityReport info_additivity_check(const rules::FissionRule& rule, double theta,
                                       std::size_t n_mc, dist::RngStream& rng)
{
    require(n_mc >= 2, Errc::DomainError, "need at least two Monte Carlo draws");
    rules::validate(rule);
    AdditivityReport rep;
    dist::Dist x_law;
    if (const auto* g = std::get_if<rules::GaussP1>(&rule)) {
        require(g->sigma.rows() == 1, Errc::UnsupportedRule, "scalar sigma only");
        const double s2 = g->sigma(0, 0);
        const double t2 = g->tau * g->tau;
        rep.info_x = 1.0 / s2;
        rep.info_f = 1.0 / (s2 * (1.0 + t2));
        rep.info_g_given_f = 1.0 / (s2 * (1.0 + 1.0 / t2));
        x_law = dist::Normal{theta, std::sqrt(s2)};
    } else if (const auto* p = std::get_if<rules::PoissonP1>(&rule)) {
        require(theta > 0.0, Errc::DomainError, "poisson mean must be positive");
        rep.info_x = 1.0 / theta;
        rep.info_f = p->p / theta;
        rep.info_g_given_f = (1.0 - p->p) / theta;
        x_law = dist::Poisson{theta};
    } else {
        fail(Errc::UnsupportedRule, "closed-form information only for GaussP1 and PoissonP1");
    }

    const bool gaussian = std::holds_alternative<rules::GaussP1>(rule);
    double sx = 0.0, sf = 0.0, sg = 0.0, sd = 0.0, sdd = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const double x = dist::sample_scalar(x_law, rng);
        const rules::FissionOutput out = rules::fission(x, rule, rng);
        const rules::ConditionalFamily cond = rules::conditional_of_g(rule, out.f);
        auto x_ld = [&](double t) {
            const dist::Dist law = gaussian ? dist::Dist(dist::Normal{t, std::get<dist::Normal>(x_law).sigma})
                                            : dist::Dist(dist::Poisson{t});
            return dist::log_density(law, x);
        };
        auto f_ld = [&](double t) {
            return rules::marginal_log_density(rule, Vector{t}, out.f);
        };
        auto g_ld = [&](double t) { return cond.log_density(Vector{t}, out.g); };
        const double a = std::pow(score(x_ld, theta), 2);
        const double b = std::pow(score(f_ld, theta), 2);
        const double c = std::pow(score(g_ld, theta), 2);
        sx += a;
        sf += b;
        sg += c;
        const double d = a - b - c;
        sd += d;
        sdd += d * d;
    }
    const auto n = static_cast<double>(n_mc);
    rep.mc_info_x = sx / n;
    rep.mc_info_f = sf / n;
    rep.mc_info_g_given_f = sg / n;
    const double mean_d = sd / n;
    const double var_d = std::max(sdd / n - mean_d * mean_d, 0.0) * n / (n - 1.0);
    rep.residual = std::abs(mean_d) / rep.info_x;
    rep.band = 4.0 * std::sqrt(var_d / n) / rep.info_x;
    return rep;
}

VarianceComparison compare_split_and_fission(SplitFamily family, double a, double mean,
                                             std::size_t n, std::size_t replications,
                                             dist::RngStream& rng)
{
    require(a > 0.0 && a < 1.0, Errc::DomainError, "fraction must lie in (0, 1)");
    require(n >= 4 && replications >= 2, Errc::DomainError, "sample too small");
    const auto n_split = static_cast<std::size_t>(std::llround(a * static_cast<double>(n)));
    require(n_split >= 2, Errc::DomainError, "split subsample too small");
    const bool gaussian = family == SplitFamily::Gaussian;
    if (!gaussian) {
        require(mean > 0.0, Errc::DomainError, "poisson mean must be positive");
    }
    const rules::FissionRule rule = gaussian ? rules::FissionRule(rules::GaussP1{tau_for_fraction(a)})
                                             : rules::FissionRule(rules::PoissonP1{a});
    const dist::Dist law = gaussian ? dist::Dist(dist::Normal{mean, 1.0}) : dist::Dist(dist::Poisson{mean});
    // Rescaling of the f-part mean that gives an unbiased estimate of the mean.
    const double f_scale = gaussian ? 1.0 : 1.0 / a;

    VarianceComparison out;
    double est_f = 0.0, est_f2 = 0.0, est_s = 0.0, est_s2 = 0.0;
    for (std::size_t r = 0; r < replications; ++r) {
        double sum_s = 0.0, sum_s2 = 0.0, sum_f = 0.0, sum_f2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = dist::sample_scalar(law, rng);
            if (i < n_split) {
                sum_s += x;
                sum_s2 += x * x;
            }
            const double fi = rules::fission(x, rule, rng).f[0] * f_scale;
            sum_f += fi;
            sum_f2 += fi * fi;
        }
        const auto nf = static_cast<double>(n);
        const auto ns = static_cast<double>(n_split);
        const double mf = sum_f / nf;
        const double ms = sum_s / ns;
        out.fission_variance += (sum_f2 - nf * mf * mf) / (nf - 1.0) / nf;
        out.split_variance += (sum_s2 - ns * ms * ms) / (ns - 1.0) / ns;
        est_f += mf;
        est_f2 += mf * mf;
        est_s += ms;
        est_s2 += ms * ms;
    }
    const auto reps = static_cast<double>(replications);
    out.fission_variance /= reps;
    out.split_variance /= reps;
    out.ratio = out.fission_variance / out.split_variance;
    out.fission_spread = (est_f2 - est_f * est_f / reps) / (reps - 1.0);
    out.split_spread = (est_s2 - est_s * est_s / reps) / (reps - 1.0);
    return out;
}

}  // namespace fiss::info
