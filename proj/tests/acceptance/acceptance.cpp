// Acceptance suite: one PASS/FAIL line per criterion.
//
// Usage: fiss_acceptance [--cli <path to fiss>] [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "fiss/distkit.hpp"
#include "fiss/error.hpp"
#include "fiss/fission.hpp"
#include "fiss/infosplit.hpp"
#include "fiss/modelfit.hpp"
#include "fiss/numkit.hpp"
#include "fiss/posi.hpp"
#include "fiss/simharness.hpp"
#include "fiss/trendfilter.hpp"

namespace {

using namespace fiss;
using dist::RngStream;
using num::Matrix;
using num::Vector;
namespace r = fiss::rules;

constexpr double kInf = std::numeric_limits<double>::infinity();

class Checks {
  public:
    void expect(bool ok, const std::string& what)
    {
        ++count_;
        if (!ok) {
            failures_.push_back(what);
        }
    }
    void note(const std::string& line) { notes_.push_back(line); }
    bool ok() const { return failures_.empty(); }
    std::size_t count() const { return count_; }
    const std::vector<std::string>& failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }

  private:
    std::size_t count_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

std::string num_str(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// Reference pmfs written out directly.

double lpois(double k, double mu) { return k * std::log(mu) - mu - std::lgamma(k + 1.0); }

double lbinom(double k, double n, double p)
{
    if (k < 0.0 || k > n) {
        return -kInf;
    }
    double v = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    if (k > 0.0) {
        v += k * std::log(p);
    }
    if (n - k > 0.0) {
        v += (n - k) * std::log1p(-p);
    }
    return v;
}

double lnegbin(double k, double rr, double t)
{
    return std::lgamma(k + rr) - std::lgamma(rr) - std::lgamma(k + 1.0) + rr * std::log(t) +
           k * std::log1p(-t);
}

double lgamma_pdf(double x, double shape, double rate)
{
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// Beta log density at x, with xm = 1 − x passed in exactly.
double lbeta_pdf(double x, double xm, double a, double b)
{
    return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
           (b - 1.0) * std::log(xm);
}

/// Binomial log pmf with success p and failure q = 1 − p passed in exactly.
double lbinom_pq(double k, double n, double p, double q)
{
    double v = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    if (k > 0.0) {
        v += k * std::log(p);
    }
    if (n - k > 0.0) {
        v += (n - k) * std::log(q);
    }
    return v;
}

/// Pmf on 0, 1, ... until the accumulated mass passes 1 − tail.
std::vector<double> pmf_table(const std::function<double(int)>& logpmf, double tail = 1e-12)
{
    std::vector<double> out;
    double mass = 0.0;
    for (int k = 0; mass < 1.0 - tail; ++k) {
        out.push_back(std::exp(logpmf(k)));
        mass += out.back();
        if (k > 100000) {
            break;
        }
    }
    return out;
}

double half_line(const std::function<double(double)>& f)
{
    boost::math::quadrature::exp_sinh<double> q;
    return q.integrate(f, 0.0, kInf, 1e-15);
}

double unit_interval(const std::function<double(double)>& f, double hi = 1.0)
{
    boost::math::quadrature::tanh_sinh<double> q;
    return q.integrate(f, 0.0, hi, 1e-15);
}

/// ∫₀¹ f(x, 1 − x) dx, with 1 − x exact near the right endpoint.
double unit_interval_pair(const std::function<double(double, double)>& f)
{
    boost::math::quadrature::tanh_sinh<double> q;
    return q.integrate([&](double x, double xc) { return f(x, xc > 0.0 ? xc : 1.0 - x); }, 0.0, 1.0, 1e-15);
}

/// Total variation between a reference pmf on 0..K and a library law.
double tv_distance(const std::vector<double>& ref, const dist::Dist& lib)
{
    double diff = 0.0;
    double lib_mass = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        const double q = dist::density(lib, static_cast<double>(k));
        diff += std::abs(ref[k] - q);
        lib_mass += q;
    }
    return 0.5 * (diff + std::max(0.0, 1.0 - lib_mass));
}

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf)
{
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic Kolmogorov critical value at level α.
double ks_critical(double alpha, std::size_t n)
{
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

double max_abs(const Vector& v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

//---------------------------------------------------------------------------//
// Criterion 1
//---------------------------------------------------------------------------//

struct RuleCase {
    r::FissionRule rule;
    std::function<Vector(RngStream&)> draw_x;
    bool discrete;
};

Matrix spd3()
{
    return Matrix{{2.0, 0.6, -0.3}, {0.6, 1.5, 0.4}, {-0.3, 0.4, 1.2}};
}

std::vector<RuleCase> reconstruction_cases()
{
    const auto gauss3 = [](RngStream& rng) {
        return Vector{1.0 + 2.0 * rng.normal(), -2.0 + rng.normal(), 3.0 + 1.5 * rng.normal()};
    };
    const auto scalar = [](dist::Dist d) {
        return [d](RngStream& rng) { return Vector{dist::sample_scalar(d, rng)}; };
    };
    const auto vec = [](dist::Dist d) { return [d](RngStream& rng) { return dist::sample(d, rng); }; };
    Matrix s0{{0.8, 0.1, 0.0}, {0.1, 0.5, 0.2}, {0.0, 0.2, 0.9}};
    return {
        {r::GaussP1{0.5, Matrix{{2.0}}}, gauss3, false},
        {r::GaussP1{2.0, spd3()}, gauss3, false},
        {r::GaussP2CP{0.7, Matrix{{1.5}}}, gauss3, false},
        {r::GaussP2General{spd3(), s0}, gauss3, false},
        {r::PoissonP1{0.3}, scalar(dist::Poisson{7.0}), true},
        {r::PoissonP2{0.6}, scalar(dist::Poisson{7.0}), true},
        {r::BernoulliP2{0.2}, scalar(dist::Bernoulli{0.4}), true},
        {r::BinomialP2{0.35, 12}, scalar(dist::Binomial{12, 0.6}), true},
        {r::NegBinomialP2{0.4, 2.5}, scalar(dist::NegBinomial{2.5, 0.3}), true},
        {r::GammaCP{3, 1.5}, scalar(dist::Gamma{2.0, 1.2}), false},
        {r::ExponentialCP{2, 0.8}, scalar(dist::Exponential{1.5}), false},
        {r::BetaCP{5, r::BetaSide::ThetaOne}, scalar(dist::Beta{2.0, 1.0}), false},
        {r::BetaCP{4, r::BetaSide::OneTheta}, scalar(dist::Beta{1.0, 2.0}), false},
        {r::DirichletCP{6}, vec(dist::Dirichlet{{1.5, 2.0, 0.8}}), false},
        {r::CategoricalP2{0.3, 4, {0.1, 0.2, 0.3, 0.4}}, scalar(dist::Categorical{{0.4, 0.3, 0.2, 0.1}}),
         true},
        {r::ConjugateReversal{std::make_shared<r::ExpFamSpec>(r::gamma_spec(1.5)), 2},
         scalar(dist::Gamma{2.0, 1.0}), false},
        {r::ConjugateReversal{std::make_shared<r::ExpFamSpec>(r::beta_spec(r::BetaSide::OneTheta)), 3},
         scalar(dist::Beta{2.0, 3.0}), false},
    };
}

void check_reconstruction(Checks& c)
{
    std::uint64_t stream = 0;
    std::set<std::size_t> covered;
    for (const RuleCase& rc : reconstruction_cases()) {
        covered.insert(rc.rule.index());
        RngStream rng(101, stream++);
        double worst = 0.0;
        bool exact = true;
        for (int i = 0; i < 10000; ++i) {
            const Vector x = rc.draw_x(rng);
            const r::FissionOutput out = r::fission(x, rc.rule, rng);
            const Vector back = r::reconstruct(out.f, out.g, rc.rule);
            if (rc.discrete) {
                exact = exact && back == x;
            } else {
                double err = 0.0;
                for (std::size_t j = 0; j < x.size(); ++j) {
                    err = std::max(err, std::abs(back[j] - x[j]));
                }
                worst = std::max(worst, err / max_abs(x));
            }
        }
        const std::string name = r::rule_name(rc.rule);
        if (rc.discrete) {
            c.expect(exact, "(a) " + name + ": reconstruction not exact");
        } else {
            c.expect(worst <= 1e-12, "(a) " + name + ": relative error " + num_str(worst));
        }
    }
    c.expect(covered.size() == std::variant_size_v<r::FissionRule>, "(a) not every rule covered");
}

void check_gaussian_marginals(Checks& c)
{
    const std::size_t n = 100000;
    const double crit = ks_critical(0.001, n);
    const double mu = 0.7;
    const double sd = 1.3;
    struct Case {
        r::FissionRule rule;
        double f_sd;
    };
    const std::vector<Case> cases{
        {r::GaussP1{0.5, Matrix{{sd * sd}}}, sd * std::sqrt(1.25)},
        {r::GaussP1{3.0, Matrix{{sd * sd}}}, sd * std::sqrt(10.0)},
        {r::GaussP2CP{0.4, Matrix{{sd * sd}}}, sd * std::sqrt(1.4)},
        {r::GaussP2General{Matrix{{sd * sd}}, Matrix{{0.6}}}, std::sqrt(sd * sd + 0.6)},
    };
    std::uint64_t stream = 0;
    for (const Case& cs : cases) {
        RngStream rng(202, stream++);
        std::vector<double> fs(n);
        for (std::size_t i = 0; i < n; ++i) {
            fs[i] = r::fission(mu + sd * rng.normal(), cs.rule, rng).f[0];
        }
        const dist::Dist law = r::marginal_of_f(cs.rule, {mu});
        const double ks = ks_statistic(fs, [&](double v) { return dist::cdf(law, v); });
        c.expect(ks < crit, "(b) " + r::rule_name(cs.rule) + ": KS " + num_str(ks) + " >= " + num_str(crit));
        c.expect(std::abs(std::sqrt(dist::variance(law)) - cs.f_sd) < 1e-12,
                 "(b) " + r::rule_name(cs.rule) + ": marginal sd");
    }
}

/// Reference marginal of f for a thinning-type rule: Σₓ π(x)·P(f | x).
std::vector<double> mix_discrete(const std::vector<double>& prior, std::size_t f_max,
                                 const std::function<double(int f, int x)>& cond)
{
    std::vector<double> out(f_max + 1, 0.0);
    for (std::size_t f = 0; f <= f_max; ++f) {
        for (std::size_t x = 0; x < prior.size(); ++x) {
            out[f] += prior[x] * cond(static_cast<int>(f), static_cast<int>(x));
        }
    }
    return out;
}

void expect_tv(Checks& c, const std::string& label, const std::vector<double>& ref, const dist::Dist& lib)
{
    const double tv = tv_distance(ref, lib);
    c.expect(tv < 1e-10, "(b) " + label + ": TV " + num_str(tv));
}

/// Posterior pmf of g given f against the library, on pairs with x ≤ 20.
void expect_posterior(Checks& c, const std::string& label, const r::FissionRule& rule, const Vector& theta,
                      double f, const std::vector<double>& weights, const std::vector<int>& gs)
{
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    const dist::Dist law = r::conditional_of_g(rule, {f}).at(theta);
    double worst = 0.0;
    for (int g : gs) {
        const double ref = weights[static_cast<std::size_t>(g)] / total;
        worst = std::max(worst, std::abs(ref - dist::density(law, static_cast<double>(g))));
    }
    c.expect(worst <= 1e-12, "(c) " + label + " f=" + num_str(f) + ": error " + num_str(worst));
}

std::vector<int> range_to(int hi)
{
    std::vector<int> v;
    for (int i = 0; i <= hi; ++i) {
        v.push_back(i);
    }
    return v;
}

void check_discrete_rules(Checks& c)
{
    for (double mu : {0.4, 3.0, 15.0}) {
        const auto prior = pmf_table([&](int k) { return lpois(k, mu); });
        for (double p : {0.1, 0.5, 0.9}) {
            const r::FissionRule rule = r::PoissonP1{p};
            const std::string label = "PoissonP1 mu=" + num_str(mu) + " p=" + num_str(p);
            expect_tv(c, label, mix_discrete(prior, prior.size(), [&](int f, int x) {
                          return std::exp(lbinom(f, x, p));
                      }), r::marginal_of_f(rule, {mu}));
            for (int f = 0; f <= 20; ++f) {
                std::vector<double> w;
                for (int g = 0; g < 400; ++g) {
                    w.push_back(std::exp(lpois(f + g, mu) + lbinom(f, f + g, p)));
                }
                expect_posterior(c, label, rule, {mu}, f, w, range_to(20 - f));
            }
        }
        for (double p : {0.2, 1.5}) {
            const r::FissionRule rule = r::PoissonP2{p};
            const std::string label = "PoissonP2 mu=" + num_str(mu) + " p=" + num_str(p);
            const auto noise = pmf_table([&](int k) { return lpois(k, p); }, 1e-14);
            std::vector<double> ref(prior.size() + noise.size(), 0.0);
            for (std::size_t x = 0; x < prior.size(); ++x) {
                for (std::size_t e = 0; e < noise.size(); ++e) {
                    ref[x + e] += prior[x] * noise[e];
                }
            }
            expect_tv(c, label, ref, r::marginal_of_f(rule, {mu}));
            for (int f = 0; f <= 20; ++f) {
                std::vector<double> w;
                for (int x = 0; x <= f; ++x) {
                    w.push_back(std::exp(lpois(x, mu) + lpois(f - x, p)));
                }
                expect_posterior(c, label, rule, {mu}, f, w, range_to(f));
            }
        }
    }
    for (double t : {0.1, 0.5, 0.8}) {
        for (double p : {0.1, 0.3, 0.45}) {
            const r::FissionRule rule = r::BernoulliP2{p};
            const std::string label = "BernoulliP2 t=" + num_str(t) + " p=" + num_str(p);
            const std::vector<double> prior{1.0 - t, t};
            expect_tv(c, label, mix_discrete(prior, 1, [&](int f, int x) { return f == x ? 1.0 - p : p; }),
                      r::marginal_of_f(rule, {t}));
            for (int f = 0; f <= 1; ++f) {
                std::vector<double> w;
                for (int x = 0; x <= 1; ++x) {
                    w.push_back(prior[static_cast<std::size_t>(x)] * (f == x ? 1.0 - p : p));
                }
                expect_posterior(c, label, rule, {t}, f, w, {0, 1});
            }
        }
    }
    for (std::int64_t n : {1, 7, 20}) {
        for (double th : {0.2, 0.7}) {
            const auto prior = pmf_table([&](int k) { return lbinom(k, static_cast<double>(n), th); }, 0.0);
            for (double p : {0.3, 0.8}) {
                const r::FissionRule rule = r::BinomialP2{p, n};
                const std::string label = "BinomialP2 n=" + std::to_string(n) + " theta=" + num_str(th) +
                                          " p=" + num_str(p);
                std::vector<double> px(static_cast<std::size_t>(n) + 1);
                for (std::int64_t x = 0; x <= n; ++x) {
                    px[static_cast<std::size_t>(x)] = std::exp(lbinom(x, n, th));
                }
                expect_tv(c, label, mix_discrete(px, static_cast<std::size_t>(n), [&](int f, int x) {
                              return std::exp(lbinom(f, x, p));
                          }), r::marginal_of_f(rule, {th}));
                for (int f = 0; f <= n; ++f) {
                    std::vector<double> w;
                    for (int g = 0; f + g <= n; ++g) {
                        w.push_back(std::exp(lbinom(f + g, n, th) + lbinom(f, f + g, p)));
                    }
                    expect_posterior(c, label, rule, {th}, f, w, range_to(static_cast<int>(n) - f));
                }
            }
        }
    }
    for (double rr : {0.7, 3.0}) {
        for (double t : {0.3, 0.8}) {
            const auto prior = pmf_table([&](int k) { return lnegbin(k, rr, t); });
            for (double p : {0.25, 0.6}) {
                const r::FissionRule rule = r::NegBinomialP2{p, rr};
                const std::string label = "NegBinomialP2 r=" + num_str(rr) + " t=" + num_str(t) +
                                          " p=" + num_str(p);
                expect_tv(c, label, mix_discrete(prior, prior.size(), [&](int f, int x) {
                              return std::exp(lbinom(f, x, p));
                          }), r::marginal_of_f(rule, {t}));
                for (int f = 0; f <= 20; ++f) {
                    std::vector<double> w;
                    for (int g = 0; g < 600; ++g) {
                        w.push_back(std::exp(lnegbin(f + g, rr, t) + lbinom(f, f + g, p)));
                    }
                    expect_posterior(c, label, rule, {t}, f, w, range_to(20 - f));
                }
            }
        }
    }
    {
        const Vector theta{0.4, 0.3, 0.2, 0.1};
        const Vector w{0.1, 0.2, 0.3, 0.4};
        for (double p : {0.15, 0.7}) {
            const r::FissionRule rule = r::CategoricalP2{p, 4, w};
            const std::string label = "CategoricalP2 p=" + num_str(p);
            const auto lik = [&](int f, int x) {
                return (f == x ? 1.0 - p : 0.0) + p * w[static_cast<std::size_t>(f)];
            };
            expect_tv(c, label, mix_discrete(theta, 3, lik), r::marginal_of_f(rule, theta));
            for (int f = 0; f < 4; ++f) {
                std::vector<double> post;
                for (int x = 0; x < 4; ++x) {
                    post.push_back(theta[static_cast<std::size_t>(x)] * lik(f, x));
                }
                expect_posterior(c, label, rule, theta, f, post, range_to(3));
            }
        }
    }
}

/// Posterior density of a continuous x given f, by quadrature normalization.
void expect_density(Checks& c, const std::string& label, const dist::Dist& lib,
                    const std::function<double(double)>& joint, double evidence,
                    const std::vector<double>& xs)
{
    double worst = 0.0;
    for (double x : xs) {
        const double ref = joint(x) / evidence;
        const double got = dist::density(lib, x);
        worst = std::max(worst, std::abs(ref - got) / std::max(ref, 1e-300));
    }
    c.expect(worst <= 1e-12, "(c) " + label + ": relative density error " + num_str(worst));
}

void check_gamma_family(Checks& c)
{
    // GammaCP and ExponentialCP: x ~ Gamma(α, β), f ~ Poi(τx) per draw.
    struct Case {
        double alpha;
        double beta;
        double tau;
        bool exponential;
    };
    for (const Case& cs : std::vector<Case>{{0.8, 1.3, 0.5, false},
                                            {3.0, 0.5, 2.0, false},
                                            {1.0, 0.4, 0.5, true},
                                            {1.0, 2.0, 1.7, true}}) {
        const r::FissionRule rule1 = cs.exponential ? r::FissionRule{r::ExponentialCP{1, cs.tau}}
                                                    : r::FissionRule{r::GammaCP{1, cs.tau}};
        const r::FissionRule rule3 = cs.exponential ? r::FissionRule{r::ExponentialCP{3, cs.tau}}
                                                    : r::FissionRule{r::GammaCP{3, cs.tau}};
        const r::FissionRule rule2 = cs.exponential ? r::FissionRule{r::ExponentialCP{2, cs.tau}}
                                                    : r::FissionRule{r::GammaCP{2, cs.tau}};
        const Vector theta = cs.exponential ? Vector{cs.beta} : Vector{cs.alpha, cs.beta};
        const std::string label = r::rule_name(rule1) + " alpha=" + num_str(cs.alpha) +
                                  " beta=" + num_str(cs.beta) + " tau=" + num_str(cs.tau);
        const auto prior = [&](double x) { return lgamma_pdf(x, cs.alpha, cs.beta); };
        std::vector<double> ref;
        double mass = 0.0;
        for (int f = 0; mass < 1.0 - 1e-12; ++f) {
            ref.push_back(half_line([&](double x) { return std::exp(prior(x) + lpois(f, cs.tau * x)); }));
            mass += ref.back();
        }
        expect_tv(c, label + " B=1", ref, r::marginal_of_f(rule1, theta));
        expect_tv(c, label + " B=3 per element", ref, r::marginal_of_f(rule3, theta));

        // Joint law of two draws.
        double diff = 0.0;
        double lib_mass = 0.0;
        const std::size_t top = ref.size();
        for (std::size_t a = 0; a < top; ++a) {
            for (std::size_t b = 0; b < top; ++b) {
                const double want = half_line([&](double x) {
                    return std::exp(prior(x) + lpois(static_cast<double>(a), cs.tau * x) +
                                    lpois(static_cast<double>(b), cs.tau * x));
                });
                const double got = std::exp(
                    r::marginal_log_density(rule2, theta, {static_cast<double>(a), static_cast<double>(b)}));
                diff += std::abs(want - got);
                lib_mass += got;
            }
        }
        const double tv = 0.5 * (diff + std::max(0.0, 1.0 - lib_mass));
        c.expect(tv < 1e-10, "(b) " + label + " B=2 joint: TV " + num_str(tv));

        for (const Vector& f : {Vector{0.0, 0.0}, Vector{2.0, 5.0}, Vector{7.0, 1.0}}) {
            const auto joint = [&](double x) {
                return std::exp(prior(x) + lpois(f[0], cs.tau * x) + lpois(f[1], cs.tau * x));
            };
            const double evidence = half_line(joint);
            expect_density(c, label + " f=(" + num_str(f[0]) + "," + num_str(f[1]) + ")",
                           r::conditional_of_g(rule2, f).at(theta), joint, evidence, {0.05, 0.5, 1.3, 4.0});
        }
    }
}

void check_beta_family(Checks& c)
{
    for (std::int64_t B : {1, 5, 12}) {
        for (double th : {0.6, 1.0, 3.0}) {
            for (r::BetaSide side : {r::BetaSide::ThetaOne, r::BetaSide::OneTheta}) {
                const r::FissionRule rule = r::BetaCP{B, side};
                const bool one = side == r::BetaSide::ThetaOne;
                const std::string label = std::string("BetaCP ") + (one ? "theta_one" : "one_theta") +
                                          " B=" + std::to_string(B) + " theta=" + num_str(th);
                // log π(x) + log P(f | x), with xm = 1 − x.
                const auto log_joint = [&](double x, double xm, std::int64_t f) {
                    const double prior = one ? lbeta_pdf(x, xm, th, 1.0) : lbeta_pdf(x, xm, 1.0, th);
                    const double ps = one ? x : xm;
                    const double qs = one ? xm : x;
                    return prior + lbinom_pq(static_cast<double>(f), static_cast<double>(B), ps, qs);
                };
                std::vector<double> ref;
                for (std::int64_t f = 0; f <= B; ++f) {
                    ref.push_back(unit_interval_pair([&](double x, double xm) { return std::exp(log_joint(x, xm, f)); }));
                }
                expect_tv(c, label, ref, r::marginal_of_f(rule, {th}));
                for (std::int64_t f = 0; f <= B; ++f) {
                    const auto joint = [&](double x) { return std::exp(log_joint(x, 1.0 - x, f)); };
                    expect_density(c, label + " f=" + std::to_string(f),
                                   r::conditional_of_g(rule, {static_cast<double>(f)}).at({th}), joint,
                                   ref[static_cast<std::size_t>(f)], {0.1, 0.35, 0.6, 0.9});
                }
            }
        }
    }
}

void check_dirichlet(Checks& c)
{
    const Vector alpha{1.5, 2.0, 0.8};
    const double log_norm =
        std::lgamma(alpha[0] + alpha[1] + alpha[2]) - std::lgamma(alpha[0]) - std::lgamma(alpha[1]) -
        std::lgamma(alpha[2]);
    for (std::int64_t B : {1, 4}) {
        const r::FissionRule rule = r::DirichletCP{B};
        const std::string label = "DirichletCP B=" + std::to_string(B);
        double diff = 0.0;
        double lib_mass = 0.0;
        for (std::int64_t a = 0; a <= B; ++a) {
            for (std::int64_t b = 0; a + b <= B; ++b) {
                const Vector f{static_cast<double>(a), static_cast<double>(b), static_cast<double>(B - a - b)};
                const double log_mult = std::lgamma(static_cast<double>(B) + 1.0) - std::lgamma(f[0] + 1.0) -
                                        std::lgamma(f[1] + 1.0) - std::lgamma(f[2] + 1.0);
                const auto joint = [&](double x1, double x2) {
                    const double x3 = std::max(0.0, 1.0 - x1 - x2);
                    return std::exp(log_norm + log_mult + (alpha[0] - 1.0 + f[0]) * std::log(x1) +
                                    (alpha[1] - 1.0 + f[1]) * std::log(x2) +
                                    (alpha[2] - 1.0 + f[2]) * std::log(x3));
                };
                const double want = unit_interval([&](double x1) {
                    return unit_interval([&](double x2) { return joint(x1, x2); }, 1.0 - x1);
                });
                const double got = std::exp(r::marginal_log_density(rule, alpha, f));
                diff += std::abs(want - got);
                lib_mass += got;
                const dist::Dist post = r::conditional_of_g(rule, f).at(alpha);
                double worst = 0.0;
                for (const Vector& x : {Vector{0.2, 0.3, 0.5}, Vector{0.6, 0.1, 0.3}, Vector{0.05, 0.9, 0.05}}) {
                    const double ref = joint(x[0], x[1]) / want;
                    worst = std::max(worst, std::abs(ref - std::exp(dist::log_density(post, x))) / ref);
                }
                c.expect(worst <= 1e-12, "(c) " + label + ": relative density error " + num_str(worst));
            }
        }
        const double tv = 0.5 * (diff + std::max(0.0, 1.0 - lib_mass));
        c.expect(tv < 1e-10, "(b) " + label + ": TV " + num_str(tv));
    }
}

void check_conjugate_reversal(Checks& c)
{
    {
        // Gamma(α, β) with z ~ Poi(τx): θ = (α − 1, β).
        const double alpha = 2.5;
        const double beta = 1.2;
        const double tau = 1.5;
        const r::FissionRule rule = r::ConjugateReversal{std::make_shared<r::ExpFamSpec>(r::gamma_spec(tau)), 2};
        const Vector theta{alpha - 1.0, beta};
        const auto prior = [&](double x) { return lgamma_pdf(x, alpha, beta); };
        double diff = 0.0;
        double lib_mass = 0.0;
        double mass = 0.0;
        for (int a = 0; mass < 1.0 - 1e-12; ++a) {
            mass += half_line([&](double x) { return std::exp(prior(x) + lpois(a, tau * x)); });
            for (int b = 0; b < 200; ++b) {
                const auto joint = [&](double x) {
                    return std::exp(prior(x) + lpois(a, tau * x) + lpois(b, tau * x));
                };
                const double want = half_line(joint);
                const double got = std::exp(r::marginal_log_density(rule, theta, {double(a), double(b)}));
                diff += std::abs(want - got);
                lib_mass += got;
                if (a <= 6 && b <= 6 && (a + b) % 3 == 0) {
                    expect_density(c, "ConjugateReversal gamma f=(" + std::to_string(a) + "," + std::to_string(b) + ")",
                                   r::conditional_of_g(rule, {double(a), double(b)}).at(theta), joint, want,
                                   {0.1, 0.8, 2.5});
                }
                if (want < 1e-18 && b > a) {
                    break;
                }
            }
        }
        const double tv = 0.5 * (diff + std::max(0.0, 1.0 - lib_mass));
        c.expect(tv < 1e-10, "(b) ConjugateReversal gamma B=2 joint: TV " + num_str(tv));
    }
    {
        // Beta(a, b) with z ~ Ber(1 − x): θ = (a − 1, b − 1).
        const double a = 2.0;
        const double b = 0.7;
        const r::FissionRule rule =
            r::ConjugateReversal{std::make_shared<r::ExpFamSpec>(r::beta_spec(r::BetaSide::OneTheta)), 3};
        const Vector theta{a - 1.0, b - 1.0};
        double diff = 0.0;
        double lib_mass = 0.0;
        for (int code = 0; code < 8; ++code) {
            const Vector z{double(code & 1), double((code >> 1) & 1), double((code >> 2) & 1)};
            const double ones = z[0] + z[1] + z[2];
            const auto joint2 = [&](double x, double xm) {
                return std::exp(lbeta_pdf(x, xm, a, b) + ones * std::log(xm) + (3.0 - ones) * std::log(x));
            };
            const auto joint = [&](double x) { return joint2(x, 1.0 - x); };
            const double want = unit_interval_pair(joint2);
            const double got = std::exp(r::marginal_log_density(rule, theta, z));
            diff += std::abs(want - got);
            lib_mass += got;
            expect_density(c, "ConjugateReversal beta z=" + std::to_string(code),
                           r::conditional_of_g(rule, z).at(theta), joint, want, {0.1, 0.5, 0.85});
        }
        const double tv = 0.5 * (diff + std::max(0.0, 1.0 - lib_mass));
        c.expect(tv < 1e-10, "(b) ConjugateReversal beta B=3 joint: TV " + num_str(tv));
    }
}

/// Gaussian conditionals against direct conditioning of the joint normal.
void check_gaussian_conditionals(Checks& c)
{
    const double mu = 0.4;
    const double s2 = 1.7;
    for (double tau : {0.3, 1.0, 2.5}) {
        for (double f : {-1.0, 0.4, 2.2}) {
            struct Joint {
                r::FissionRule rule;
                double var_f;
                double cov_fg;
                double var_g;
            };
            const double s02 = 0.6 * tau;
            const std::vector<Joint> joints{
                {r::GaussP1{tau, Matrix{{s2}}}, s2 * (1.0 + tau * tau), 0.0, s2 * (1.0 + 1.0 / (tau * tau))},
                {r::GaussP2CP{tau, Matrix{{s2}}}, s2 * (1.0 + tau), s2, s2},
                {r::GaussP2General{Matrix{{s2}}, Matrix{{s02}}}, s2 + s02, s2 - s02, s2 + s02},
            };
            for (const Joint& j : joints) {
                const double m = mu + j.cov_fg / j.var_f * (f - mu);
                const double v = j.var_g - j.cov_fg * j.cov_fg / j.var_f;
                const dist::Dist law = r::conditional_of_g(j.rule, {f}).at({mu});
                double worst = 0.0;
                for (double g : {-2.0, 0.0, 0.4, 1.5, 3.0}) {
                    const double want = -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * (g - m) * (g - m) / v;
                    worst = std::max(worst, std::abs(want - dist::log_density(law, g)) / std::max(1.0, std::abs(want)));
                }
                c.expect(worst <= 1e-12, "(c) " + r::rule_name(j.rule) + " tau=" + num_str(tau) +
                                             ": log density error " + num_str(worst));
            }
        }
    }
}

void criterion1(Checks& c)
{
    check_reconstruction(c);
    check_gaussian_marginals(c);
    check_discrete_rules(c);
    check_gamma_family(c);
    check_beta_family(c);
    check_dirichlet(c);
    check_conjugate_reversal(c);
    check_gaussian_conditionals(c);
}

//---------------------------------------------------------------------------//
// Criterion 2
//---------------------------------------------------------------------------//

double independence_chisq(const std::vector<int>& a, const std::vector<int>& b)
{
    double table[10][10] = {};
    double rows[10] = {};
    double cols[10] = {};
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[a[i]][b[i]] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    double stat = 0.0;
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            const double e = rows[i] * cols[j] / n;
            stat += (table[i][j] - e) * (table[i][j] - e) / e;
        }
    }
    return stat;
}

int decile(double u) { return std::min(9, static_cast<int>(u * 10.0)); }

void criterion2(Checks& c)
{
    const std::size_t n = 100000;
    const double crit = num::chisq_quantile(0.999, 81.0);
    for (double tau : {0.5, 1.0, 2.0}) {
        const r::GaussP1 rule{tau, Matrix{{2.0}}};
        const dist::Dist lf = r::marginal_of_f(rule, {1.0});
        const dist::Dist lg = r::conditional_of_g(rule, {0.0}).at({1.0});
        RngStream rng(303, static_cast<std::uint64_t>(tau * 10));
        std::vector<int> a(n);
        std::vector<int> b(n);
        for (std::size_t i = 0; i < n; ++i) {
            const r::FissionOutput out = r::fission(1.0 + std::sqrt(2.0) * rng.normal(), rule, rng);
            a[i] = decile(dist::cdf(lf, out.f[0]));
            b[i] = decile(dist::cdf(lg, out.g[0]));
        }
        const double stat = independence_chisq(a, b);
        c.expect(stat < crit, "GaussP1 tau=" + num_str(tau) + ": chi-square " + num_str(stat));
        c.note("GaussP1 tau=" + num_str(tau) + " chi2=" + num_str(stat));
    }
    for (double p : {0.3, 0.5}) {
        const double mu = 12.0;
        const r::PoissonP1 rule{p};
        const dist::Dist lf = dist::Poisson{p * mu};
        const dist::Dist lg = dist::Poisson{(1.0 - p) * mu};
        RngStream rng(304, static_cast<std::uint64_t>(p * 10));
        RngStream jitter = rng.split(1);
        std::vector<int> a(n);
        std::vector<int> b(n);
        // Randomized PIT makes each margin exactly uniform.
        const auto pit = [&](const dist::Dist& d, double v) {
            const double lo = dist::cdf_left(d, v);
            return lo + jitter.uniform() * (dist::cdf(d, v) - lo);
        };
        for (std::size_t i = 0; i < n; ++i) {
            const r::FissionOutput out = r::fission(dist::sample_scalar(dist::Poisson{mu}, rng), rule, rng);
            a[i] = decile(pit(lf, out.f[0]));
            b[i] = decile(pit(lg, out.g[0]));
        }
        const double stat = independence_chisq(a, b);
        c.expect(stat < crit, "PoissonP1 p=" + num_str(p) + ": chi-square " + num_str(stat));
        c.note("PoissonP1 p=" + num_str(p) + " chi2=" + num_str(stat));
    }
    c.note("critical value " + num_str(crit));
}

//---------------------------------------------------------------------------//
// Criterion 3
//---------------------------------------------------------------------------//

void criterion3(Checks& c)
{
    RngStream rng(404, 0);
    for (double tau : {0.5, 1.0, 2.0}) {
        const double a = 1.0 / (1.0 + tau * tau);
        const auto cmp = info::compare_split_and_fission(info::SplitFamily::Gaussian, a, 2.0, 10000, 200, rng);
        c.expect(cmp.ratio >= 0.95 && cmp.ratio <= 1.05, "Gaussian a=" + num_str(a) + ": ratio " + num_str(cmp.ratio));
        c.note("Gaussian a=" + num_str(a) + " ratio=" + num_str(cmp.ratio));
    }
    for (double p : {0.2, 0.5, 0.8}) {
        const auto cmp = info::compare_split_and_fission(info::SplitFamily::Poisson, p, 4.0, 10000, 200, rng);
        c.expect(cmp.ratio >= 0.95 && cmp.ratio <= 1.05, "Poisson a=" + num_str(p) + ": ratio " + num_str(cmp.ratio));
        c.note("Poisson a=" + num_str(p) + " ratio=" + num_str(cmp.ratio));
    }
}

//---------------------------------------------------------------------------//
// Simulation criteria
//---------------------------------------------------------------------------//

double summary_mean(const sim::RunResult& res, sim::Method m, const std::string& metric)
{
    for (const sim::SummaryRow& row : res.summary) {
        if (row.method == m && row.metric == metric) {
            return row.mean;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

std::string metric_note(const sim::RunResult& res, const std::string& metric)
{
    std::string s = metric + ":";
    for (sim::Method m : res.config.methods) {
        s += std::string(" ") + sim::method_name(m) + "=" + num_str(summary_mean(res, m, metric));
    }
    return s;
}

void criterion4(Checks& c)
{
    sim::ExperimentConfig cfg = sim::default_config(sim::Experiment::LinregLeverage);
    cfg.n = 16;
    cfg.p = 20;
    cfg.signal = 0.2;
    cfg.gamma = 4.0;
    cfg.alpha = 0.2;
    cfg.tau = 1.0;
    cfg.trials = 500;
    const sim::RunResult res = sim::run(cfg, 1);
    using M = sim::Method;
    const double fis = summary_mean(res, M::Fission, "fcr");
    const double spl = summary_mean(res, M::Split, "fcr");
    const double twice = summary_mean(res, M::FullTwice, "fcr");
    const double len_f = summary_mean(res, M::Fission, "avg_ci_length");
    const double len_s = summary_mean(res, M::Split, "avg_ci_length");
    c.expect(fis <= 0.24, "fission FCR " + num_str(fis) + " > 0.24");
    c.expect(spl <= 0.24, "split FCR " + num_str(spl) + " > 0.24");
    c.expect(twice > 0.24, "full_twice FCR " + num_str(twice) + " does not exceed 0.24");
    c.expect(len_f < len_s, "fission CI length " + num_str(len_f) + " not below split " + num_str(len_s));
    c.note(metric_note(res, "fcr"));
    c.note(metric_note(res, "avg_ci_length"));
    c.note(metric_note(res, "n_selected"));
}

void criterion5(Checks& c)
{
    sim::ExperimentConfig cfg = sim::default_config(sim::Experiment::GlmPoisson);
    cfg.alpha = 0.2;
    cfg.trials = 500;
    const sim::RunResult res = sim::run(cfg, 1);
    const double fis = summary_mean(res, sim::Method::Fission, "fcr");
    c.expect(fis <= 0.24, "fission FCR " + num_str(fis) + " > 0.24");
    c.note(metric_note(res, "fcr"));

    const fit::Design d{Matrix(3, 1, 1.0), {1.0, 2.0, 3.0}, fit::Family::Poisson};
    const posi::SandwichResult s = posi::sandwich_ci(d, 0.2);
    c.expect(std::abs(s.pieces.H(0, 0) - 6.0) < 1e-10, "sandwich H " + num_str(s.pieces.H(0, 0)));
    c.expect(std::abs(s.pieces.V(0, 0) - 2.0) < 1e-10, "sandwich V " + num_str(s.pieces.V(0, 0)));
    c.expect(std::abs(s.pieces.variance(0, 0) - 1.0 / 18.0) < 1e-10,
             "sandwich variance " + num_str(s.pieces.variance(0, 0)));
}

void criterion6(Checks& c)
{
    for (double tau : {0.1, 0.5, 0.9}) {
        sim::ExperimentConfig cfg = sim::default_config(sim::Experiment::MultitestGauss);
        cfg.grid = 25;
        cfg.trials = 250;
        cfg.q = 0.2;
        cfg.alpha = 0.2;
        cfg.tau = tau;
        cfg.methods = {sim::Method::Fission};
        const sim::RunResult res = sim::run(cfg, 1);
        const double fdr = summary_mean(res, sim::Method::Fission, "fdp");
        const double mis = summary_mean(res, sim::Method::Fission, "miscoverage");
        c.expect(fdr <= 0.23, "tau=" + num_str(tau) + ": FDR " + num_str(fdr));
        c.expect(mis <= 0.23, "tau=" + num_str(tau) + ": miscoverage " + num_str(mis));
        c.note("tau=" + num_str(tau) + " fdr=" + num_str(fdr) + " miscoverage=" + num_str(mis) +
               " power=" + num_str(summary_mean(res, sim::Method::Fission, "power")));
    }
    const std::size_t n = 100000;
    for (double mu : {0.5, 3.0, 20.0}) {
        for (posi::Tail tail : {posi::Tail::Lower, posi::Tail::Upper}) {
            RngStream rng(606, static_cast<std::uint64_t>(mu * 10) + (tail == posi::Tail::Upper ? 1000 : 0));
            const dist::Dist null = dist::Poisson{mu};
            std::vector<double> ps(n);
            for (std::size_t i = 0; i < n; ++i) {
                ps[i] = posi::randomized_pvalue(dist::sample_scalar(null, rng), null, rng, tail);
            }
            const double ks = ks_statistic(ps, [](double u) { return std::clamp(u, 0.0, 1.0); });
            c.expect(ks < ks_critical(0.001, n), "randomized p-value mu=" + num_str(mu) + ": KS " + num_str(ks));
        }
    }
}

//---------------------------------------------------------------------------//
// Criterion 7
//---------------------------------------------------------------------------//

/// Accelerated projected gradient on the dual, with restarts; returns the
/// primal point y − Dᵀν.
Vector dual_oracle(const Vector& y, int k, double lambda, int iterations)
{
    const std::size_t n = y.size();
    const Matrix D = trend::diff_matrix(n, k);
    const std::size_t m = D.rows();
    const std::size_t q = static_cast<std::size_t>(k) + 2;
    std::vector<double> coef(q);
    for (std::size_t l = 0; l < q; ++l) {
        coef[l] = D(0, l);
    }
    const double L = num::sym_eigen(num::multiply(D, num::transpose(D))).values.front();
    const auto apply_dt = [&](const Vector& v, Vector& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t l = 0; l < q; ++l) {
                out[r + l] += coef[l] * v[r];
            }
        }
    };
    const auto apply_d = [&](const Vector& x, Vector& out) {
        for (std::size_t r = 0; r < m; ++r) {
            double s = 0.0;
            for (std::size_t l = 0; l < q; ++l) {
                s += coef[l] * x[r + l];
            }
            out[r] = s;
        }
    };
    Vector nu(m, 0.0);
    Vector prev(m, 0.0);
    Vector w(m, 0.0);
    Vector resid(n);
    Vector grad(m);
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        // Gradient of ½‖y − Dᵀw‖² is −D(y − Dᵀw).
        apply_dt(w, resid);
        for (std::size_t i = 0; i < n; ++i) {
            resid[i] = y[i] - resid[i];
        }
        apply_d(resid, grad);
        prev = nu;
        for (std::size_t r = 0; r < m; ++r) {
            nu[r] = std::clamp(w[r] + grad[r] / L, -lambda, lambda);
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
    Vector x(n);
    apply_dt(nu, x);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = y[i] - x[i];
    }
    return x;
}

void criterion7(Checks& c, bool with_grid)
{
    // (a)
    RngStream rng(707, 0);
    const double fracs[] = {0.5, 0.1, 0.02, 0.005};
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t n = 10 + static_cast<std::size_t>(rng.uniform() * 41.0);
        const int k = inst % 4;
        Vector y(n);
        double slope = rng.uniform() - 0.5;
        double level = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.uniform() < 0.2) {
                slope = rng.uniform() - 0.5;
            }
            level += slope;
            y[i] = level + 0.5 * rng.normal();
        }
        const double lambda = fracs[(inst + inst / 4) % 4] *
                              trend::trend_lambda_max(y, k);
        const trend::TrendFit fit = trend::trendfilter_admm(y, k, lambda);
        const Vector ox = dual_oracle(y, k, lambda, 1000000);
        const double oracle = trend::trend_objective(y, ox, k, lambda);
        const double rel = std::abs(fit.objective - oracle) / std::abs(oracle);
        worst = std::max(worst, rel);
        c.expect(rel <= 1e-6, "(a) n=" + std::to_string(n) + " k=" + std::to_string(k) +
                                  ": relative gap " + num_str(rel));
    }
    c.note("(a) worst relative objective gap " + num_str(worst));

    // (b)
    for (int k = 0; k <= 4; ++k) {
        const std::size_t n = 30;
        for (int deg = 0; deg <= k + 1; ++deg) {
            Vector poly(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i + 1);
                double v = 0.0;
                for (int j = deg; j >= 0; --j) {
                    v = v * t + static_cast<double>((j * 7 + 3) % 5 - 2 + (j == deg ? 3 : 0));
                }
                poly[i] = v;
            }
            const Vector d = trend::apply_diff(poly, k);
            bool ok = d.size() == n - static_cast<std::size_t>(k) - 1;
            if (deg <= k) {
                for (double v : d) {
                    ok = ok && v == 0.0;
                }
                c.expect(ok, "(b) k=" + std::to_string(k) + " degree " + std::to_string(deg) + " not annihilated");
            } else {
                // Leading coefficient times (k+1)! survives, up to the sign convention.
                const double lead = static_cast<double>((deg * 7 + 3) % 5 - 2 + 3);
                double fact = 1.0;
                for (int j = 2; j <= k + 1; ++j) {
                    fact *= j;
                }
                for (double v : d) {
                    ok = ok && std::abs(v) == std::abs(lead) * fact;
                }
                c.expect(ok, "(b) k=" + std::to_string(k) + " degree k+1 not mapped to a constant");
            }
        }
    }

    // (c)
    for (double alpha : {0.05, 0.1, 0.2}) {
        const double z = num::normal_quantile(1.0 - alpha / 2.0);
        const double c0 = trend::solve_multiplier(0.0, alpha);
        c.expect(std::abs(c0 - z) < 1e-8, "(c) gamma=0 alpha=" + num_str(alpha) + ": c " + num_str(c0));
        const Matrix ones(50, 1, 1.0);
        const trend::Multiplier flat = trend::uniform_multiplier(ones, alpha);
        c.expect(flat.gamma == 0.0 && std::abs(flat.c - z) < 1e-8,
                 "(c) constant basis alpha=" + num_str(alpha) + ": c " + num_str(flat.c));
        for (const std::vector<std::size_t>& knots :
             {std::vector<std::size_t>{}, std::vector<std::size_t>{40}, std::vector<std::size_t>{20, 55, 80}}) {
            for (int k : {1, 2}) {
                const Matrix A = trend::falling_factorial_basis(knots, k, 100);
                for (std::optional<double> df : {std::optional<double>{}, std::optional<double>{30.0}}) {
                    const trend::Multiplier mult = trend::uniform_multiplier(A, alpha, df);
                    const double res = std::abs(trend::multiplier_lhs(mult.c, mult.gamma, df) - alpha / 2.0);
                    c.expect(mult.gamma > 0.0 && res < 1e-8,
                             "(c) knots=" + std::to_string(knots.size()) + " k=" + std::to_string(k) +
                                 ": residual " + num_str(res));
                }
            }
        }
    }

    // (d)
    if (!with_grid) {
        return;
    }
    sim::ExperimentConfig cfg = sim::default_config(sim::Experiment::TrendfilterGrid);
    cfg.sigma = 0.05;
    cfg.p_knot = 0.19;
    cfg.k = 1;
    cfg.n = 200;
    cfg.trials = 500;
    cfg.methods = {sim::Method::Fission, sim::Method::FullTwice};
    const sim::RunResult res = sim::run(cfg, 1);
    using M = sim::Method;
    const double fcr_f = summary_mean(res, M::Fission, "fcr");
    const double sim_f = summary_mean(res, M::Fission, "simult_type1");
    const double fcr_t = summary_mean(res, M::FullTwice, "fcr");
    const double sim_t = summary_mean(res, M::FullTwice, "simult_type1");
    c.expect(fcr_f <= 0.24, "(d) fission FCR " + num_str(fcr_f) + " > 0.24");
    c.expect(sim_f <= 0.24, "(d) fission simultaneous type I " + num_str(sim_f) + " > 0.24");
    c.expect(fcr_t > cfg.alpha, "(d) full_twice FCR " + num_str(fcr_t) + " within the nominal 0.2");
    c.expect(sim_t > cfg.alpha, "(d) full_twice simultaneous type I " + num_str(sim_t) + " within the nominal 0.2");
    c.note("(d) " + metric_note(res, "fcr"));
    c.note("(d) " + metric_note(res, "simult_type1"));
    c.note("(d) " + metric_note(res, "failed"));
}

//---------------------------------------------------------------------------//
// Criterion 8
//---------------------------------------------------------------------------//

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void criterion8(Checks& c, const std::string& cli)
{
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / ("fiss_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(root);
    const std::vector<std::string> files{"summary.csv", "trials.csv", "config_echo"};
    struct Job {
        sim::Experiment e;
        std::size_t trials;
    };
    const std::vector<Job> jobs{{sim::Experiment::LinregLeverage, 24}, {sim::Experiment::LinregIndep, 6},
                                {sim::Experiment::GlmPoisson, 12},     {sim::Experiment::GlmLogistic, 5},
                                {sim::Experiment::MultitestGauss, 16}, {sim::Experiment::MultitestPoisson, 16},
                                {sim::Experiment::TrendfilterGrid, 8}};
    if (cli.empty()) {
        c.note("no CLI path given; running the library directly");
    }
    for (const Job& job : jobs) {
        const std::string name = sim::experiment_name(job.e);
        const fs::path cfg_path = root / (name + ".cfg");
        {
            std::ofstream cfg(cfg_path);
            cfg << "# determinism check\ntrials = " << job.trials << "\nseed = 99\n";
        }
        std::vector<std::string> outputs;
        for (std::size_t threads : {1, 2, 4, 1}) {
            const fs::path out = root / (name + "_" + std::to_string(threads) + "_" + std::to_string(outputs.size()));
            if (!cli.empty()) {
                const std::string cmd = "\"" + cli + "\" sim " + name + " --config \"" + cfg_path.string() +
                                        "\" --out \"" + out.string() + "\" --threads " + std::to_string(threads) +
                                        " > /dev/null";
                const int rc = std::system(cmd.c_str());
                c.expect(rc == 0, name + ": fiss sim exited with " + std::to_string(rc));
            } else {
                std::ifstream in(cfg_path);
                sim::ExperimentConfig config = sim::parse_config(in, sim::default_config(job.e));
                sim::write_outputs(out.string(), sim::run(config, threads));
            }
            std::string all;
            for (const std::string& f : files) {
                const std::string body = slurp(out / f);
                c.expect(!body.empty(), name + ": " + f + " missing or empty");
                all += body + '\x1f';
            }
            outputs.push_back(all);
        }
        bool same = true;
        for (const std::string& o : outputs) {
            same = same && o == outputs.front();
        }
        c.expect(same, name + ": outputs differ across thread counts or reruns");
    }
    std::error_code ec;
    fs::remove_all(root, ec);
}

}  // namespace

int main(int argc, char** argv)
{
    std::string cli;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc) {
            cli = argv[++i];
        } else {
            only.insert(std::stoi(arg));
        }
    }
    const std::vector<std::pair<int, std::function<void(Checks&)>>> criteria{
        {1, criterion1},
        {2, criterion2},
        {3, criterion3},
        {4, criterion4},
        {5, criterion5},
        {6, criterion6},
        {7, [](Checks& c) { criterion7(c, true); }},
        {8, [&](Checks& c) { criterion8(c, cli); }},
    };
    bool all_ok = true;
    for (const auto& [id, body] : criteria) {
        if (!only.empty() && only.count(id) == 0) {
            continue;
        }
        Checks c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const std::string& n : c.notes()) {
            std::cout << "  [" << id << "] " << n << '\n';
        }
        for (const std::string& f : c.failures()) {
            std::cout << "  [" << id << "] failed: " << f << '\n';
        }
        char line[160];
        std::snprintf(line, sizeof line, "criterion %d: %s (%zu checks, %.1f s)", id, c.ok() ? "PASS" : "FAIL",
                      c.count(), secs);
        std::cout << line << std::endl;
        all_ok = all_ok && c.ok();
    }
    return all_ok ? 0 : 1;
}
