#include "fiss/distkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "fiss/error.hpp"
#include "overloaded.hpp"

namespace fiss::dist {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using detail::Overloaded;

std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double xlogy(double x, double y)
{
    return x == 0.0 ? 0.0 : x * std::log(y);
}

double lbeta(double a, double b)
{
    return num::log_gamma(a) + num::log_gamma(b) - num::log_gamma(a + b);
}

bool is_integer(double x)
{
    return std::isfinite(x) && x == std::floor(x);
}

void check(bool cond, const char* what)
{
    require(cond, Errc::InvalidParameters, what);
}

void check_probs(const Vector& probs)
{
    check(!probs.empty(), "probability vector is empty");
    double s = 0.0;
    for (double p : probs) {
        check(p >= 0.0 && p <= 1.0, "probabilities must lie in [0, 1]");
        s += p;
    }
    check(std::abs(s - 1.0) < 1e-9, "probabilities must sum to 1");
}

//---------------------------------------------------------------------------//
// Raw samplers
//---------------------------------------------------------------------------//

double draw_gamma(double shape, RngStream& rng)
{
    if (shape < 1.0) {
        const double g = draw_gamma(shape + 1.0, rng);
        return g * std::pow(rng.uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

double draw_beta(double a, double b, RngStream& rng)
{
    const double x = draw_gamma(a, rng);
    const double y = draw_gamma(b, rng);
    return x / (x + y);
}

std::int64_t draw_binomial(std::int64_t n, double p, RngStream& rng);

std::int64_t draw_poisson(double mu, RngStream& rng)
{
    std::int64_t k = 0;
    // Gamma recursion (Knuth 3.4.1) until the mean is small.
    while (mu > 30.0) {
        const auto m = static_cast<std::int64_t>(std::floor(0.875 * mu));
        const double x = draw_gamma(static_cast<double>(m), rng);
        if (x < mu) {
            k += m;
            mu -= x;
        } else {
            return k + draw_binomial(m - 1, mu / x, rng);
        }
    }
    if (mu <= 0.0) {
        return k;
    }
    double pr = std::exp(-mu);
    double cum = pr;
    const double u = rng.uniform();
    std::int64_t x = 0;
    while (u > cum && x < 10000) {
        ++x;
        pr *= mu / static_cast<double>(x);
        cum += pr;
    }
    return k + x;
}

std::int64_t draw_binomial(std::int64_t n, double p, RngStream& rng)
{
    if (n <= 0 || p <= 0.0) {
        return 0;
    }
    if (p >= 1.0) {
        return n;
    }
    if (p > 0.5) {
        return n - draw_binomial(n, 1.0 - p, rng);
    }
    std::int64_t k = 0;
    // Beta recursion on order statistics until n·p is small.
    while (n > 0 && static_cast<double>(n) * std::min(p, 1.0 - p) > 30.0) {
        const std::int64_t a = 1 + n / 2;
        const std::int64_t b = n + 1 - a;
        const double x = draw_beta(static_cast<double>(a), static_cast<double>(b), rng);
        if (x >= p) {
            n = a - 1;
            p /= x;
        } else {
            k += a;
            n = b - 1;
            p = (p - x) / (1.0 - x);
        }
    }
    if (n <= 0 || p <= 0.0) {
        return k;
    }
    if (p >= 1.0) {
        return k + n;
    }
    if (p > 0.5) {
        return k + n - draw_binomial(n, 1.0 - p, rng);
    }
    const double q = 1.0 - p;
    const double ratio = p / q;
    double pr = std::exp(static_cast<double>(n) * std::log1p(-p));
    double cum = pr;
    const double u = rng.uniform();
    std::int64_t x = 0;
    while (u > cum && x < n) {
        pr *= ratio * static_cast<double>(n - x) / static_cast<double>(x + 1);
        ++x;
        cum += pr;
    }
    return k + x;
}

std::size_t draw_categorical(const Vector& probs, RngStream& rng)
{
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u <= cum) {
            return i;
        }
    }
    // Rounding left u above the total; take the last positive cell.
    for (std::size_t i = probs.size(); i-- > 0;) {
        if (probs[i] > 0.0) {
            return i;
        }
    }
    return probs.size() - 1;
}

Vector draw_multinomial(std::int64_t n, const Vector& probs, RngStream& rng)
{
    Vector out(probs.size(), 0.0);
    double rest = 1.0;
    std::int64_t left = n;
    for (std::size_t i = 0; i + 1 < probs.size() && left > 0; ++i) {
        const double pi = rest > 0.0 ? std::clamp(probs[i] / rest, 0.0, 1.0) : 0.0;
        const std::int64_t c = draw_binomial(left, pi, rng);
        out[i] = static_cast<double>(c);
        left -= c;
        rest -= probs[i];
    }
    out.back() += static_cast<double>(left);
    return out;
}

Vector draw_dirichlet(const Vector& alpha, RngStream& rng)
{
    Vector g(alpha.size());
    double s = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        g[i] = draw_gamma(alpha[i], rng);
        s += g[i];
    }
    for (double& v : g) {
        v /= s;
    }
    return g;
}

double discrete_sum_cdf(const Dist& d, std::int64_t lo, std::int64_t k)
{
    double s = 0.0;
    for (std::int64_t j = lo; j <= k; ++j) {
        s += std::exp(log_density(d, static_cast<double>(j)));
    }
    return std::min(s, 1.0);
}

}  // namespace

//---------------------------------------------------------------------------//
// RngStream
//---------------------------------------------------------------------------//

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_(stream_id),
      key_(mix64(mix64(seed + kGolden) ^ mix64(stream_id * 0xd1b54a32d192ed03ULL + kGolden)))
{
}

std::uint64_t RngStream::next_u64() noexcept
{
    ++counter_;
    return mix64(key_ ^ mix64(counter_ * kGolden));
}

double RngStream::uniform() noexcept
{
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(ang);
    has_spare_ = true;
    return r * std::cos(ang);
}

RngStream RngStream::split(std::uint64_t child) const
{
    RngStream out(seed_, stream_);
    out.key_ = mix64(key_ ^ mix64(child + 0x632be59bd9b4e019ULL));
    return out;
}

//---------------------------------------------------------------------------//
// Family metadata
//---------------------------------------------------------------------------//

std::string family_name(const Dist& d)
{
    static constexpr const char* names[] = {
        "Normal",      "MvNormalDiag", "MvNormal",     "Poisson",   "Binomial",
        "Bernoulli",   "NegBinomial",  "Gamma",        "Exponential", "Beta",
        "Dirichlet",   "Categorical",  "Multinomial",  "Geometric", "BetaBinomial",
        "DiscreteUniform", "DirichletMultinomial"};
    return names[d.index()];
}

void validate(const Dist& d)
{
    std::visit(
        Overloaded{
            [](const Normal& v) {
                check(std::isfinite(v.mu) && v.sigma > 0.0 && std::isfinite(v.sigma),
                      "Normal requires finite mu and sigma > 0");
            },
            [](const MvNormalDiag& v) {
                check(!v.mu.empty() && v.mu.size() == v.sd.size(), "MvNormalDiag size mismatch");
                for (double s : v.sd) {
                    check(s > 0.0 && std::isfinite(s), "MvNormalDiag sd must be positive");
                }
            },
            [](const MvNormal& v) {
                check(!v.mu.empty() && v.chol.is_square() && v.chol.rows() == v.mu.size(),
                      "MvNormal factor must be square and match mu");
                for (std::size_t i = 0; i < v.mu.size(); ++i) {
                    check(v.chol(i, i) > 0.0, "MvNormal factor needs positive diagonal");
                }
            },
            [](const Poisson& v) {
                check(v.mu >= 0.0 && std::isfinite(v.mu), "Poisson mean must be >= 0");
            },
            [](const Binomial& v) {
                check(v.n >= 0 && v.p >= 0.0 && v.p <= 1.0, "Binomial needs n >= 0, p in [0,1]");
            },
            [](const Bernoulli& v) { check(v.p >= 0.0 && v.p <= 1.0, "Bernoulli p in [0,1]"); },
            [](const NegBinomial& v) {
                check(v.r > 0.0 && v.theta > 0.0 && v.theta <= 1.0,
                      "NegBinomial needs r > 0, theta in (0,1]");
            },
            [](const Gamma& v) {
                check(v.shape > 0.0 && v.rate > 0.0 && std::isfinite(v.shape)
                          && std::isfinite(v.rate),
                      "Gamma needs shape > 0, rate > 0");
            },
            [](const Exponential& v) {
                check(v.rate > 0.0 && std::isfinite(v.rate), "Exponential rate > 0");
            },
            [](const Beta& v) { check(v.a > 0.0 && v.b > 0.0, "Beta needs a, b > 0"); },
            [](const Dirichlet& v) {
                check(v.alpha.size() >= 2, "Dirichlet needs at least 2 components");
                for (double a : v.alpha) {
                    check(a > 0.0 && std::isfinite(a), "Dirichlet alpha must be positive");
                }
            },
            [](const Categorical& v) { check_probs(v.probs); },
            [](const Multinomial& v) {
                check(v.n >= 0, "Multinomial n >= 0");
                check_probs(v.probs);
            },
            [](const Geometric& v) {
                check(v.theta > 0.0 && v.theta <= 1.0, "Geometric theta in (0,1]");
            },
            [](const BetaBinomial& v) {
                check(v.n >= 0 && v.a > 0.0 && v.b > 0.0, "BetaBinomial needs n >= 0, a, b > 0");
            },
            [](const DiscreteUniform& v) { check(v.lo <= v.hi, "DiscreteUniform needs lo <= hi"); },
            [](const DirichletMultinomial& v) {
                check(v.n >= 0 && v.alpha.size() >= 2, "DirichletMultinomial shape");
                for (double a : v.alpha) {
                    check(a > 0.0 && std::isfinite(a), "DirichletMultinomial alpha > 0");
                }
            },
        },
        d);
}

bool is_discrete(const Dist& d) noexcept
{
    return std::holds_alternative<Poisson>(d) || std::holds_alternative<Binomial>(d)
           || std::holds_alternative<Bernoulli>(d) || std::holds_alternative<NegBinomial>(d)
           || std::holds_alternative<Categorical>(d) || std::holds_alternative<Multinomial>(d)
           || std::holds_alternative<Geometric>(d) || std::holds_alternative<BetaBinomial>(d)
           || std::holds_alternative<DiscreteUniform>(d)
           || std::holds_alternative<DirichletMultinomial>(d);
}

bool is_univariate(const Dist& d) noexcept
{
    return !(std::holds_alternative<MvNormalDiag>(d) || std::holds_alternative<MvNormal>(d)
             || std::holds_alternative<Dirichlet>(d) || std::holds_alternative<Multinomial>(d)
             || std::holds_alternative<DirichletMultinomial>(d));
}

std::size_t dimension(const Dist& d) noexcept
{
    return std::visit(Overloaded{
                          [](const MvNormalDiag& v) { return v.mu.size(); },
                          [](const MvNormal& v) { return v.mu.size(); },
                          [](const Dirichlet& v) { return v.alpha.size(); },
                          [](const Multinomial& v) { return v.probs.size(); },
                          [](const DirichletMultinomial& v) { return v.alpha.size(); },
                          [](const auto&) { return std::size_t{1}; },
                      },
                      d);
}

//---------------------------------------------------------------------------//
// Sampling
//---------------------------------------------------------------------------//

Vector sample(const Dist& d, RngStream& rng)
{
    validate(d);
    return std::visit(
        Overloaded{
            [&](const Normal& v) { return Vector{v.mu + v.sigma * rng.normal()}; },
            [&](const MvNormalDiag& v) {
                Vector x(v.mu.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    x[i] = v.mu[i] + v.sd[i] * rng.normal();
                }
                return x;
            },
            [&](const MvNormal& v) {
                Vector z(v.mu.size());
                for (double& zi : z) {
                    zi = rng.normal();
                }
                Vector x = num::multiply(v.chol, z);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    x[i] += v.mu[i];
                }
                return x;
            },
            [&](const Poisson& v) { return Vector{static_cast<double>(draw_poisson(v.mu, rng))}; },
            [&](const Binomial& v) {
                return Vector{static_cast<double>(draw_binomial(v.n, v.p, rng))};
            },
            [&](const Bernoulli& v) { return Vector{rng.uniform() < v.p ? 1.0 : 0.0}; },
            [&](const NegBinomial& v) {
                if (v.theta >= 1.0) {
                    return Vector{0.0};
                }
                const double lam = draw_gamma(v.r, rng) * (1.0 - v.theta) / v.theta;
                return Vector{static_cast<double>(draw_poisson(lam, rng))};
            },
            [&](const Gamma& v) { return Vector{draw_gamma(v.shape, rng) / v.rate}; },
            [&](const Exponential& v) { return Vector{-std::log(rng.uniform()) / v.rate}; },
            [&](const Beta& v) { return Vector{draw_beta(v.a, v.b, rng)}; },
            [&](const Dirichlet& v) { return draw_dirichlet(v.alpha, rng); },
            [&](const Categorical& v) {
                return Vector{static_cast<double>(draw_categorical(v.probs, rng))};
            },
            [&](const Multinomial& v) { return draw_multinomial(v.n, v.probs, rng); },
            [&](const Geometric& v) {
                if (v.theta >= 1.0) {
                    return Vector{0.0};
                }
                return Vector{std::floor(std::log(rng.uniform()) / std::log1p(-v.theta))};
            },
            [&](const BetaBinomial& v) {
                const double p = draw_beta(v.a, v.b, rng);
                return Vector{static_cast<double>(draw_binomial(v.n, p, rng))};
            },
            [&](const DiscreteUniform& v) {
                const auto width = static_cast<std::uint64_t>(v.hi - v.lo) + 1;
                return Vector{static_cast<double>(
                    v.lo + static_cast<std::int64_t>(rng.next_u64() % width))};
            },
            [&](const DirichletMultinomial& v) {
                return draw_multinomial(v.n, draw_dirichlet(v.alpha, rng), rng);
            },
        },
        d);
}

double sample_scalar(const Dist& d, RngStream& rng)
{
    require(is_univariate(d), Errc::InvalidParameters, "sample_scalar needs a univariate law");
    return sample(d, rng)[0];
}

//---------------------------------------------------------------------------//
// Densities
//---------------------------------------------------------------------------//

double log_choose(double n, double k)
{
    require(k >= 0.0 && n >= k, Errc::DomainError, "log_choose requires 0 <= k <= n");
    return num::log_gamma(n + 1.0) - num::log_gamma(k + 1.0) - num::log_gamma(n - k + 1.0);
}

namespace {

void support(bool cond)
{
    require(cond, Errc::OutOfSupport, "point outside the support");
}

double count_arg(double x)
{
    support(is_integer(x) && x >= 0.0);
    return x;
}

double scalar_log_density(const Dist& d, double x)
{
    return std::visit(
        Overloaded{
            [&](const Normal& v) {
                support(std::isfinite(x));
                const double z = (x - v.mu) / v.sigma;
                return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(v.sigma) - 0.5 * z * z;
            },
            [&](const Poisson& v) {
                const double k = count_arg(x);
                if (v.mu == 0.0) {
                    return k == 0.0 ? 0.0 : kNegInf;
                }
                return k * std::log(v.mu) - v.mu - num::log_gamma(k + 1.0);
            },
            [&](const Binomial& v) {
                const double k = count_arg(x);
                const auto n = static_cast<double>(v.n);
                support(k <= n);
                if ((v.p == 0.0 && k > 0.0) || (v.p == 1.0 && k < n)) {
                    return kNegInf;
                }
                return log_choose(n, k) + xlogy(k, v.p) + xlogy(n - k, 1.0 - v.p);
            },
            [&](const Bernoulli& v) {
                support(x == 0.0 || x == 1.0);
                const double pr = x == 1.0 ? v.p : 1.0 - v.p;
                return pr > 0.0 ? std::log(pr) : kNegInf;
            },
            [&](const NegBinomial& v) {
                const double k = count_arg(x);
                if (v.theta == 1.0) {
                    return k == 0.0 ? 0.0 : kNegInf;
                }
                return num::log_gamma(k + v.r) - num::log_gamma(v.r) - num::log_gamma(k + 1.0)
                       + v.r * std::log(v.theta) + k * std::log1p(-v.theta);
            },
            [&](const Gamma& v) {
                support(x > 0.0 && std::isfinite(x));
                return v.shape * std::log(v.rate) - num::log_gamma(v.shape)
                       + (v.shape - 1.0) * std::log(x) - v.rate * x;
            },
            [&](const Exponential& v) {
                support(x >= 0.0 && std::isfinite(x));
                return std::log(v.rate) - v.rate * x;
            },
            [&](const Beta& v) {
                support(x > 0.0 && x < 1.0);
                return (v.a - 1.0) * std::log(x) + (v.b - 1.0) * std::log1p(-x) - lbeta(v.a, v.b);
            },
            [&](const Categorical& v) {
                const double k = count_arg(x);
                support(k < static_cast<double>(v.probs.size()));
                const double pr = v.probs[static_cast<std::size_t>(k)];
                return pr > 0.0 ? std::log(pr) : kNegInf;
            },
            [&](const Geometric& v) {
                const double k = count_arg(x);
                if (v.theta == 1.0) {
                    return k == 0.0 ? 0.0 : kNegInf;
                }
                return std::log(v.theta) + k * std::log1p(-v.theta);
            },
            [&](const BetaBinomial& v) {
                const double k = count_arg(x);
                const auto n = static_cast<double>(v.n);
                support(k <= n);
                return log_choose(n, k) + lbeta(k + v.a, n - k + v.b) - lbeta(v.a, v.b);
            },
            [&](const DiscreteUniform& v) {
                support(is_integer(x) && x >= static_cast<double>(v.lo)
                        && x <= static_cast<double>(v.hi));
                return -std::log(static_cast<double>(v.hi - v.lo) + 1.0);
            },
            [&](const auto&) -> double {
                fail(Errc::DomainError, "scalar density requested for a multivariate law");
            },
        },
        d);
}

double counts_total(std::span<const double> x, std::size_t dim)
{
    support(x.size() == dim);
    double n = 0.0;
    for (double k : x) {
        count_arg(k);
        n += k;
    }
    return n;
}

}  // namespace

double log_density(const Dist& d, double x)
{
    validate(d);
    return scalar_log_density(d, x);
}

double log_density(const Dist& d, std::span<const double> x)
{
    validate(d);
    if (is_univariate(d)) {
        support(x.size() == 1);
        return scalar_log_density(d, x[0]);
    }
    return std::visit(
        Overloaded{
            [&](const MvNormalDiag& v) {
                support(x.size() == v.mu.size());
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    s += scalar_log_density(Normal{v.mu[i], v.sd[i]}, x[i]);
                }
                return s;
            },
            [&](const MvNormal& v) {
                const std::size_t n = v.mu.size();
                support(x.size() == n);
                Vector w(n);
                double logdet = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double r = x[i] - v.mu[i];
                    for (std::size_t k = 0; k < i; ++k) {
                        r -= v.chol(i, k) * w[k];
                    }
                    w[i] = r / v.chol(i, i);
                    logdet += std::log(v.chol(i, i));
                }
                return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - logdet
                       - 0.5 * num::dot(w, w);
            },
            [&](const Dirichlet& v) {
                support(x.size() == v.alpha.size());
                double s = 0.0;
                double total = 0.0;
                double asum = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    support(x[i] > 0.0 && x[i] < 1.0);
                    total += x[i];
                    asum += v.alpha[i];
                    s += (v.alpha[i] - 1.0) * std::log(x[i]) - num::log_gamma(v.alpha[i]);
                }
                support(std::abs(total - 1.0) < 1e-9);
                return s + num::log_gamma(asum);
            },
            [&](const Multinomial& v) {
                const double n = counts_total(x, v.probs.size());
                support(n == static_cast<double>(v.n));
                double s = num::log_gamma(n + 1.0);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (x[i] > 0.0 && v.probs[i] == 0.0) {
                        return kNegInf;
                    }
                    s += xlogy(x[i], v.probs[i]) - num::log_gamma(x[i] + 1.0);
                }
                return s;
            },
            [&](const DirichletMultinomial& v) {
                const double n = counts_total(x, v.alpha.size());
                support(n == static_cast<double>(v.n));
                const double asum = std::accumulate(v.alpha.begin(), v.alpha.end(), 0.0);
                double s = num::log_gamma(n + 1.0) + num::log_gamma(asum)
                           - num::log_gamma(n + asum);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    s += num::log_gamma(x[i] + v.alpha[i]) - num::log_gamma(v.alpha[i])
                         - num::log_gamma(x[i] + 1.0);
                }
                return s;
            },
            [&](const auto&) -> double { fail(Errc::DomainError, "unreachable family"); },
        },
        d);
}

double density(const Dist& d, double x)
{
    return std::exp(log_density(d, x));
}

//---------------------------------------------------------------------------//
// CDFs
//---------------------------------------------------------------------------//

double cdf(const Dist& d, double x)
{
    validate(d);
    require(!std::isnan(x), Errc::DomainError, "cdf of NaN");
    const double kf = std::floor(x);
    return std::visit(
        Overloaded{
            [&](const Normal& v) { return num::normal_cdf((x - v.mu) / v.sigma); },
            [&](const Poisson& v) {
                if (kf < 0.0) {
                    return 0.0;
                }
                if (v.mu == 0.0 || std::isinf(kf)) {
                    return 1.0;
                }
                return boost::math::gamma_q(kf + 1.0, v.mu);
            },
            [&](const Binomial& v) {
                const auto n = static_cast<double>(v.n);
                if (kf < 0.0) {
                    return 0.0;
                }
                if (kf >= n || v.p == 0.0) {
                    return 1.0;
                }
                if (v.p == 1.0) {
                    return 0.0;
                }
                return boost::math::ibetac(kf + 1.0, n - kf, v.p);
            },
            [&](const Bernoulli& v) { return kf < 0.0 ? 0.0 : (kf < 1.0 ? 1.0 - v.p : 1.0); },
            [&](const NegBinomial& v) {
                if (kf < 0.0) {
                    return 0.0;
                }
                if (v.theta == 1.0 || std::isinf(kf)) {
                    return 1.0;
                }
                return boost::math::ibeta(v.r, kf + 1.0, v.theta);
            },
            [&](const Gamma& v) {
                return x <= 0.0 ? 0.0 : boost::math::gamma_p(v.shape, v.rate * x);
            },
            [&](const Exponential& v) { return x <= 0.0 ? 0.0 : -std::expm1(-v.rate * x); },
            [&](const Beta& v) {
                if (x <= 0.0) {
                    return 0.0;
                }
                return x >= 1.0 ? 1.0 : boost::math::ibeta(v.a, v.b, x);
            },
            [&](const Categorical& v) {
                if (kf < 0.0) {
                    return 0.0;
                }
                const auto last = static_cast<double>(v.probs.size() - 1);
                return kf >= last ? 1.0 : discrete_sum_cdf(d, 0, static_cast<std::int64_t>(kf));
            },
            [&](const Geometric& v) {
                if (kf < 0.0) {
                    return 0.0;
                }
                if (v.theta == 1.0 || std::isinf(kf)) {
                    return 1.0;
                }
                return -std::expm1((kf + 1.0) * std::log1p(-v.theta));
            },
            [&](const BetaBinomial& v) {
                if (kf < 0.0) {
                    return 0.0;
                }
                return kf >= static_cast<double>(v.n)
                           ? 1.0
                           : discrete_sum_cdf(d, 0, static_cast<std::int64_t>(kf));
            },
            [&](const DiscreteUniform& v) {
                const auto lo = static_cast<double>(v.lo);
                const auto hi = static_cast<double>(v.hi);
                if (kf < lo) {
                    return 0.0;
                }
                return kf >= hi ? 1.0 : (kf - lo + 1.0) / (hi - lo + 1.0);
            },
            [&](const auto&) -> double {
                fail(Errc::DomainError, "cdf requested for a multivariate law");
            },
        },
        d);
}

double cdf_left(const Dist& d, double x)
{
    if (!is_discrete(d)) {
        return cdf(d, x);
    }
    return cdf(d, std::ceil(x) - 1.0);
}

//---------------------------------------------------------------------------//
// Moments
//---------------------------------------------------------------------------//

double mean(const Dist& d)
{
    validate(d);
    return std::visit(
        Overloaded{
            [](const Normal& v) { return v.mu; },
            [](const Poisson& v) { return v.mu; },
            [](const Binomial& v) { return static_cast<double>(v.n) * v.p; },
            [](const Bernoulli& v) { return v.p; },
            [](const NegBinomial& v) { return v.r * (1.0 - v.theta) / v.theta; },
            [](const Gamma& v) { return v.shape / v.rate; },
            [](const Exponential& v) { return 1.0 / v.rate; },
            [](const Beta& v) { return v.a / (v.a + v.b); },
            [](const Categorical& v) {
                double m = 0.0;
                for (std::size_t i = 0; i < v.probs.size(); ++i) {
                    m += static_cast<double>(i) * v.probs[i];
                }
                return m;
            },
            [](const Geometric& v) { return (1.0 - v.theta) / v.theta; },
            [](const BetaBinomial& v) { return static_cast<double>(v.n) * v.a / (v.a + v.b); },
            [](const DiscreteUniform& v) { return 0.5 * static_cast<double>(v.lo + v.hi); },
            [](const auto&) -> double {
                fail(Errc::DomainError, "scalar mean requested for a multivariate law");
            },
        },
        d);
}

double variance(const Dist& d)
{
    validate(d);
    return std::visit(
        Overloaded{
            [](const Normal& v) { return v.sigma * v.sigma; },
            [](const Poisson& v) { return v.mu; },
            [](const Binomial& v) { return static_cast<double>(v.n) * v.p * (1.0 - v.p); },
            [](const Bernoulli& v) { return v.p * (1.0 - v.p); },
            [](const NegBinomial& v) { return v.r * (1.0 - v.theta) / (v.theta * v.theta); },
            [](const Gamma& v) { return v.shape / (v.rate * v.rate); },
            [](const Exponential& v) { return 1.0 / (v.rate * v.rate); },
            [](const Beta& v) {
                const double s = v.a + v.b;
                return v.a * v.b / (s * s * (s + 1.0));
            },
            [](const Categorical& v) {
                double m = 0.0;
                double m2 = 0.0;
                for (std::size_t i = 0; i < v.probs.size(); ++i) {
                    const auto k = static_cast<double>(i);
                    m += k * v.probs[i];
                    m2 += k * k * v.probs[i];
                }
                return m2 - m * m;
            },
            [](const Geometric& v) { return (1.0 - v.theta) / (v.theta * v.theta); },
            [](const BetaBinomial& v) {
                const auto n = static_cast<double>(v.n);
                const double s = v.a + v.b;
                return n * v.a * v.b * (s + n) / (s * s * (s + 1.0));
            },
            [](const DiscreteUniform& v) {
                const auto w = static_cast<double>(v.hi - v.lo) + 1.0;
                return (w * w - 1.0) / 12.0;
            },
            [](const auto&) -> double {
                fail(Errc::DomainError, "scalar variance requested for a multivariate law");
            },
        },
        d);
}

std::vector<std::pair<std::int64_t, double>> enumerate_pmf(const Dist& d, double tail)
{
    validate(d);
    require(is_discrete(d) && is_univariate(d), Errc::DomainError,
            "enumerate_pmf needs a univariate discrete law");
    std::int64_t lo = 0;
    std::int64_t hi = std::numeric_limits<std::int64_t>::max();
    if (const auto* b = std::get_if<Binomial>(&d)) {
        hi = b->n;
    } else if (std::holds_alternative<Bernoulli>(d)) {
        hi = 1;
    } else if (const auto* c = std::get_if<Categorical>(&d)) {
        hi = static_cast<std::int64_t>(c->probs.size()) - 1;
    } else if (const auto* bb = std::get_if<BetaBinomial>(&d)) {
        hi = bb->n;
    } else if (const auto* u = std::get_if<DiscreteUniform>(&d)) {
        lo = u->lo;
        hi = u->hi;
    }
    std::vector<std::pair<std::int64_t, double>> out;
    double cum = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) {
        const double pr = std::exp(scalar_log_density(d, static_cast<double>(k)));
        out.emplace_back(k, pr);
        cum += pr;
        const bool unbounded = hi == std::numeric_limits<std::int64_t>::max();
        if (unbounded && (cum > 1.0 - tail || (pr < 1e-300 && k > lo + 1000))) {
            break;
        }
        require(k - lo < 50'000'000, Errc::DomainError, "support too large to enumerate");
    }
    return out;
}

}  // namespace fiss::dist
