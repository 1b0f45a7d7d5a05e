#include "fiss/fission.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fiss/error.hpp"
#include "overloaded.hpp"

namespace fiss::rules {

using detail::Overloaded;

namespace {

bool is_count(double x)
{
    return std::isfinite(x) && x >= 0.0 && x == std::floor(x);
}

void in_support(bool cond, const char* what)
{
    require(cond, Errc::OutOfSupport, what);
}

void tuning(bool cond, const char* what)
{
    require(cond, Errc::InvalidTuning, what);
}

bool open_unit(double p)
{
    return p > 0.0 && p < 1.0;
}

double scalar(const Vector& v, const char* what)
{
    in_support(v.size() == 1, what);
    return v[0];
}

/// T-weighted dot product that treats 0·(±∞) as 0.
double weighted_dot(const Vector& s, const Vector& t)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (t[i] != 0.0) {
            acc += s[i] * t[i];
        }
    }
    return acc;
}

Matrix expand_cov(const Matrix& s, std::size_t d)
{
    if (s.rows() == 1 && s.cols() == 1 && d != 1) {
        return num::scale(Matrix::identity(d), s(0, 0));
    }
    require(s.rows() == d && s.cols() == d, Errc::DimensionMismatch,
            "covariance does not match the observation dimension");
    return s;
}

Dist gaussian_law(const Vector& mu, const Matrix& cov)
{
    if (mu.size() == 1) {
        return dist::Normal{mu[0], std::sqrt(cov(0, 0))};
    }
    return dist::MvNormal{mu, num::cholesky(cov)};
}

Vector gaussian_noise(const Matrix& cov, RngStream& rng)
{
    const std::size_t d = cov.rows();
    Vector n(d);
    for (double& v : n) {
        v = rng.normal();
    }
    if (d == 1) {
        return {std::sqrt(cov(0, 0)) * n[0]};
    }
    return num::multiply(num::cholesky(cov), n);
}

/// Noise with covariance s, where a 1×1 s means s·I of dimension d.
Vector gaussian_noise(const Matrix& s, std::size_t d, RngStream& rng)
{
    if (s.rows() == 1 && s.cols() == 1 && d != 1) {
        const double sd = std::sqrt(s(0, 0));
        Vector n(d);
        for (double& v : n) {
            v = sd * rng.normal();
        }
        return n;
    }
    return gaussian_noise(expand_cov(s, d), rng);
}

Vector categorical_weights(const CategoricalP2& r)
{
    if (r.weights.empty()) {
        return Vector(static_cast<std::size_t>(r.d), 1.0 / static_cast<double>(r.d));
    }
    return r.weights;
}

double draw(const Dist& d, RngStream& rng)
{
    return dist::sample_scalar(d, rng);
}

std::string fmt(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_num(const Record& rec, const std::string& key, double fallback)
{
    const auto it = rec.find(key);
    if (it == rec.end()) {
        return fallback;
    }
    double v = 0.0;
    const auto& s = it->second;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        fail(Errc::ConfigError, "field '" + key + "' is not a number: '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(const Record& rec, const std::string& key, std::int64_t fallback)
{
    const double v = parse_num(rec, key, static_cast<double>(fallback));
    if (v != std::floor(v)) {
        fail(Errc::ConfigError, "field '" + key + "' must be an integer");
    }
    return static_cast<std::int64_t>(v);
}

double scalar_cov(const Matrix& m, const char* what)
{
    require(m.rows() == 1 && m.cols() == 1, Errc::InvalidTuning, what);
    return m(0, 0);
}

}  // namespace

//---------------------------------------------------------------------------//
// Exponential-family specs
//---------------------------------------------------------------------------//

void validate(const ExpFamSpec& spec)
{
    const bool complete = spec.log_H && spec.S && spec.A && spec.log_base && spec.T
                          && spec.log_h && spec.draw_z && spec.law;
    require(complete, Errc::InvalidSpec, "exponential-family spec has missing pieces");
    require(spec.dim1 > 0, Errc::InvalidSpec, "spec needs at least one natural parameter");
    require(spec.theta3.size() == spec.dim2, Errc::InvalidSpec, "theta3 length must equal dim2");
}

ExpFamSpec gamma_spec(double tau)
{
    require(tau > 0.0 && std::isfinite(tau), Errc::InvalidSpec, "gamma spec needs tau > 0");
    ExpFamSpec s;
    s.name = "gamma";
    s.tau = tau;
    s.dim1 = 1;
    s.dim2 = 1;
    s.log_H = [](const Vector& th1, const Vector& th2) {
        const double shape = th1[0] + 1.0;
        require(shape > 0.0 && th2[0] > 0.0, Errc::DomainError, "gamma parameters out of range");
        return shape * std::log(th2[0]) - num::log_gamma(shape);
    };
    s.S = [](const Vector& x) {
        in_support(x.size() == 1 && x[0] > 0.0, "gamma support is x > 0");
        return Vector{std::log(x[0])};
    };
    s.A = [](const Vector& x) { return Vector{x[0]}; };
    s.log_base = [](const Vector&) { return 0.0; };
    s.T = [](double z) { return Vector{z}; };
    s.theta3 = {tau};
    s.log_h = [tau](double z) {
        in_support(is_count(z), "poisson draw must be a count");
        return z * std::log(tau) - num::log_gamma(z + 1.0);
    };
    s.draw_z = [tau](const Vector& x, RngStream& rng) {
        return draw(dist::Poisson{tau * x[0]}, rng);
    };
    s.law = [](const Vector& th1, const Vector& th2) -> Dist {
        return dist::Gamma{th1[0] + 1.0, th2[0]};
    };
    return s;
}

ExpFamSpec exponential_spec(double tau)
{
    ExpFamSpec s = gamma_spec(tau);
    s.name = "exponential";
    return s;
}

ExpFamSpec beta_spec(BetaSide side)
{
    ExpFamSpec s;
    const bool first = side == BetaSide::ThetaOne;
    s.name = first ? "beta_theta_one" : "beta_one_theta";
    s.dim1 = 2;
    s.dim2 = 0;
    s.log_H = [](const Vector& th1, const Vector&) {
        const double a = th1[0] + 1.0;
        const double b = th1[1] + 1.0;
        require(a > 0.0 && b > 0.0, Errc::DomainError, "beta parameters out of range");
        return num::log_gamma(a + b) - num::log_gamma(a) - num::log_gamma(b);
    };
    s.S = [](const Vector& x) {
        in_support(x.size() == 1 && x[0] > 0.0 && x[0] < 1.0, "beta support is (0, 1)");
        return Vector{std::log(x[0]), std::log1p(-x[0])};
    };
    s.A = [](const Vector&) { return Vector{}; };
    s.log_base = [](const Vector&) { return 0.0; };
    s.T = [first](double z) {
        in_support(z == 0.0 || z == 1.0, "bernoulli draw must be 0 or 1");
        return first ? Vector{z, 1.0 - z} : Vector{1.0 - z, z};
    };
    s.log_h = [](double) { return 0.0; };
    s.draw_z = [first](const Vector& x, RngStream& rng) {
        return draw(dist::Bernoulli{first ? x[0] : 1.0 - x[0]}, rng);
    };
    s.law = [](const Vector& th1, const Vector&) -> Dist {
        return dist::Beta{th1[0] + 1.0, th1[1] + 1.0};
    };
    return s;
}

ExpFamSpec dirichlet_spec(std::size_t d)
{
    require(d >= 2, Errc::InvalidSpec, "dirichlet spec needs d >= 2");
    ExpFamSpec s;
    s.name = "dirichlet";
    s.dim1 = d;
    s.dim2 = 0;
    s.log_H = [](const Vector& th1, const Vector&) {
        double total = 0.0;
        double acc = 0.0;
        for (double t : th1) {
            require(t + 1.0 > 0.0, Errc::DomainError, "dirichlet parameters out of range");
            total += t + 1.0;
            acc -= num::log_gamma(t + 1.0);
        }
        return acc + num::log_gamma(total);
    };
    s.S = [d](const Vector& x) {
        in_support(x.size() == d, "dirichlet point has the wrong dimension");
        Vector out(d);
        double total = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            in_support(x[i] >= 0.0 && x[i] <= 1.0, "dirichlet point must lie in the simplex");
            out[i] = std::log(x[i]);
            total += x[i];
        }
        in_support(std::abs(total - 1.0) < 1e-9, "dirichlet point must sum to 1");
        return out;
    };
    s.A = [](const Vector&) { return Vector{}; };
    s.log_base = [](const Vector&) { return 0.0; };
    s.T = [d](double z) {
        in_support(is_count(z) && z < static_cast<double>(d), "category index out of range");
        Vector t(d, 0.0);
        t[static_cast<std::size_t>(z)] = 1.0;
        return t;
    };
    s.log_h = [](double) { return 0.0; };
    s.draw_z = [](const Vector& x, RngStream& rng) {
        Vector probs = x;
        const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
        for (double& p : probs) {
            p /= total;
        }
        return draw(dist::Categorical{probs}, rng);
    };
    s.law = [](const Vector& th1, const Vector&) -> Dist {
        Vector alpha = th1;
        for (double& a : alpha) {
            a += 1.0;
        }
        return dist::Dirichlet{alpha};
    };
    return s;
}

double spec_log_density(const ExpFamSpec& spec, const Vector& th1, const Vector& th2,
                        const Vector& x)
{
    const Vector s = spec.S(x);
    const Vector a = spec.A(x);
    return spec.log_H(th1, th2) + weighted_dot(s, th1) - num::dot(th2, a) + spec.log_base(x);
}

double spec_log_likelihood(const ExpFamSpec& spec, double z, const Vector& x)
{
    return spec.log_h(z) + weighted_dot(spec.S(x), spec.T(z)) - num::dot(spec.theta3, spec.A(x));
}

std::pair<Vector, Vector> spec_posterior(const ExpFamSpec& spec, const Vector& th1,
                                         const Vector& th2, const Vector& zs)
{
    require(th1.size() == spec.dim1 && th2.size() == spec.dim2, Errc::DimensionMismatch,
            "natural parameters do not match the spec");
    Vector p1 = th1;
    Vector p2 = th2;
    for (double z : zs) {
        const Vector t = spec.T(z);
        for (std::size_t i = 0; i < p1.size(); ++i) {
            p1[i] += t[i];
        }
    }
    const auto b = static_cast<double>(zs.size());
    for (std::size_t i = 0; i < p2.size(); ++i) {
        p2[i] += b * spec.theta3[i];
    }
    return {p1, p2};
}

double spec_marginal_log_pmf(const ExpFamSpec& spec, const Vector& th1, const Vector& th2,
                             const Vector& zs)
{
    const auto [p1, p2] = spec_posterior(spec, th1, th2, zs);
    double acc = spec.log_H(th1, th2) - spec.log_H(p1, p2);
    for (double z : zs) {
        acc += spec.log_h(z);
    }
    return acc;
}

//---------------------------------------------------------------------------//
// Rule metadata
//---------------------------------------------------------------------------//

std::string rule_name(const FissionRule& rule)
{
    static constexpr const char* names[] = {
        "gauss_p1",     "gauss_p2_cp",    "gauss_p2_general", "poisson_p1",   "poisson_p2",
        "bernoulli_p2", "binomial_p2",    "negbinomial_p2",   "gamma_cp",     "exponential_cp",
        "beta_cp",      "dirichlet_cp",   "categorical_p2",   "conjugate_reversal"};
    return names[rule.index()];
}

void validate(const FissionRule& rule)
{
    std::visit(
        Overloaded{
            [](const GaussP1& r) {
                tuning(r.tau > 0.0 && std::isfinite(r.tau), "tau must be positive");
                tuning(r.sigma.is_square() && !r.sigma.empty(), "sigma must be square");
            },
            [](const GaussP2CP& r) {
                tuning(r.tau > 0.0 && std::isfinite(r.tau), "tau must be positive");
                tuning(r.sigma.is_square() && !r.sigma.empty(), "sigma must be square");
            },
            [](const GaussP2General& r) {
                tuning(r.sigma.is_square() && r.sigma0.is_square(), "covariances must be square");
                const std::size_t d = std::max(r.sigma.rows(), r.sigma0.rows());
                const Matrix s1 = num::add(expand_cov(r.sigma, d), expand_cov(r.sigma0, d));
                try {
                    num::cholesky(s1);
                    num::cholesky(expand_cov(r.sigma0, d));
                } catch (const Error&) {
                    fail(Errc::InvalidTuning, "sigma + sigma0 and sigma0 must be positive definite");
                }
            },
            [](const PoissonP1& r) { tuning(open_unit(r.p), "p must lie in (0, 1)"); },
            [](const PoissonP2& r) { tuning(r.p > 0.0 && std::isfinite(r.p), "p must be > 0"); },
            [](const BernoulliP2& r) { tuning(open_unit(r.p), "p must lie in (0, 1)"); },
            [](const BinomialP2& r) {
                tuning(open_unit(r.p), "p must lie in (0, 1)");
                tuning(r.n >= 0, "n must be nonnegative");
            },
            [](const NegBinomialP2& r) {
                tuning(open_unit(r.p), "p must lie in (0, 1)");
                tuning(r.r > 0.0, "r must be positive");
            },
            [](const GammaCP& r) {
                tuning(r.B >= 1, "B must be >= 1");
                tuning(r.tau > 0.0 && std::isfinite(r.tau), "tau must be positive");
            },
            [](const ExponentialCP& r) {
                tuning(r.B >= 1, "B must be >= 1");
                tuning(r.tau > 0.0 && std::isfinite(r.tau), "tau must be positive");
            },
            [](const BetaCP& r) { tuning(r.B >= 1, "B must be >= 1"); },
            [](const DirichletCP& r) { tuning(r.B >= 1, "B must be >= 1"); },
            [](const CategoricalP2& r) {
                tuning(open_unit(r.p), "p must lie in (0, 1)");
                tuning(r.d >= 2, "need at least two categories");
                if (!r.weights.empty()) {
                    tuning(r.weights.size() == static_cast<std::size_t>(r.d),
                           "weights must have d entries");
                    double s = 0.0;
                    for (double w : r.weights) {
                        tuning(w >= 0.0, "weights must be nonnegative");
                        s += w;
                    }
                    tuning(std::abs(s - 1.0) < 1e-9, "weights must sum to 1");
                }
            },
            [](const ConjugateReversal& r) {
                tuning(r.B >= 1, "B must be >= 1");
                require(r.spec != nullptr, Errc::InvalidSpec, "conjugate rule has no spec");
                validate(*r.spec);
            },
        },
        rule);
}

//---------------------------------------------------------------------------//
// Fission and reconstruction
//---------------------------------------------------------------------------//

FissionOutput conjugate_reversal(const ExpFamSpec& spec, std::int64_t B, const Vector& x,
                                 RngStream& rng)
{
    validate(spec);
    tuning(B >= 1, "B must be >= 1");
    spec.S(x);  // support check
    FissionOutput out;
    out.f.resize(static_cast<std::size_t>(B));
    for (double& z : out.f) {
        z = spec.draw_z(x, rng);
    }
    out.z = out.f;
    out.g = x;
    out.rule = ConjugateReversal{std::make_shared<const ExpFamSpec>(spec), B};
    return out;
}

FissionOutput fission(double x, const FissionRule& rule, RngStream& rng)
{
    return fission(Vector{x}, rule, rng);
}

FissionOutput fission(const Vector& x, const FissionRule& rule, RngStream& rng)
{
    validate(rule);
    in_support(!x.empty(), "observation is empty");
    FissionOutput out;
    out.rule = rule;
    std::visit(
        Overloaded{
            [&](const GaussP1& r) {
                for (double v : x) {
                    in_support(std::isfinite(v), "gaussian observation must be finite");
                }
                const Vector z = gaussian_noise(r.sigma, x.size(), rng);
                out.z = z;
                out.f = num::axpy(r.tau, z, x);
                out.g = num::axpy(-1.0 / r.tau, z, x);
            },
            [&](const GaussP2CP& r) {
                for (double v : x) {
                    in_support(std::isfinite(v), "gaussian observation must be finite");
                }
                out.f = num::axpy(1.0, gaussian_noise(num::scale(r.sigma, r.tau), x.size(), rng), x);
                out.z = out.f;
                out.g = x;
            },
            [&](const GaussP2General& r) {
                for (double v : x) {
                    in_support(std::isfinite(v), "gaussian observation must be finite");
                }
                const Vector z = gaussian_noise(r.sigma0, x.size(), rng);
                out.z = z;
                out.f = num::axpy(-1.0, z, x);
                out.g = num::axpy(1.0, z, x);
            },
            [&](const PoissonP1& r) {
                const double v = scalar(x, "poisson observation is scalar");
                in_support(is_count(v), "poisson observation must be a count");
                const double z = draw(dist::Binomial{static_cast<std::int64_t>(v), r.p}, rng);
                out.z = {z};
                out.f = {z};
                out.g = {v - z};
            },
            [&](const PoissonP2& r) {
                const double v = scalar(x, "poisson observation is scalar");
                in_support(is_count(v), "poisson observation must be a count");
                const double z = draw(dist::Poisson{r.p}, rng);
                out.z = {z};
                out.f = {v + z};
                out.g = {v};
            },
            [&](const BernoulliP2& r) {
                const double v = scalar(x, "bernoulli observation is scalar");
                in_support(v == 0.0 || v == 1.0, "bernoulli observation must be 0 or 1");
                const double z = draw(dist::Bernoulli{r.p}, rng);
                out.z = {z};
                out.f = {v * (1.0 - z) + (1.0 - v) * z};
                out.g = {v};
            },
            [&](const BinomialP2& r) {
                const double v = scalar(x, "binomial observation is scalar");
                in_support(is_count(v) && v <= static_cast<double>(r.n),
                           "binomial observation must lie in 0..n");
                const double z = draw(dist::Binomial{static_cast<std::int64_t>(v), r.p}, rng);
                out.z = {z};
                out.f = {z};
                out.g = {v - z};
            },
            [&](const NegBinomialP2& r) {
                const double v = scalar(x, "negative binomial observation is scalar");
                in_support(is_count(v), "negative binomial observation must be a count");
                const double z = draw(dist::Binomial{static_cast<std::int64_t>(v), r.p}, rng);
                out.z = {z};
                out.f = {z};
                out.g = {v - z};
            },
            [&](const GammaCP& r) {
                const double v = scalar(x, "gamma observation is scalar");
                in_support(v > 0.0 && std::isfinite(v), "gamma observation must be positive");
                out.f.resize(static_cast<std::size_t>(r.B));
                for (double& z : out.f) {
                    z = draw(dist::Poisson{r.tau * v}, rng);
                }
                out.z = out.f;
                out.g = {v};
            },
            [&](const ExponentialCP& r) {
                const double v = scalar(x, "exponential observation is scalar");
                in_support(v > 0.0 && std::isfinite(v), "exponential observation must be positive");
                out.f.resize(static_cast<std::size_t>(r.B));
                for (double& z : out.f) {
                    z = draw(dist::Poisson{r.tau * v}, rng);
                }
                out.z = out.f;
                out.g = {v};
            },
            [&](const BetaCP& r) {
                const double v = scalar(x, "beta observation is scalar");
                in_support(v > 0.0 && v < 1.0, "beta observation must lie in (0, 1)");
                const double success = r.side == BetaSide::ThetaOne ? v : 1.0 - v;
                const double z = draw(dist::Binomial{r.B, success}, rng);
                out.z = {z};
                out.f = {z};
                out.g = {v};
            },
            [&](const DirichletCP& r) {
                double total = 0.0;
                for (double v : x) {
                    in_support(v >= 0.0 && v <= 1.0, "dirichlet observation must be in the simplex");
                    total += v;
                }
                in_support(x.size() >= 2 && std::abs(total - 1.0) < 1e-9,
                           "dirichlet observation must sum to 1");
                Vector probs = x;
                for (double& p : probs) {
                    p /= total;
                }
                out.f = dist::sample(dist::Multinomial{r.B, probs}, rng);
                out.z = out.f;
                out.g = x;
            },
            [&](const CategoricalP2& r) {
                const double v = scalar(x, "categorical observation is scalar");
                in_support(is_count(v) && v < static_cast<double>(r.d),
                           "categorical observation must lie in 0..d-1");
                const double z = draw(dist::Bernoulli{r.p}, rng);
                const double dnoise = draw(dist::Categorical{categorical_weights(r)}, rng);
                out.z = {z, dnoise};
                out.f = {z == 1.0 ? dnoise : v};
                out.g = {v};
            },
            [&](const ConjugateReversal& r) {
                out = conjugate_reversal(*r.spec, r.B, x, rng);
                out.rule = rule;
            },
        },
        rule);
    return out;
}

Vector reconstruct(const Vector& f, const Vector& g, const FissionRule& rule)
{
    validate(rule);
    auto consistent = [](bool cond) {
        require(cond, Errc::InconsistentParts, "parts fall outside the joint support");
    };
    auto scalar_parts = [&] {
        consistent(f.size() == 1 && g.size() == 1);
        return std::pair{f[0], g[0]};
    };
    return std::visit(
        Overloaded{
            [&](const GaussP1& r) {
                consistent(f.size() == g.size());
                const double t2 = r.tau * r.tau;
                Vector x(f.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    x[i] = (f[i] + t2 * g[i]) / (1.0 + t2);
                }
                return x;
            },
            [&](const GaussP2CP&) {
                consistent(f.size() == g.size());
                return g;
            },
            [&](const GaussP2General&) {
                consistent(f.size() == g.size());
                Vector x(f.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    x[i] = 0.5 * (f[i] + g[i]);
                }
                return x;
            },
            [&](const PoissonP1&) {
                const auto [a, b] = scalar_parts();
                consistent(is_count(a) && is_count(b));
                return Vector{a + b};
            },
            [&](const PoissonP2&) {
                const auto [a, b] = scalar_parts();
                consistent(is_count(a) && is_count(b) && a >= b);
                return Vector{b};
            },
            [&](const BernoulliP2&) {
                const auto [a, b] = scalar_parts();
                consistent((a == 0.0 || a == 1.0) && (b == 0.0 || b == 1.0));
                return Vector{b};
            },
            [&](const BinomialP2& r) {
                const auto [a, b] = scalar_parts();
                consistent(is_count(a) && is_count(b) && a + b <= static_cast<double>(r.n));
                return Vector{a + b};
            },
            [&](const NegBinomialP2&) {
                const auto [a, b] = scalar_parts();
                consistent(is_count(a) && is_count(b));
                return Vector{a + b};
            },
            [&](const GammaCP& r) {
                consistent(f.size() == static_cast<std::size_t>(r.B) && g.size() == 1);
                for (double z : f) {
                    consistent(is_count(z));
                }
                consistent(g[0] > 0.0);
                return g;
            },
            [&](const ExponentialCP& r) {
                consistent(f.size() == static_cast<std::size_t>(r.B) && g.size() == 1);
                for (double z : f) {
                    consistent(is_count(z));
                }
                consistent(g[0] > 0.0);
                return g;
            },
            [&](const BetaCP& r) {
                const auto [a, b] = scalar_parts();
                consistent(is_count(a) && a <= static_cast<double>(r.B) && b > 0.0 && b < 1.0);
                return Vector{b};
            },
            [&](const DirichletCP& r) {
                consistent(f.size() == g.size() && g.size() >= 2);
                double n = 0.0;
                for (double z : f) {
                    consistent(is_count(z));
                    n += z;
                }
                consistent(n == static_cast<double>(r.B));
                return g;
            },
            [&](const CategoricalP2& r) {
                const auto [a, b] = scalar_parts();
                const auto d = static_cast<double>(r.d);
                consistent(is_count(a) && a < d && is_count(b) && b < d);
                return Vector{b};
            },
            [&](const ConjugateReversal& r) {
                consistent(f.size() == static_cast<std::size_t>(r.B));
                return g;
            },
        },
        rule);
}

//---------------------------------------------------------------------------//
// Laws
//---------------------------------------------------------------------------//

namespace {

double theta1(const Vector& theta)
{
    require(theta.size() == 1, Errc::InvalidParameters, "rule expects a scalar parameter");
    return theta[0];
}

std::pair<Vector, Vector> split_theta(const ExpFamSpec& spec, const Vector& theta)
{
    require(theta.size() == spec.dim1 + spec.dim2, Errc::InvalidParameters,
            "theta must hold theta1 followed by theta2");
    const auto mid = theta.begin() + static_cast<std::ptrdiff_t>(spec.dim1);
    return {Vector(theta.begin(), mid), Vector(mid, theta.end())};
}

Vector categorical_marginal(const CategoricalP2& r, const Vector& theta)
{
    require(theta.size() == static_cast<std::size_t>(r.d), Errc::InvalidParameters,
            "categorical theta must have d entries");
    const Vector w = categorical_weights(r);
    Vector phi(theta.size());
    for (std::size_t t = 0; t < phi.size(); ++t) {
        phi[t] = (1.0 - r.p) * theta[t] + r.p * w[t];
    }
    return phi;
}

/// log of the joint pmf of B Poisson(τx) draws after integrating x over Gamma(α, β).
double gamma_mixture_joint(double alpha, double beta, double tau, const Vector& zs)
{
    double total = 0.0;
    double acc = 0.0;
    for (double z : zs) {
        in_support(is_count(z), "draws must be counts");
        total += z;
        acc += z * std::log(tau) - num::log_gamma(z + 1.0);
    }
    const double b = static_cast<double>(zs.size());
    return acc + alpha * std::log(beta) - num::log_gamma(alpha) + num::log_gamma(alpha + total)
           - (alpha + total) * std::log(beta + b * tau);
}

}  // namespace

Dist marginal_of_f(const FissionRule& rule, const Vector& theta)
{
    validate(rule);
    return std::visit(
        Overloaded{
            [&](const GaussP1& r) {
                const Matrix cov = expand_cov(r.sigma, theta.size());
                return gaussian_law(theta, num::scale(cov, 1.0 + r.tau * r.tau));
            },
            [&](const GaussP2CP& r) {
                const Matrix cov = expand_cov(r.sigma, theta.size());
                return gaussian_law(theta, num::scale(cov, 1.0 + r.tau));
            },
            [&](const GaussP2General& r) {
                const std::size_t d = theta.size();
                return gaussian_law(theta, num::add(expand_cov(r.sigma, d), expand_cov(r.sigma0, d)));
            },
            [&](const PoissonP1& r) -> Dist { return dist::Poisson{r.p * theta1(theta)}; },
            [&](const PoissonP2& r) -> Dist { return dist::Poisson{theta1(theta) + r.p}; },
            [&](const BernoulliP2& r) -> Dist {
                const double t = theta1(theta);
                return dist::Bernoulli{t + r.p - 2.0 * r.p * t};
            },
            [&](const BinomialP2& r) -> Dist { return dist::Binomial{r.n, r.p * theta1(theta)}; },
            [&](const NegBinomialP2& r) -> Dist {
                const double t = theta1(theta);
                return dist::NegBinomial{r.r, t / (t + r.p - r.p * t)};
            },
            [&](const GammaCP& r) -> Dist {
                require(theta.size() == 2, Errc::InvalidParameters, "gamma theta is (alpha, beta)");
                return dist::NegBinomial{theta[0], theta[1] / (theta[1] + r.tau)};
            },
            [&](const ExponentialCP& r) -> Dist {
                const double t = theta1(theta);
                return dist::Geometric{t / (t + r.tau)};
            },
            [&](const BetaCP& r) -> Dist { return dist::BetaBinomial{r.B, theta1(theta), 1.0}; },
            [&](const DirichletCP& r) -> Dist { return dist::DirichletMultinomial{r.B, theta}; },
            [&](const CategoricalP2& r) -> Dist {
                return dist::Categorical{categorical_marginal(r, theta)};
            },
            [&](const ConjugateReversal&) -> Dist {
                fail(Errc::UnsupportedRule,
                     "generic conjugate marginal has no closed family; use marginal_log_density");
            },
        },
        rule);
}

double marginal_log_density(const FissionRule& rule, const Vector& theta, const Vector& f)
{
    validate(rule);
    if (const auto* g = std::get_if<GammaCP>(&rule)) {
        require(theta.size() == 2, Errc::InvalidParameters, "gamma theta is (alpha, beta)");
        in_support(f.size() == static_cast<std::size_t>(g->B), "f must hold B draws");
        return gamma_mixture_joint(theta[0], theta[1], g->tau, f);
    }
    if (const auto* e = std::get_if<ExponentialCP>(&rule)) {
        in_support(f.size() == static_cast<std::size_t>(e->B), "f must hold B draws");
        return gamma_mixture_joint(1.0, theta1(theta), e->tau, f);
    }
    if (const auto* c = std::get_if<ConjugateReversal>(&rule)) {
        in_support(f.size() == static_cast<std::size_t>(c->B), "f must hold B draws");
        const auto [th1, th2] = split_theta(*c->spec, theta);
        return spec_marginal_log_pmf(*c->spec, th1, th2, f);
    }
    return dist::log_density(marginal_of_f(rule, theta), f);
}

ConditionalFamily::ConditionalFamily(FissionRule rule, Vector f_observed)
    : rule_(std::move(rule)), f_(std::move(f_observed))
{
    validate(rule_);
    in_support(!f_.empty(), "observed f-part is empty");
    std::visit(
        Overloaded{
            [&](const PoissonP2&) { in_support(f_.size() == 1 && is_count(f_[0]), "f must be a count"); },
            [&](const BernoulliP2&) {
                in_support(f_.size() == 1 && (f_[0] == 0.0 || f_[0] == 1.0), "f must be 0 or 1");
            },
            [&](const BinomialP2& r) {
                in_support(f_.size() == 1 && is_count(f_[0]) && f_[0] <= static_cast<double>(r.n),
                           "f must lie in 0..n");
            },
            [&](const NegBinomialP2&) {
                in_support(f_.size() == 1 && is_count(f_[0]), "f must be a count");
            },
            [&](const GammaCP& r) {
                in_support(f_.size() == static_cast<std::size_t>(r.B), "f must hold B draws");
            },
            [&](const ExponentialCP& r) {
                in_support(f_.size() == static_cast<std::size_t>(r.B), "f must hold B draws");
            },
            [&](const BetaCP& r) {
                in_support(f_.size() == 1 && is_count(f_[0]) && f_[0] <= static_cast<double>(r.B),
                           "f must lie in 0..B");
            },
            [&](const CategoricalP2& r) {
                in_support(f_.size() == 1 && is_count(f_[0]) && f_[0] < static_cast<double>(r.d),
                           "f must be a category index");
            },
            [&](const ConjugateReversal& r) {
                in_support(f_.size() == static_cast<std::size_t>(r.B), "f must hold B draws");
            },
            [&](const auto&) {},
        },
        rule_);
}

Dist ConditionalFamily::at(const Vector& theta) const
{
    const Vector& f = f_;
    return std::visit(
        Overloaded{
            [&](const GaussP1& r) {
                const Matrix cov = expand_cov(r.sigma, theta.size());
                return gaussian_law(theta, num::scale(cov, 1.0 + 1.0 / (r.tau * r.tau)));
            },
            [&](const GaussP2CP& r) {
                require(theta.size() == f.size(), Errc::InvalidParameters, "theta/f size mismatch");
                const double w = r.tau / (r.tau + 1.0);
                Vector mean(theta.size());
                for (std::size_t i = 0; i < mean.size(); ++i) {
                    mean[i] = w * (theta[i] + f[i] / r.tau);
                }
                return gaussian_law(mean, num::scale(expand_cov(r.sigma, theta.size()), w));
            },
            [&](const GaussP2General& r) {
                const std::size_t d = theta.size();
                require(f.size() == d, Errc::InvalidParameters, "theta/f size mismatch");
                const Matrix s = expand_cov(r.sigma, d);
                const Matrix s0 = expand_cov(r.sigma0, d);
                const Matrix s1 = num::add(s, s0);
                const Matrix s2 = num::subtract(s, s0);
                const Matrix k = num::multiply(s2, num::spd_inverse(s1));
                const Vector shift = num::multiply(k, num::axpy(-1.0, theta, f));
                Matrix cov = num::subtract(s1, num::multiply(k, s2));
                cov = num::symmetrize(cov, 1e-8);
                return gaussian_law(num::axpy(1.0, shift, theta), cov);
            },
            [&](const PoissonP1& r) -> Dist { return dist::Poisson{(1.0 - r.p) * theta1(theta)}; },
            [&](const PoissonP2& r) -> Dist {
                const double mu = theta1(theta);
                return dist::Binomial{static_cast<std::int64_t>(f[0]), mu / (mu + r.p)};
            },
            [&](const BernoulliP2& r) -> Dist {
                const double t = theta1(theta);
                const double odds = std::pow(r.p / (1.0 - r.p), 2.0 * f[0] - 1.0);
                return dist::Bernoulli{t / (t + (1.0 - t) * odds)};
            },
            [&](const BinomialP2& r) -> Dist {
                const double t = theta1(theta);
                return dist::Binomial{r.n - static_cast<std::int64_t>(f[0]),
                                      (1.0 - r.p) * t / (1.0 - r.p * t)};
            },
            [&](const NegBinomialP2& r) -> Dist {
                const double t = theta1(theta);
                return dist::NegBinomial{r.r + f[0], t + r.p - r.p * t};
            },
            [&](const GammaCP& r) -> Dist {
                require(theta.size() == 2, Errc::InvalidParameters, "gamma theta is (alpha, beta)");
                const double total = std::accumulate(f.begin(), f.end(), 0.0);
                return dist::Gamma{theta[0] + total,
                                   theta[1] + static_cast<double>(r.B) * r.tau};
            },
            [&](const ExponentialCP& r) -> Dist {
                const double total = std::accumulate(f.begin(), f.end(), 0.0);
                return dist::Gamma{1.0 + total,
                                   theta1(theta) + static_cast<double>(r.B) * r.tau};
            },
            [&](const BetaCP& r) -> Dist {
                const double t = theta1(theta);
                const double z = f[0];
                const double rest = static_cast<double>(r.B) - z + 1.0;
                if (r.side == BetaSide::ThetaOne) {
                    return dist::Beta{t + z, rest};
                }
                return dist::Beta{rest, t + z};
            },
            [&](const DirichletCP&) -> Dist {
                require(theta.size() == f.size(), Errc::InvalidParameters, "alpha/f size mismatch");
                return dist::Dirichlet{num::axpy(1.0, f, theta)};
            },
            [&](const CategoricalP2& r) -> Dist {
                const Vector phi = categorical_marginal(r, theta);
                const Vector w = categorical_weights(r);
                const auto t = static_cast<std::size_t>(f[0]);
                Vector post(theta.size());
                for (std::size_t s = 0; s < post.size(); ++s) {
                    const double lik = s == t ? 1.0 - r.p + r.p * w[s] : r.p * w[t];
                    post[s] = theta[s] * lik / phi[t];
                }
                return dist::Categorical{post};
            },
            [&](const ConjugateReversal& r) -> Dist {
                const auto [th1, th2] = split_theta(*r.spec, theta);
                const auto [p1, p2] = spec_posterior(*r.spec, th1, th2, f);
                return r.spec->law(p1, p2);
            },
        },
        rule_);
}

double ConditionalFamily::log_density(const Vector& theta, const Vector& g) const
{
    return dist::log_density(at(theta), g);
}

ConditionalFamily conditional_of_g(const FissionRule& rule, const Vector& f_observed)
{
    return ConditionalFamily(rule, f_observed);
}

//---------------------------------------------------------------------------//
// Records
//---------------------------------------------------------------------------//

Record to_record(const FissionRule& rule)
{
    validate(rule);
    Record rec{{"tag", rule_name(rule)}};
    std::visit(
        Overloaded{
            [&](const GaussP1& r) {
                rec["tau"] = fmt(r.tau);
                rec["sigma2"] = fmt(scalar_cov(r.sigma, "record needs scalar sigma"));
            },
            [&](const GaussP2CP& r) {
                rec["tau"] = fmt(r.tau);
                rec["sigma2"] = fmt(scalar_cov(r.sigma, "record needs scalar sigma"));
            },
            [&](const GaussP2General& r) {
                rec["sigma2"] = fmt(scalar_cov(r.sigma, "record needs scalar sigma"));
                rec["sigma0_2"] = fmt(scalar_cov(r.sigma0, "record needs scalar sigma0"));
            },
            [&](const PoissonP1& r) { rec["p"] = fmt(r.p); },
            [&](const PoissonP2& r) { rec["p"] = fmt(r.p); },
            [&](const BernoulliP2& r) { rec["p"] = fmt(r.p); },
            [&](const BinomialP2& r) {
                rec["p"] = fmt(r.p);
                rec["n"] = std::to_string(r.n);
            },
            [&](const NegBinomialP2& r) {
                rec["p"] = fmt(r.p);
                rec["r"] = fmt(r.r);
            },
            [&](const GammaCP& r) {
                rec["B"] = std::to_string(r.B);
                rec["tau"] = fmt(r.tau);
            },
            [&](const ExponentialCP& r) {
                rec["B"] = std::to_string(r.B);
                rec["tau"] = fmt(r.tau);
            },
            [&](const BetaCP& r) {
                rec["B"] = std::to_string(r.B);
                rec["side"] = r.side == BetaSide::ThetaOne ? "theta_one" : "one_theta";
            },
            [&](const DirichletCP& r) { rec["B"] = std::to_string(r.B); },
            [&](const CategoricalP2& r) {
                rec["p"] = fmt(r.p);
                rec["d"] = std::to_string(r.d);
                if (!r.weights.empty()) {
                    std::string w;
                    for (std::size_t i = 0; i < r.weights.size(); ++i) {
                        w += (i ? "," : "") + fmt(r.weights[i]);
                    }
                    rec["weights"] = w;
                }
            },
            [&](const ConjugateReversal& r) {
                const std::string& name = r.spec->name;
                require(name == "gamma" || name == "exponential" || name == "beta_theta_one"
                            || name == "beta_one_theta" || name == "dirichlet",
                        Errc::InvalidSpec, "only built-in specs can be serialized");
                rec["spec"] = name;
                rec["B"] = std::to_string(r.B);
                rec["tau"] = fmt(r.spec->tau);
                rec["d"] = std::to_string(r.spec->dim1);
            },
        },
        rule);
    return rec;
}

FissionRule from_record(const Record& rec)
{
    const auto it = rec.find("tag");
    if (it == rec.end()) {
        fail(Errc::ConfigError, "record has no 'tag' field");
    }
    const std::string& tag = it->second;
    FissionRule rule;
    if (tag == "gauss_p1") {
        rule = GaussP1{parse_num(rec, "tau", 1.0), Matrix{{parse_num(rec, "sigma2", 1.0)}}};
    } else if (tag == "gauss_p2_cp") {
        rule = GaussP2CP{parse_num(rec, "tau", 1.0), Matrix{{parse_num(rec, "sigma2", 1.0)}}};
    } else if (tag == "gauss_p2_general") {
        rule = GaussP2General{Matrix{{parse_num(rec, "sigma2", 1.0)}},
                              Matrix{{parse_num(rec, "sigma0_2", 1.0)}}};
    } else if (tag == "poisson_p1") {
        rule = PoissonP1{parse_num(rec, "p", 0.5)};
    } else if (tag == "poisson_p2") {
        rule = PoissonP2{parse_num(rec, "p", 0.5)};
    } else if (tag == "bernoulli_p2") {
        rule = BernoulliP2{parse_num(rec, "p", 0.25)};
    } else if (tag == "binomial_p2") {
        rule = BinomialP2{parse_num(rec, "p", 0.5), parse_int(rec, "n", 1)};
    } else if (tag == "negbinomial_p2") {
        rule = NegBinomialP2{parse_num(rec, "p", 0.5), parse_num(rec, "r", 1.0)};
    } else if (tag == "gamma_cp") {
        rule = GammaCP{parse_int(rec, "B", 1), parse_num(rec, "tau", 1.0)};
    } else if (tag == "exponential_cp") {
        rule = ExponentialCP{parse_int(rec, "B", 1), parse_num(rec, "tau", 1.0)};
    } else if (tag == "beta_cp") {
        const auto s = rec.find("side");
        BetaSide side = BetaSide::ThetaOne;
        if (s != rec.end()) {
            if (s->second == "one_theta") {
                side = BetaSide::OneTheta;
            } else if (s->second != "theta_one") {
                fail(Errc::ConfigError, "field 'side' must be theta_one or one_theta");
            }
        }
        rule = BetaCP{parse_int(rec, "B", 1), side};
    } else if (tag == "dirichlet_cp") {
        rule = DirichletCP{parse_int(rec, "B", 1)};
    } else if (tag == "categorical_p2") {
        CategoricalP2 r{parse_num(rec, "p", 0.5), parse_int(rec, "d", 2), {}};
        if (const auto w = rec.find("weights"); w != rec.end()) {
            std::stringstream ss(w->second);
            std::string item;
            while (std::getline(ss, item, ',')) {
                r.weights.push_back(parse_num({{"w", item}}, "w", 0.0));
            }
        }
        rule = r;
    } else if (tag == "conjugate_reversal") {
        const auto s = rec.find("spec");
        if (s == rec.end()) {
            fail(Errc::ConfigError, "conjugate record needs a 'spec' field");
        }
        const double tau = parse_num(rec, "tau", 1.0);
        ExpFamSpec spec;
        if (s->second == "gamma") {
            spec = gamma_spec(tau);
        } else if (s->second == "exponential") {
            spec = exponential_spec(tau);
        } else if (s->second == "beta_theta_one") {
            spec = beta_spec(BetaSide::ThetaOne);
        } else if (s->second == "beta_one_theta") {
            spec = beta_spec(BetaSide::OneTheta);
        } else if (s->second == "dirichlet") {
            spec = dirichlet_spec(static_cast<std::size_t>(parse_int(rec, "d", 2)));
        } else {
            fail(Errc::ConfigError, "unknown conjugate spec '" + s->second + "'");
        }
        rule = ConjugateReversal{std::make_shared<const ExpFamSpec>(std::move(spec)),
                                 parse_int(rec, "B", 1)};
    } else {
        fail(Errc::ConfigError, "unknown fission rule tag '" + tag + "'");
    }
    validate(rule);
    return rule;
}

}  // namespace fiss::rules
