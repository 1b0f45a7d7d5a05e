#include "fiss/modelfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fiss/error.hpp"

namespace fiss::fit {

const char* family_name(Family f) noexcept
{
    switch (f) {
        case Family::Gaussian: return "gaussian";
        case Family::Poisson: return "poisson";
        case Family::Binomial: return "binomial";
    }
    return "unknown";
}

namespace {

constexpr int kMaxIrls = 100;
constexpr double kMuFloor = 1e-10;

Vector offset_of(const Design& d)
{
    return d.offset.empty() ? Vector(d.y.size(), 0.0) : d.offset;
}

Vector weights_of(const Design& d)
{
    return d.weights.empty() ? Vector(d.y.size(), 1.0) : d.weights;
}

double clamp_mu(Family f, double mu)
{
    if (f == Family::Binomial) {
        return std::clamp(mu, kMuFloor, 1.0 - kMuFloor);
    }
    if (f == Family::Poisson) {
        return std::max(mu, kMuFloor);
    }
    return mu;
}

/// Cholesky that reports near-singular Gram matrices as SingularDesign.
Matrix gram_cholesky(const Matrix& g)
{
    Matrix l;
    try {
        l = num::cholesky(g);
    } catch (const Error& e) {
        if (e.code() == Errc::NotPositiveDefinite) {
            fail(Errc::SingularDesign, "design Gram matrix is not positive definite");
        }
        throw;
    }
    double max_diag = 0.0;
    double min_pivot = INFINITY;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        max_diag = std::max(max_diag, g(i, i));
        min_pivot = std::min(min_pivot, l(i, i) * l(i, i));
    }
    if (g.rows() > 0 && !(min_pivot > 1e-12 * max_diag)) {
        fail(Errc::SingularDesign, "design is numerically rank deficient");
    }
    return l;
}

Vector wls(const Matrix& x, std::span<const double> w, std::span<const double> z)
{
    const Matrix l = gram_cholesky(num::weighted_gram(x, w));
    Vector wz(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        wz[i] = w[i] * z[i];
    }
    return num::cholesky_solve(l, num::multiply_transposed(x, wz));
}

double soft_threshold(double v, double lambda)
{
    // Absorb rounding at the kink so the path starts exactly at zero.
    if (std::abs(v) <= lambda * (1.0 + 1e-12)) {
        return 0.0;
    }
    if (v > lambda) {
        return v - lambda;
    }
    if (v < -lambda) {
        return v + lambda;
    }
    return 0.0;
}

struct Standardized {
    Matrix xs;
    Matrix xt;  ///< xs transposed, so columns are contiguous
    Vector center;
    Vector scale;
    std::vector<bool> usable;
    Vector w;  ///< prior weights normalized to sum to one
};

Standardized standardize(const Design& d)
{
    const std::size_t n = d.X.rows();
    const std::size_t p = d.X.cols();
    Standardized s{Matrix(n, p), Matrix(), Vector(p, 0.0), Vector(p, 1.0), std::vector<bool>(p, false),
                   weights_of(d)};
    const double wsum = std::accumulate(s.w.begin(), s.w.end(), 0.0);
    require(wsum > 0.0, Errc::DomainError, "weights sum to zero");
    for (double& v : s.w) {
        v /= wsum;
    }
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            m += s.w[i] * d.X(i, j);
        }
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            v += s.w[i] * (d.X(i, j) - m) * (d.X(i, j) - m);
        }
        const double sd = std::sqrt(v);
        s.center[j] = m;
        s.usable[j] = sd > 1e-12 * std::max(1.0, std::abs(m));
        s.scale[j] = s.usable[j] ? sd : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            s.xs(i, j) = s.usable[j] ? (d.X(i, j) - m) / sd : 0.0;
        }
    }
    s.xt = num::transpose(s.xs);
    return s;
}

/// x̃b, touching only the nonzero coefficients.
Vector fitted_part(const Standardized& s, const Vector& b)
{
    Vector out(s.xs.rows(), 0.0);
    for (std::size_t j = 0; j < b.size(); ++j) {
        if (b[j] != 0.0) {
            auto col = s.xt.row(j);
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] += b[j] * col[i];
            }
        }
    }
    return out;
}

/// Lower triangle of Σuᵢx̃ᵢⱼx̃ᵢₖ, filled on demand; NaN marks a missing entry.
using GramCache = std::vector<std::vector<double>>;

/// Minimizes ½Σuᵢ(zᵢ − b₀ − x̃ᵢᵀb)² + λ‖b‖₁ by cyclic coordinate descent with
/// active-set passes, warm-started from (b0, b). `cache` may carry Gram
/// entries between calls that share the same u; `rel_tol` scales the
/// stopping threshold on coordinate moves.
void weighted_cd(const Standardized& s, std::span<const double> u, std::span<const double> z,
                 double lambda, double& b0, Vector& b, GramCache* cache = nullptr,
                 double rel_tol = 1e-8)
{
    const std::size_t n = s.xs.rows();
    const std::size_t p = s.xs.cols();
    Vector xv(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        auto col = s.xt.row(j);
        for (std::size_t i = 0; i < n; ++i) {
            xv[j] += u[i] * col[i] * col[i];
        }
    }
    const double usum = std::accumulate(u.begin(), u.end(), 0.0);
    Vector r = fitted_part(s, b);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = z[i] - b0 - r[i];
    }
    double zscale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        zscale += u[i] * z[i] * z[i];
    }
    const double tol = rel_tol * std::max(1.0, std::sqrt(zscale / std::max(usum, 1e-300)));

    auto update_intercept = [&] {
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g += u[i] * r[i];
        }
        const double delta = g / usum;
        if (delta != 0.0) {
            b0 += delta;
            for (double& ri : r) {
                ri -= delta;
            }
        }
        return std::abs(delta) * std::sqrt(usum);
    };
    auto update = [&](std::size_t j) {
        if (!s.usable[j] || xv[j] <= 0.0) {
            b[j] = 0.0;
            return 0.0;
        }
        auto col = s.xt.row(j);
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g += u[i] * col[i] * r[i];
        }
        const double next = soft_threshold(g + xv[j] * b[j], lambda) / xv[j];
        const double delta = next - b[j];
        if (delta != 0.0) {
            b[j] = next;
            for (std::size_t i = 0; i < n; ++i) {
                r[i] -= delta * col[i];
            }
        }
        return std::abs(delta) * std::sqrt(xv[j]);
    };

    // Weighted inner products for the active-set solve, filled on demand.
    Vector ux(p, 0.0);
    Vector xz(p, std::numeric_limits<double>::quiet_NaN());
    double uz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        uz += u[i] * z[i];
    }
    for (std::size_t j = 0; j < p; ++j) {
        auto col = s.xt.row(j);
        for (std::size_t i = 0; i < n; ++i) {
            ux[j] += u[i] * col[i];
        }
    }
    auto cross = [&](std::size_t j) {
        if (std::isnan(xz[j])) {
            auto col = s.xt.row(j);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                v += u[i] * col[i] * z[i];
            }
            xz[j] = v;
        }
        return xz[j];
    };
    GramCache local;
    GramCache& gram_cache = cache ? *cache : local;
    gram_cache.resize(p);
    auto known = [&](std::size_t j, std::size_t k) {
        if (j < k) {
            std::swap(j, k);
        }
        return !gram_cache[j].empty() && !std::isnan(gram_cache[j][k]);
    };
    auto gram = [&](std::size_t j, std::size_t k) {
        if (j < k) {
            std::swap(j, k);
        }
        auto& row = gram_cache[j];
        if (row.empty()) {
            row.assign(j + 1, std::numeric_limits<double>::quiet_NaN());
        }
        if (std::isnan(row[k])) {
            auto cj = s.xt.row(j);
            auto ck = s.xt.row(k);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                v += u[i] * cj[i] * ck[i];
            }
            row[k] = v;
        }
        return row[k];
    };

    // Exact solve on the active set with its signs held fixed; kept only if
    // the signs survive.
    auto solve_active = [&] {
        std::vector<std::size_t> act;
        for (std::size_t j = 0; j < p; ++j) {
            if (b[j] != 0.0) {
                act.push_back(j);
            }
        }
        const std::size_t m = act.size() + 1;
        if (m > n) {
            return false;
        }
        // Skip when the missing Gram entries cost more than about 20 sweeps.
        std::size_t missing = 0;
        for (std::size_t a = 0; a < act.size(); ++a) {
            for (std::size_t c = 0; c <= a; ++c) {
                missing += known(act[a], act[c]) ? 0 : 1;
            }
        }
        if (missing > 20 * p) {
            return false;
        }
        Matrix g(m, m);
        Vector rhs(m, 0.0);
        for (std::size_t a = 0; a < m; ++a) {
            rhs[a] = a == 0 ? uz : cross(act[a - 1]);
            g(a, 0) = a == 0 ? usum : ux[act[a - 1]];
            for (std::size_t c = 1; c <= a; ++c) {
                g(a, c) = gram(act[a - 1], act[c - 1]);
            }
        }
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t c = 0; c < a; ++c) {
                g(c, a) = g(a, c);
            }
            if (a > 0) {
                rhs[a] -= lambda * (b[act[a - 1]] > 0.0 ? 1.0 : -1.0);
            }
        }
        Vector sol;
        try {
            sol = num::cholesky_solve(gram_cholesky(g), rhs);
        } catch (const Error&) {
            return false;
        }
        for (std::size_t a = 1; a < m; ++a) {
            if (!(sol[a] * b[act[a - 1]] > 0.0)) {
                return false;
            }
        }
        b0 = sol[0];
        for (std::size_t a = 1; a < m; ++a) {
            b[act[a - 1]] = sol[a];
        }
        r = fitted_part(s, b);
        for (std::size_t i = 0; i < n; ++i) {
            r[i] = z[i] - b0 - r[i];
        }
        return true;
    };

    auto sign_of = [](double v) { return static_cast<signed char>((v > 0.0) - (v < 0.0)); };
    std::vector<signed char> signs(p);
    for (int pass = 0; pass < 100000; ++pass) {
        bool stable = true;
        for (std::size_t j = 0; j < p; ++j) {
            signs[j] = sign_of(b[j]);
        }
        double change = update_intercept();
        for (std::size_t j = 0; j < p; ++j) {
            change = std::max(change, update(j));
            stable = stable && sign_of(b[j]) == signs[j];
        }
        if (change < tol) {
            return;
        }
        // Without a shared cache the exact solve only pays off once the sweep
        // leaves the signs alone.
        if ((cache || stable) && solve_active()) {
            continue;
        }
        // Iterate on the active set until it settles, then sweep all again.
        for (int inner = 0; inner < 100000; ++inner) {
            double c = update_intercept();
            for (std::size_t j = 0; j < p; ++j) {
                if (b[j] != 0.0) {
                    c = std::max(c, update(j));
                }
            }
            if (c < tol) {
                break;
            }
        }
    }
    fail(Errc::NoConvergence, "coordinate descent did not converge");
}

struct PathPoint {
    double b0;
    Vector b;  ///< standardized scale
    Vector mu;
    double dev;
};

Vector linear_predictor(const Standardized& s, std::span<const double> offset, double b0,
                        const Vector& b)
{
    const std::size_t n = s.xs.rows();
    Vector eta = fitted_part(s, b);
    for (std::size_t i = 0; i < n; ++i) {
        eta[i] += offset[i] + b0;
    }
    return eta;
}

Vector means(Family f, const Vector& eta)
{
    Vector mu(eta.size());
    for (std::size_t i = 0; i < eta.size(); ++i) {
        mu[i] = inverse_link(f, eta[i]);
    }
    return mu;
}

double l1(const Vector& b)
{
    double s = 0.0;
    for (double v : b) {
        s += std::abs(v);
    }
    return s;
}

/// One point of the penalized path, warm-started from (b0, b). `gram` is
/// shared along a Gaussian path, whose weights never change.
void solve_point(const Design& d, const Standardized& s, std::span<const double> offset,
                 double lambda, double& b0, Vector& b, GramCache* gram)
{
    const std::size_t n = d.y.size();
    if (d.family == Family::Gaussian) {
        Vector z(n);
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = d.y[i] - offset[i];
        }
        weighted_cd(s, s.w, z, lambda, b0, b, gram);
        return;
    }
    auto objective = [&](double c0, const Vector& c) {
        const Vector mu = means(d.family, linear_predictor(s, offset, c0, c));
        return 0.5 * deviance(d.family, d.y, mu, s.w) + lambda * l1(c);
    };
    double obj = objective(b0, b);
    // Inexact Newton: the inner tolerance tightens with the outer step.
    double inner_tol = 1e-4;
    for (int outer = 0; outer < kMaxIrls; ++outer) {
        const Vector eta = linear_predictor(s, offset, b0, b);
        Vector u(n);
        Vector z(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double mu = clamp_mu(d.family, inverse_link(d.family, eta[i]));
            const double v = variance_fn(d.family, mu);
            u[i] = s.w[i] * v;
            z[i] = eta[i] - offset[i] + (d.y[i] - mu) / v;
        }
        double nb0 = b0;
        Vector nb = b;
        weighted_cd(s, u, z, lambda, nb0, nb, nullptr, inner_tol);
        double nobj = objective(nb0, nb);
        for (int half = 0; half < 40 && !(nobj <= obj + 1e-14 * std::abs(obj)); ++half) {
            nb0 = 0.5 * (nb0 + b0);
            for (std::size_t j = 0; j < nb.size(); ++j) {
                nb[j] = 0.5 * (nb[j] + b[j]);
            }
            nobj = objective(nb0, nb);
        }
        double change = std::abs(nb0 - b0);
        for (std::size_t j = 0; j < nb.size(); ++j) {
            change = std::max(change, std::abs(nb[j] - b[j]));
        }
        const double drop = obj - nobj;
        b0 = nb0;
        b = nb;
        obj = nobj;
        const bool settled = change < 1e-8 || std::abs(drop) <= 1e-12 * std::max(1.0, std::abs(obj));
        if (settled && inner_tol <= 1e-8) {
            return;
        }
        inner_tol = settled ? 1e-8 : std::clamp(1e-2 * change, 1e-8, inner_tol);
    }
    fail(Errc::NoConvergence, "penalized IRLS did not converge");
}

double null_intercept(const Design& d, std::span<const double> offset)
{
    const std::size_t n = d.y.size();
    Design nd{Matrix(n, 1, 1.0), d.y, d.family, Vector(offset.begin(), offset.end()), d.weights};
    if (d.family == Family::Gaussian) {
        return ols(nd).coef[0];
    }
    return glm_irls(nd).coef[0];
}

}  // namespace

void validate(const Design& d)
{
    const std::size_t n = d.y.size();
    require(n > 0, Errc::DimensionMismatch, "empty response");
    require(d.X.rows() == n, Errc::DimensionMismatch, "X rows must equal the response length");
    require(d.offset.empty() || d.offset.size() == n, Errc::DimensionMismatch, "offset length");
    require(d.weights.empty() || d.weights.size() == n, Errc::DimensionMismatch, "weights length");
    require(d.X.all_finite(), Errc::DomainError, "X has non-finite entries");
    for (double w : d.weights) {
        require(w >= 0.0 && std::isfinite(w), Errc::DomainError, "weights must be nonnegative");
    }
    for (double o : d.offset) {
        require(std::isfinite(o), Errc::DomainError, "offset must be finite");
    }
    for (double y : d.y) {
        require(std::isfinite(y), Errc::DomainError, "response must be finite");
        if (d.family == Family::Binomial) {
            require(y == 0.0 || y == 1.0, Errc::DomainError, "binomial responses must be 0 or 1");
        } else if (d.family == Family::Poisson) {
            require(y >= 0.0 && y == std::floor(y), Errc::DomainError,
                    "poisson responses must be nonnegative integers");
        }
    }
}

double inverse_link(Family f, double eta)
{
    switch (f) {
        case Family::Gaussian: return eta;
        case Family::Poisson: return std::exp(eta);
        case Family::Binomial: return 1.0 / (1.0 + std::exp(-eta));
    }
    return eta;
}

double variance_fn(Family f, double mu)
{
    switch (f) {
        case Family::Gaussian: return 1.0;
        case Family::Poisson: return mu;
        case Family::Binomial: return mu * (1.0 - mu);
    }
    return 1.0;
}

double deviance(Family f, std::span<const double> y, std::span<const double> mu,
                std::span<const double> weights)
{
    double dev = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        const double m = clamp_mu(f, mu[i]);
        double unit = 0.0;
        switch (f) {
            case Family::Gaussian: unit = (y[i] - m) * (y[i] - m); break;
            case Family::Poisson:
                unit = 2.0 * ((y[i] > 0.0 ? y[i] * std::log(y[i] / m) : 0.0) - (y[i] - m));
                break;
            case Family::Binomial:
                unit = 2.0 * ((y[i] > 0.0 ? y[i] * std::log(y[i] / m) : 0.0)
                              + (y[i] < 1.0 ? (1.0 - y[i]) * std::log((1.0 - y[i]) / (1.0 - m)) : 0.0));
                break;
        }
        dev += w * unit;
    }
    return dev;
}

FitResult ols(const Design& d)
{
    validate(d);
    require(d.family == Family::Gaussian, Errc::DomainError, "ols needs the gaussian family");
    const Vector off = offset_of(d);
    const Vector w = weights_of(d);
    Vector z(d.y.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = d.y[i] - off[i];
    }
    FitResult r;
    r.coef = wls(d.X, w, z);
    r.eta = num::axpy(1.0, num::multiply(d.X, r.coef), off);
    r.fitted = r.eta;
    r.converged = true;
    r.iterations = 1;
    r.deviance = deviance(Family::Gaussian, d.y, r.fitted, w);
    return r;
}

namespace {

FitResult irls(const Design& d)
{
    const std::size_t n = d.y.size();
    const Vector off = offset_of(d);
    const Vector w = weights_of(d);

    // Start from a smoothed response, as is customary for IRLS.
    Vector mu(n);
    Vector eta(n);
    for (std::size_t i = 0; i < n; ++i) {
        mu[i] = d.family == Family::Poisson ? d.y[i] + 0.1 : (d.y[i] + 0.5) / 2.0;
        eta[i] = d.family == Family::Poisson ? std::log(mu[i]) : std::log(mu[i] / (1.0 - mu[i]));
    }

    FitResult r;
    Vector coef;
    double dev = INFINITY;
    for (int it = 1; it <= kMaxIrls; ++it) {
        Vector u(n);
        Vector z(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = clamp_mu(d.family, mu[i]);
            const double v = variance_fn(d.family, m);
            u[i] = w[i] * v;
            z[i] = eta[i] - off[i] + (d.y[i] - m) / v;
        }
        Vector next = wls(d.X, u, z);
        Vector next_eta = num::axpy(1.0, num::multiply(d.X, next), off);
        double next_dev = deviance(d.family, d.y, means(d.family, next_eta), w);
        for (int half = 0; half < 30 && !coef.empty() && !(next_dev <= dev * (1.0 + 1e-12));
             ++half) {
            for (std::size_t j = 0; j < next.size(); ++j) {
                next[j] = 0.5 * (next[j] + coef[j]);
            }
            next_eta = num::axpy(1.0, num::multiply(d.X, next), off);
            next_dev = deviance(d.family, d.y, means(d.family, next_eta), w);
        }
        if (d.family == Family::Binomial && num::norm_inf(next_eta) > 30.0) {
            fail(Errc::SeparationDetected, "logistic linear predictor exceeded 30 in magnitude");
        }
        double change = INFINITY;
        if (!coef.empty()) {
            change = 0.0;
            for (std::size_t j = 0; j < next.size(); ++j) {
                change = std::max(change, std::abs(next[j] - coef[j]));
            }
        }
        const double scale = 1.0 + num::norm_inf(next);
        const bool settled = std::abs(next_dev - dev) <= 1e-14 * (std::abs(next_dev) + 0.1)
                             || change <= 1e-12 * scale;
        coef = std::move(next);
        eta = std::move(next_eta);
        mu = means(d.family, eta);
        dev = next_dev;
        r.iterations = it;
        if (settled) {
            r.converged = true;
            break;
        }
    }
    if (!r.converged) {
        fail(Errc::NoConvergence, "IRLS did not converge within 100 iterations");
    }
    r.coef = std::move(coef);
    r.eta = std::move(eta);
    r.fitted = std::move(mu);
    r.deviance = dev;
    return r;
}

}  // namespace

FitResult glm_irls(const Design& d)
{
    if (d.family == Family::Gaussian) {
        return ols(d);
    }
    validate(d);
    return irls(d);
}

FitResult kl_projection(const Design& d)
{
    if (d.family == Family::Gaussian) {
        return ols(d);
    }
    Design check = d;
    for (double& y : check.y) {
        y = 0.0;
    }
    validate(check);
    for (double m : d.y) {
        require(std::isfinite(m) && m >= 0.0 && (d.family != Family::Binomial || m <= 1.0),
                Errc::DomainError, "target means outside the family's range");
    }
    return irls(d);
}

Vector glm_score(const Design& d, std::span<const double> coef)
{
    validate(d);
    const Vector off = offset_of(d);
    const Vector w = weights_of(d);
    const Vector eta = num::axpy(1.0, num::multiply(d.X, coef), off);
    Vector resid(d.y.size());
    for (std::size_t i = 0; i < resid.size(); ++i) {
        resid[i] = w[i] * (d.y[i] - inverse_link(d.family, eta[i]));
    }
    return num::multiply_transposed(d.X, resid);
}

double lambda_max(const Design& d)
{
    validate(d);
    const Standardized s = standardize(d);
    const Vector off = offset_of(d);
    const double b0 = null_intercept(d, off);
    double best = 0.0;
    for (std::size_t j = 0; j < d.X.cols(); ++j) {
        double g = 0.0;
        for (std::size_t i = 0; i < d.y.size(); ++i) {
            g += s.w[i] * s.xs(i, j) * (d.y[i] - inverse_link(d.family, off[i] + b0));
        }
        best = std::max(best, std::abs(g));
    }
    return best;
}

Vector lambda_grid(const Design& d, std::size_t n_lambda, double ratio)
{
    require(n_lambda >= 1, Errc::DomainError, "grid needs at least one point");
    require(ratio > 0.0 && ratio < 1.0, Errc::DomainError, "grid ratio must lie in (0, 1)");
    const double top = lambda_max(d);
    if (!(top > 0.0)) {
        return Vector{0.0};
    }
    Vector grid(n_lambda);
    for (std::size_t k = 0; k < n_lambda; ++k) {
        const double t = n_lambda == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n_lambda - 1);
        grid[k] = top * std::pow(ratio, t);
    }
    return grid;
}

LassoResult lasso_path(const Design& d, const Vector& lambdas)
{
    validate(d);
    require(d.y.size() >= 2, Errc::DomainError, "lasso needs at least two observations");
    require(!lambdas.empty(), Errc::DomainError, "empty lambda grid");
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        require(lambdas[k] >= 0.0 && (k == 0 || lambdas[k] <= lambdas[k - 1]), Errc::DomainError,
                "lambda grid must be nonnegative and descending");
    }
    const Standardized s = standardize(d);
    const Vector off = offset_of(d);
    const std::size_t p = d.X.cols();

    double b0 = null_intercept(d, off);
    const double null_dev =
        deviance(d.family, d.y, means(d.family, linear_predictor(s, off, b0, Vector(p, 0.0))), s.w);
    Vector b(p, 0.0);

    std::vector<PathPoint> points;
    GramCache gram;
    LassoResult res;
    double prev_ratio = 0.0;
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        solve_point(d, s, off, lambdas[k], b0, b, &gram);
        const Vector mu = means(d.family, linear_predictor(s, off, b0, b));
        const double dev = deviance(d.family, d.y, mu, s.w);
        const double ratio = null_dev > 0.0 ? 1.0 - dev / null_dev : 0.0;
        points.push_back({b0, b, mu, dev});
        res.lambda.push_back(lambdas[k]);
        res.dev_ratio.push_back(ratio);
        if (ratio >= 0.999) {
            break;
        }
        if (k >= 5 && ratio - prev_ratio < 1e-5 * ratio) {
            break;
        }
        prev_ratio = ratio;
    }

    res.beta = Matrix(points.size(), p);
    res.intercept.resize(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        double c0 = points[k].b0;
        for (std::size_t j = 0; j < p; ++j) {
            const double bj = points[k].b[j] / s.scale[j];
            res.beta(k, j) = bj;
            c0 -= bj * s.center[j];
        }
        res.intercept[k] = c0;
    }
    res.lambda_min = res.lambda_1se = res.lambda.back();
    res.index_min = res.index_1se = res.lambda.size() - 1;
    return res;
}

double max_kkt_violation(const Design& d, const LassoResult& path, std::size_t k)
{
    require(k < path.lambda.size(), Errc::DomainError, "path index out of range");
    const Standardized s = standardize(d);
    const Vector off = offset_of(d);
    const double lambda = path.lambda[k];
    double worst = 0.0;
    Vector resid(d.y.size());
    for (std::size_t i = 0; i < resid.size(); ++i) {
        const double eta = off[i] + path.intercept[k] + num::dot(d.X.row(i), path.beta.row(k));
        resid[i] = d.y[i] - inverse_link(d.family, eta);
    }
    double g0 = 0.0;
    for (std::size_t i = 0; i < resid.size(); ++i) {
        g0 += s.w[i] * resid[i];
    }
    worst = std::abs(g0);
    for (std::size_t j = 0; j < d.X.cols(); ++j) {
        if (!s.usable[j]) {
            continue;
        }
        double g = 0.0;
        for (std::size_t i = 0; i < resid.size(); ++i) {
            g += s.w[i] * s.xs(i, j) * resid[i];
        }
        const double bj = path.beta(k, j);
        const double v = bj == 0.0 ? std::max(0.0, std::abs(g) - lambda)
                                   : std::abs(g - lambda * (bj > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

std::vector<std::size_t> support_at(const LassoResult& path, std::size_t k)
{
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < path.beta.cols(); ++j) {
        if (path.beta(k, j) != 0.0) {
            out.push_back(j);
        }
    }
    return out;
}

LassoResult cv_select(const Design& d, const Vector& lambdas, std::size_t folds,
                      dist::RngStream& rng)
{
    validate(d);
    const std::size_t n = d.y.size();
    require(folds >= 2 && folds <= n, Errc::DomainError, "folds must lie in [2, n]");
    LassoResult full = lasso_path(d, lambdas);
    const std::size_t nl = full.lambda.size();

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(perm[i - 1], perm[j]);
    }
    std::vector<std::size_t> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        fold_of[perm[i]] = i % folds;
    }

    const Vector off = offset_of(d);
    const Vector w = weights_of(d);
    Matrix fold_err(folds, nl);
    Vector fold_weight(folds, 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < n; ++i) {
            (fold_of[i] == f ? test : train).push_back(i);
        }
        Design td{num::select_rows(d.X, train), {}, d.family, {}, {}};
        for (std::size_t i : train) {
            td.y.push_back(d.y[i]);
            td.offset.push_back(off[i]);
            td.weights.push_back(w[i]);
        }
        const LassoResult path = lasso_path(td, full.lambda);
        for (std::size_t k = 0; k < nl; ++k) {
            const std::size_t kk = std::min(k, path.lambda.size() - 1);
            double err = 0.0;
            double wsum = 0.0;
            for (std::size_t i : test) {
                const double eta = off[i] + path.intercept[kk] + num::dot(d.X.row(i), path.beta.row(kk));
                const double mu = inverse_link(d.family, eta);
                const double yi = d.y[i];
                err += w[i] * deviance(d.family, std::span<const double>(&yi, 1),
                                       std::span<const double>(&mu, 1));
                wsum += w[i];
            }
            fold_err(f, k) = err / wsum;
            fold_weight[f] = wsum;
        }
    }

    const double wtot = std::accumulate(fold_weight.begin(), fold_weight.end(), 0.0);
    full.cv_mean.assign(nl, 0.0);
    full.cv_se.assign(nl, 0.0);
    for (std::size_t k = 0; k < nl; ++k) {
        double m = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            m += fold_weight[f] * fold_err(f, k);
        }
        m /= wtot;
        double v = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            v += fold_weight[f] * (fold_err(f, k) - m) * (fold_err(f, k) - m);
        }
        full.cv_mean[k] = m;
        full.cv_se[k] = std::sqrt(v / wtot / static_cast<double>(folds - 1));
    }
    std::size_t kmin = 0;
    for (std::size_t k = 1; k < nl; ++k) {
        if (full.cv_mean[k] < full.cv_mean[kmin]) {
            kmin = k;
        }
    }
    const double bound = full.cv_mean[kmin] + full.cv_se[kmin];
    std::size_t k1se = kmin;
    for (std::size_t k = 0; k <= kmin; ++k) {
        if (full.cv_mean[k] <= bound) {
            k1se = k;
            break;
        }
    }
    full.index_min = kmin;
    full.index_1se = k1se;
    full.lambda_min = full.lambda[kmin];
    full.lambda_1se = full.lambda[k1se];
    full.selected = support_at(full, k1se);
    full.selected_min = support_at(full, kmin);
    return full;
}

}  // namespace fiss::fit
