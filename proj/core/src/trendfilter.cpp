#include "fiss/trendfilter.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "fiss/error.hpp"

namespace fiss::trend {

namespace {

/// Coefficients of one row of D^(q): (−1)^{q−l} C(q, l), l = 0..q.
std::vector<double> diff_coefficients(int q)
{
    std::vector<double> c(static_cast<std::size_t>(q) + 1);
    double binom = 1.0;
    for (int l = 0; l <= q; ++l) {
        c[static_cast<std::size_t>(l)] = ((q - l) % 2 == 0 ? 1.0 : -1.0) * binom;
        binom = binom * (q - l) / (l + 1);
    }
    return c;
}

void check_order(std::size_t n, int k)
{
    require(k >= 0, Errc::DomainError, "order k must be nonnegative");
    if (n < static_cast<std::size_t>(k) + 2) {
        fail(Errc::TooShort, "series needs at least k + 2 points");
    }
}

Vector apply_diff_t(std::span<const double> v, std::size_t n, const std::vector<double>& c)
{
    Vector out(n, 0.0);
    const std::size_t q = c.size() - 1;
    for (std::size_t r = 0; r < v.size(); ++r) {
        for (std::size_t l = 0; l <= q; ++l) {
            out[r + l] += c[l] * v[r];
        }
    }
    return out;
}

/// Symmetric banded matrix stored by rows as band[i][d] = M(i, i − d).
struct Banded {
    std::size_t n = 0;
    std::size_t q = 0;
    std::vector<double> band;

    Banded(std::size_t size, std::size_t width) : n(size), q(width), band(size * (width + 1), 0.0) {}
    double& at(std::size_t i, std::size_t d) { return band[i * (q + 1) + d]; }
    double at(std::size_t i, std::size_t d) const { return band[i * (q + 1) + d]; }
};

/// In-place banded Cholesky; the factor L replaces the lower band.
void banded_cholesky(Banded& m)
{
    for (std::size_t i = 0; i < m.n; ++i) {
        const std::size_t dmax = std::min(i, m.q);
        for (std::size_t d = dmax + 1; d-- > 0;) {
            const std::size_t j = i - d;
            double s = m.at(i, d);
            const std::size_t lo = i >= m.q ? i - m.q : 0;
            for (std::size_t l = lo; l < j; ++l) {
                s -= m.at(i, i - l) * m.at(j, j - l);
            }
            if (d == 0) {
                if (!(s > 0.0)) {
                    fail(Errc::NotPositiveDefinite, "banded system is not positive definite");
                }
                m.at(i, 0) = std::sqrt(s);
            } else {
                m.at(i, d) = s / m.at(j, 0);
            }
        }
    }
}

void banded_solve(const Banded& l, Vector& x)
{
    for (std::size_t i = 0; i < l.n; ++i) {
        double s = x[i];
        const std::size_t lo = i >= l.q ? i - l.q : 0;
        for (std::size_t j = lo; j < i; ++j) {
            s -= l.at(i, i - j) * x[j];
        }
        x[i] = s / l.at(i, 0);
    }
    for (std::size_t i = l.n; i-- > 0;) {
        double s = x[i];
        const std::size_t hi = std::min(l.n - 1, i + l.q);
        for (std::size_t j = i + 1; j <= hi; ++j) {
            s -= l.at(j, j - i) * x[j];
        }
        x[i] = s / l.at(i, 0);
    }
}

/// I·diag_shift + ρDᵀD as a band of width q.
Banded normal_band(std::size_t n, const std::vector<double>& c, double rho, double shift)
{
    const std::size_t q = c.size() - 1;
    const std::size_t m = n - q;
    Banded b(n, q);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t la = 0; la <= q; ++la) {
            for (std::size_t lb = 0; lb <= la; ++lb) {
                b.at(r + la, la - lb) += rho * c[la] * c[lb];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        b.at(i, 0) += shift;
    }
    return b;
}

/// D·Dᵀ as a band of width q on the m differences.
Banded ddt_band(std::size_t n, const std::vector<double>& c)
{
    const std::size_t q = c.size() - 1;
    const std::size_t m = n - q;
    Banded b(m, q);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t d = 0; d <= std::min(r, q); ++d) {
            double s = 0.0;
            for (std::size_t l = d; l <= q; ++l) {
                s += c[l] * c[l - d];
            }
            b.at(r, d) = s;
        }
    }
    return b;
}

double soft(double v, double t)
{
    return v > t ? v - t : (v < -t ? v + t : 0.0);
}

/// (D·Dᵀ) restricted to the difference rows `rows`, as a band of width q.
Banded row_gram(const std::vector<std::size_t>& rows, const std::vector<double>& c)
{
    const std::size_t q = c.size() - 1;
    Banded b(rows.size(), q);
    for (std::size_t a = 0; a < rows.size(); ++a) {
        for (std::size_t d = 0; d <= std::min(a, q); ++d) {
            const std::size_t gap = rows[a] - rows[a - d];
            double v = 0.0;
            if (gap <= q) {
                for (std::size_t l = gap; l <= q; ++l) {
                    v += c[l] * c[l - gap];
                }
            }
            b.at(a, d) = v;
        }
    }
    return b;
}

/// Solves the dual min ½‖y − Dᵀν‖² over |ν| ≤ λ by projected Newton with an
/// Armijo search along the projection arc, warm-started at nu. Succeeds when
/// the projected gradient vanishes; then x = y − Dᵀν.
bool polish(std::span<const double> y, const std::vector<double>& c, double lambda, Vector nu,
            Vector& x)
{
    const std::size_t n = y.size();
    const std::size_t q = c.size() - 1;
    const std::size_t m = n - q;
    auto clip = [&](double v) { return std::clamp(v, -lambda, lambda); };
    auto primal = [&](const Vector& v) {
        Vector p = apply_diff_t(v, n, c);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = y[i] - p[i];
        }
        return p;
    };
    double hdiag = 0.0;
    for (double v : c) {
        hdiag += v * v;
    }
    for (double& v : nu) {
        v = clip(v);
    }
    Vector xs = primal(nu);
    double obj = 0.5 * num::dot(xs, xs);
    Vector g(m);
    Vector d(m);
    Vector trial(m);
    for (int it = 0; it < 100; ++it) {
        for (std::size_t r = 0; r < m; ++r) {
            double s = 0.0;
            for (std::size_t l = 0; l <= q; ++l) {
                s += c[l] * xs[r + l];
            }
            g[r] = -s;
        }
        const double tol = 1e-9 * std::max(1.0, num::norm_inf(xs));
        double w = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            w = std::max(w, std::abs(nu[r] - clip(nu[r] - g[r])));
        }
        if (w <= tol) {
            x = std::move(xs);
            return true;
        }
        const double eps = std::min(1e-3 * lambda, w);
        std::vector<std::size_t> free;
        for (std::size_t r = 0; r < m; ++r) {
            const bool held = (nu[r] >= lambda - eps && g[r] < 0.0) || (nu[r] <= -lambda + eps && g[r] > 0.0);
            if (held) {
                d[r] = -g[r] / hdiag;
            } else {
                free.push_back(r);
            }
        }
        if (!free.empty()) {
            Banded h = row_gram(free, c);
            try {
                banded_cholesky(h);
            } catch (const Error&) {
                return false;
            }
            Vector step(free.size());
            for (std::size_t a = 0; a < free.size(); ++a) {
                step[a] = -g[free[a]];
            }
            banded_solve(h, step);
            for (std::size_t a = 0; a < free.size(); ++a) {
                d[free[a]] = step[a];
            }
        }
        bool moved = false;
        for (double alpha = 1.0; alpha > 1e-12; alpha *= 0.5) {
            double decrease = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                trial[r] = clip(nu[r] + alpha * d[r]);
                decrease += g[r] * (trial[r] - nu[r]);
            }
            Vector xt = primal(trial);
            const double next = 0.5 * num::dot(xt, xt);
            if (next <= obj + 1e-4 * decrease) {
                nu.swap(trial);
                xs = std::move(xt);
                obj = next;
                moved = true;
                break;
            }
        }
        if (!moved) {
            return false;
        }
    }
    return false;
}

struct AdmmState {
    Vector z;
    Vector u;
    double rho = 0.0;
};

TrendFit admm_core(std::span<const double> y, int k, double lambda, const AdmmOptions& opt,
                   AdmmState& st)
{
    const std::size_t n = y.size();
    check_order(n, k);
    require(lambda >= 0.0 && std::isfinite(lambda), Errc::DomainError, "lambda must be >= 0");
    TrendFit out;
    out.k = k;
    out.lambda = lambda;
    if (lambda == 0.0) {
        out.fitted.assign(y.begin(), y.end());
        out.knots = knots_of(out.fitted, k);
        out.objective = 0.0;
        return out;
    }
    const auto c = diff_coefficients(k + 1);
    const std::size_t m = n - static_cast<std::size_t>(k) - 1;
    if (st.z.size() != m) {
        st.z = apply_diff(y, k);
        st.u.assign(m, 0.0);
    }
    if (!(st.rho > 0.0)) {
        st.rho = opt.rho > 0.0 ? opt.rho : lambda;
    }
    Banded chol = normal_band(n, c, st.rho, 1.0);
    banded_cholesky(chol);

    Vector x(n);
    Vector dx(m);
    Vector diff(m);
    for (int it = 1; it <= opt.max_iter; ++it) {
        for (std::size_t r = 0; r < m; ++r) {
            diff[r] = st.z[r] - st.u[r];
        }
        x = apply_diff_t(diff, n, c);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = y[i] + st.rho * x[i];
        }
        banded_solve(chol, x);
        dx = apply_diff(x, k);

        double r2 = 0.0;
        double dz2 = 0.0;
        double dxn = 0.0;
        double zn = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const double znew = soft(dx[r] + st.u[r], lambda / st.rho);
            diff[r] = znew - st.z[r];
            st.z[r] = znew;
            st.u[r] += dx[r] - znew;
            r2 += (dx[r] - znew) * (dx[r] - znew);
            dxn += dx[r] * dx[r];
            zn += znew * znew;
        }
        const Vector dtz = apply_diff_t(diff, n, c);
        for (double v : dtz) {
            dz2 += v * v;
        }
        const double primal = std::sqrt(r2);
        const double dual = st.rho * std::sqrt(dz2);
        const Vector dtu = apply_diff_t(st.u, n, c);
        const double eps_pri = std::sqrt(static_cast<double>(m)) * opt.abs_tol
                               + opt.rel_tol * std::sqrt(std::max(dxn, zn));
        const double eps_dual = std::sqrt(static_cast<double>(n)) * opt.abs_tol
                                + opt.rel_tol * st.rho * num::norm2(dtu);
        const bool converged = primal <= eps_pri && dual <= eps_dual;
        if (converged || (opt.polish && it % 10 == 0)) {
            Vector exact;
            bool exact_ok = false;
            if (opt.polish) {
                Vector nu(m);
                for (std::size_t r = 0; r < m; ++r) {
                    nu[r] = st.z[r] != 0.0 ? std::copysign(lambda, st.z[r]) : st.rho * st.u[r];
                }
                exact_ok = polish(y, c, lambda, std::move(nu), exact);
            }
            if (exact_ok || converged) {
                out.fitted = exact_ok ? std::move(exact) : std::move(x);
                out.iterations = it;
                out.knots = knots_of(out.fitted, k);
                out.objective = trend_objective(y, out.fitted, k, lambda);
                return out;
            }
        }
        // Residual balancing, refactoring only when ρ moves.
        if (it % 10 == 0) {
            double scale = 1.0;
            if (primal > 10.0 * dual) {
                scale = 2.0;
            } else if (dual > 10.0 * primal) {
                scale = 0.5;
            }
            if (scale != 1.0) {
                st.rho *= scale;
                for (double& v : st.u) {
                    v /= scale;
                }
                chol = normal_band(n, c, st.rho, 1.0);
                banded_cholesky(chol);
            }
        }
    }
    fail(Errc::NoConvergence, "ADMM reached its iteration cap");
}

/// Column scales making every basis column unit length.
Vector column_norms(const Matrix& A)
{
    Vector s(A.cols(), 0.0);
    for (std::size_t i = 0; i < A.rows(); ++i) {
        for (std::size_t j = 0; j < A.cols(); ++j) {
            s[j] += A(i, j) * A(i, j);
        }
    }
    for (double& v : s) {
        v = std::sqrt(v);
    }
    return s;
}

/// Cholesky of the column-equilibrated Gram matrix; throws `code` on rank loss.
struct Projector {
    Matrix As;  ///< A with unit-length columns
    Matrix L;
};

Projector make_projector(const Matrix& A, Errc code)
{
    require(A.rows() > 0 && A.cols() > 0, code, "empty basis");
    if (A.cols() > A.rows()) {
        fail(code, "basis has more columns than rows");
    }
    const Vector s = column_norms(A);
    Projector p{A, Matrix()};
    for (std::size_t j = 0; j < A.cols(); ++j) {
        if (!(s[j] > 0.0)) {
            fail(code, "basis has a zero column");
        }
        for (std::size_t i = 0; i < A.rows(); ++i) {
            p.As(i, j) = A(i, j) / s[j];
        }
    }
    const Matrix g = num::gram(p.As);
    try {
        p.L = num::cholesky(g);
    } catch (const Error&) {
        fail(code, "basis Gram matrix is singular");
    }
    for (std::size_t j = 0; j < g.rows(); ++j) {
        if (!(p.L(j, j) * p.L(j, j) > 1e-12)) {
            fail(code, "basis is numerically rank deficient");
        }
    }
    return p;
}

/// L⁻¹v by forward substitution.
Vector forward(const Matrix& L, std::span<const double> v)
{
    Vector w(v.begin(), v.end());
    for (std::size_t i = 0; i < w.size(); ++i) {
        double s = w[i];
        for (std::size_t j = 0; j < i; ++j) {
            s -= L(i, j) * w[j];
        }
        w[i] = s / L(i, i);
    }
    return w;
}

double inflation(double tau)
{
    require(tau > 0.0, Errc::DomainError, "tau must be positive");
    return std::isinf(tau) ? 1.0 : 1.0 + 1.0 / (tau * tau);
}

Vector fitted_values(const Projector& p, std::span<const double> gY)
{
    const Vector coef = num::cholesky_solve(p.L, num::multiply_transposed(p.As, gY));
    return num::multiply(p.As, coef);
}

bool parse_double(std::string_view s, double& out)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    if (s.empty()) {
        return false;
    }
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

Matrix diff_matrix(std::size_t n, int k)
{
    check_order(n, k);
    const auto c = diff_coefficients(k + 1);
    const std::size_t q = c.size() - 1;
    Matrix d(n - q, n);
    for (std::size_t r = 0; r < n - q; ++r) {
        for (std::size_t l = 0; l <= q; ++l) {
            d(r, r + l) = c[l];
        }
    }
    return d;
}

Vector apply_diff(std::span<const double> x, int k)
{
    check_order(x.size(), k);
    const auto c = diff_coefficients(k + 1);
    const std::size_t q = c.size() - 1;
    Vector out(x.size() - q, 0.0);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double s = 0.0;
        for (std::size_t l = 0; l <= q; ++l) {
            s += c[l] * x[r + l];
        }
        out[r] = s;
    }
    return out;
}

double trend_objective(std::span<const double> y, std::span<const double> x, int k, double lambda)
{
    require(x.size() == y.size(), Errc::DimensionMismatch, "fit length");
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        loss += 0.5 * (y[i] - x[i]) * (y[i] - x[i]);
    }
    double pen = 0.0;
    for (double v : apply_diff(x, k)) {
        pen += std::abs(v);
    }
    return loss + lambda * pen;
}

TrendFit trendfilter_admm(std::span<const double> y, int k, double lambda, const AdmmOptions& opt)
{
    AdmmState st;
    return admm_core(y, k, lambda, opt, st);
}

double trend_lambda_max(std::span<const double> y, int k)
{
    check_order(y.size(), k);
    const auto c = diff_coefficients(k + 1);
    Banded b = ddt_band(y.size(), c);
    banded_cholesky(b);
    Vector v = apply_diff(y, k);
    banded_solve(b, v);
    return num::norm_inf(v);
}

Vector trend_lambda_grid(std::span<const double> y, int k, std::size_t n_lambda, double ratio)
{
    require(n_lambda >= 1, Errc::DomainError, "grid needs at least one point");
    require(ratio > 0.0 && ratio < 1.0, Errc::DomainError, "ratio must lie in (0, 1)");
    const double top = trend_lambda_max(y, k);
    if (!(top > 0.0)) {
        return Vector{0.0};
    }
    Vector g(n_lambda);
    for (std::size_t i = 0; i < n_lambda; ++i) {
        const double t = n_lambda == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n_lambda - 1);
        g[i] = top * std::pow(ratio, t);
    }
    return g;
}

Matrix falling_factorial_basis(std::span<const std::size_t> knots, int k, std::size_t n)
{
    check_order(n, k);
    std::vector<std::size_t> ks(knots.begin(), knots.end());
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    for (std::size_t kn : ks) {
        if (kn < static_cast<std::size_t>(k) || kn + 2 > n) {
            fail(Errc::RankDeficientBasis, "knot outside the interior of the series");
        }
    }
    const std::size_t poly = static_cast<std::size_t>(k) + 1;
    Matrix A(n, poly + ks.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i);
        double pw = 1.0;
        for (std::size_t j = 0; j < poly; ++j) {
            A(i, j) = pw;
            pw *= t;
        }
        for (std::size_t m = 0; m < ks.size(); ++m) {
            if (i > ks[m]) {
                double v = 1.0;
                for (int l = 1; l <= k; ++l) {
                    v *= t - static_cast<double>(ks[m] - static_cast<std::size_t>(k) + static_cast<std::size_t>(l));
                }
                A(i, poly + m) = v;
            }
        }
    }
    if (A.cols() > n) {
        fail(Errc::RankDeficientBasis, "more basis functions than points");
    }
    make_projector(A, Errc::RankDeficientBasis);
    return A;
}

Band pointwise_band(std::span<const double> gY, const Matrix& A, const Matrix& sigma, double tau,
                    double alpha)
{
    require(alpha > 0.0 && alpha < 1.0, Errc::DomainError, "alpha must lie in (0, 1)");
    require(gY.size() == A.rows(), Errc::DimensionMismatch, "response length");
    const Projector p = make_projector(A, Errc::SingularBasis);
    const std::size_t n = A.rows();
    const double z = num::normal_quantile(1.0 - alpha / 2.0);
    const double infl = inflation(tau);
    Band b;
    b.kind = BandKind::Pointwise;
    b.multiplier = z;
    b.level = 1.0 - alpha;
    b.centers = fitted_values(p, gY);
    b.halfwidths.resize(n);
    const bool scalar = sigma.rows() == 1 && sigma.cols() == 1;
    require(scalar || (sigma.rows() == n && sigma.cols() == n), Errc::DimensionMismatch,
            "Σ must be 1×1 or n×n");
    // Rows of H = A(AᵀA)⁻¹Aᵀ give aᵢᵀ(AᵀA)⁻¹Aᵀ; var_i = hᵢᵀΣhᵢ.
    Matrix W(n, A.cols());
    for (std::size_t i = 0; i < n; ++i) {
        const Vector w = forward(p.L, p.As.row(i));
        std::copy(w.begin(), w.end(), W.row(i).begin());
    }
    for (std::size_t i = 0; i < n; ++i) {
        double var = 0.0;
        if (scalar) {
            double q = 0.0;
            for (double v : W.row(i)) {
                q += v * v;
            }
            var = sigma(0, 0) * q;
        } else {
            Vector h(n);
            for (std::size_t j = 0; j < n; ++j) {
                h[j] = num::dot(W.row(i), W.row(j));
            }
            var = num::dot(h, num::multiply(sigma, h));
        }
        b.halfwidths[i] = z * std::sqrt(infl * std::max(var, 0.0));
    }
    return b;
}

double tube_length(const Matrix& A)
{
    const Projector p = make_projector(A, Errc::SingularBasis);
    double len = 0.0;
    Vector prev;
    for (std::size_t i = 0; i < A.rows(); ++i) {
        Vector w = forward(p.L, p.As.row(i));
        const double nrm = num::norm2(w);
        require(nrm > 0.0, Errc::SingularBasis, "basis row is zero");
        for (double& v : w) {
            v /= nrm;
        }
        if (!prev.empty()) {
            double d = 0.0;
            for (std::size_t j = 0; j < w.size(); ++j) {
                d += (w[j] - prev[j]) * (w[j] - prev[j]);
            }
            len += std::sqrt(d);
        }
        prev = std::move(w);
    }
    return len;
}

double multiplier_lhs(double c, double gamma, std::optional<double> df)
{
    constexpr double two_pi = 6.283185307179586;
    if (df) {
        const double v = *df;
        require(v > 0.0, Errc::DomainError, "t degrees of freedom must be positive");
        return gamma / two_pi * std::pow(1.0 + c * c / v, -v / 2.0) + 1.0 - num::t_cdf(c, v);
    }
    return gamma / two_pi * std::exp(-c * c / 2.0) + 1.0 - num::normal_cdf(c);
}

double solve_multiplier(double gamma, double alpha, std::optional<double> df)
{
    require(alpha > 0.0 && alpha < 1.0, Errc::DomainError, "alpha must lie in (0, 1)");
    require(gamma >= 0.0, Errc::DomainError, "tube length must be nonnegative");
    const double target = alpha / 2.0;
    if (multiplier_lhs(0.0, gamma, df) <= target) {
        return 0.0;
    }
    double lo = 0.0;
    double hi = 1.0;
    while (multiplier_lhs(hi, gamma, df) > target) {
        lo = hi;
        hi *= 2.0;
        require(hi < 1e12, Errc::NoConvergence, "multiplier bracket did not close");
    }
    for (int it = 0; it < 400 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (multiplier_lhs(mid, gamma, df) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Multiplier uniform_multiplier(const Matrix& A, double alpha, std::optional<double> df)
{
    Multiplier m;
    m.gamma = tube_length(A);
    m.c = solve_multiplier(m.gamma, alpha, df);
    return m;
}

Band uniform_band(std::span<const double> gY, const Matrix& A, double sigma, double tau,
                  double alpha, std::optional<double> t_df)
{
    require(sigma > 0.0, Errc::DomainError, "sigma must be positive");
    Band b = pointwise_band(gY, A, Matrix{{sigma * sigma}}, tau, alpha);
    const Multiplier m = uniform_multiplier(A, alpha, t_df);
    for (double& h : b.halfwidths) {
        h *= m.c / b.multiplier;
    }
    b.kind = BandKind::Uniform;
    b.multiplier = m.c;
    b.gamma = m.gamma;
    return b;
}

Vector projected_mean(const Matrix& A, std::span<const double> f0)
{
    require(f0.size() == A.rows(), Errc::DimensionMismatch, "mean length");
    return fitted_values(make_projector(A, Errc::SingularBasis), f0);
}

double estimate_sigma_differences(std::span<const double> y)
{
    if (y.size() < 2) {
        fail(Errc::TooShort, "variance estimate needs two points");
    }
    double s = 0.0;
    for (std::size_t t = 0; t + 1 < y.size(); ++t) {
        s += (y[t + 1] - y[t]) * (y[t + 1] - y[t]);
    }
    return s / (2.0 * static_cast<double>(y.size() - 1));
}

std::vector<std::size_t> knots_of(std::span<const double> x, int k)
{
    const Vector d = apply_diff(x, k);
    const double thr = 1e-6 * std::max(1.0, num::norm_inf(x));
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < d.size(); ++r) {
        if (std::abs(d[r]) > thr) {
            out.push_back(r + static_cast<std::size_t>(k));
        }
    }
    return out;
}

double sure_score(std::span<const double> y, std::span<const double> fit, double sigma2,
                  std::size_t df)
{
    require(y.size() == fit.size() && !y.empty(), Errc::DimensionMismatch, "fit length");
    double rss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        rss += (y[i] - fit[i]) * (y[i] - fit[i]);
    }
    const double n = static_cast<double>(y.size());
    return rss / n + 2.0 * sigma2 * static_cast<double>(df) / n;
}

KnotSelection knot_select(std::span<const double> f_part, int k, const KnotOptions& opt)
{
    const std::size_t n = f_part.size();
    check_order(n, k);
    KnotSelection sel;
    sel.sure_df = opt.sure_df;
    sel.lambdas = trend_lambda_grid(f_part, k, opt.n_lambda, opt.ratio);
    const std::size_t nl = sel.lambdas.size();

    std::vector<TrendFit> full;
    full.reserve(nl);
    AdmmState st;
    for (double lam : sel.lambdas) {
        full.push_back(admm_core(f_part, k, lam, AdmmOptions{}, st));
    }

    if (opt.rule == KnotRule::Sure) {
        require(opt.sigma2 >= 0.0, Errc::DomainError, "sigma2 must be nonnegative");
        sel.scores.resize(nl);
        for (std::size_t l = 0; l < nl; ++l) {
            const std::size_t m = full[l].knots.size() + (opt.sure_df == SureDf::KnotsPlusOne ? 1 : 0);
            sel.scores[l] = sure_score(f_part, full[l].fitted, opt.sigma2, m);
        }
        sel.chosen = static_cast<std::size_t>(
            std::min_element(sel.scores.begin(), sel.scores.end()) - sel.scores.begin());
        sel.fit = full[sel.chosen];
        return sel;
    }

    const std::size_t K = opt.folds;
    require(K >= 2, Errc::DomainError, "CV needs at least two folds");
    Matrix err(K, nl, 0.0);
    for (std::size_t fold = 0; fold < K; ++fold) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < n; ++i) {
            const bool held = i % K == fold && i > 0 && i + 1 < n;
            (held ? test : train).push_back(i);
        }
        require(!test.empty(), Errc::TooShort, "series too short for the requested folds");
        Vector ytr(train.size());
        for (std::size_t j = 0; j < train.size(); ++j) {
            ytr[j] = f_part[train[j]];
        }
        AdmmState fs;
        for (std::size_t l = 0; l < nl; ++l) {
            const TrendFit tf = admm_core(ytr, k, sel.lambdas[l], AdmmOptions{}, fs);
            double e = 0.0;
            std::size_t pos = 0;
            for (std::size_t i : test) {
                while (train[pos + 1] < i) {
                    ++pos;
                }
                const double t0 = static_cast<double>(train[pos]);
                const double t1 = static_cast<double>(train[pos + 1]);
                const double w = (static_cast<double>(i) - t0) / (t1 - t0);
                const double pred = (1.0 - w) * tf.fitted[pos] + w * tf.fitted[pos + 1];
                e += (f_part[i] - pred) * (f_part[i] - pred);
            }
            err(fold, l) = e / static_cast<double>(test.size());
        }
    }
    sel.scores.assign(nl, 0.0);
    sel.score_se.assign(nl, 0.0);
    for (std::size_t l = 0; l < nl; ++l) {
        double m = 0.0;
        for (std::size_t f = 0; f < K; ++f) {
            m += err(f, l);
        }
        m /= static_cast<double>(K);
        double v = 0.0;
        for (std::size_t f = 0; f < K; ++f) {
            v += (err(f, l) - m) * (err(f, l) - m);
        }
        sel.scores[l] = m;
        sel.score_se[l] = std::sqrt(v / static_cast<double>(K - 1) / static_cast<double>(K));
    }
    std::size_t best = 0;
    for (std::size_t l = 1; l < nl; ++l) {
        if (sel.scores[l] < sel.scores[best]) {
            best = l;
        }
    }
    sel.chosen = best;
    if (opt.rule == KnotRule::Cv1se) {
        const double bound = sel.scores[best] + sel.score_se[best];
        for (std::size_t l = 0; l <= best; ++l) {
            if (sel.scores[l] <= bound) {
                sel.chosen = l;
                break;
            }
        }
    }
    sel.fit = full[sel.chosen];
    return sel;
}

Series read_series(std::istream& in)
{
    Series s;
    std::string line;
    std::size_t lineno = 0;
    bool seen_data = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        for (char& ch : line) {
            if (ch == ',' || ch == ';' || ch == '\t') {
                ch = ' ';
            }
        }
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (!rest.empty()) {
            const auto start = rest.find_first_not_of(' ');
            if (start == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(start);
            const auto end = rest.find(' ');
            fields.push_back(rest.substr(0, end));
            rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
        }
        if (fields.empty()) {
            continue;
        }
        double t = 0.0;
        double y = 0.0;
        const bool ok = fields.size() == 2 && parse_double(fields[0], t) && parse_double(fields[1], y);
        if (!ok) {
            const bool numeric = std::all_of(fields.begin(), fields.end(), [](std::string_view f) {
                double v = 0.0;
                return parse_double(f, v);
            });
            if (!seen_data && !numeric) {
                seen_data = true;  // header line
                continue;
            }
            fail(Errc::IoError, "malformed row at line " + std::to_string(lineno));
        }
        seen_data = true;
        s.t.push_back(t);
        s.y.push_back(y);
    }
    return s;
}

void write_band_csv(std::ostream& out, std::span<const double> t, const Band& band)
{
    require(t.size() == band.centers.size(), Errc::DimensionMismatch, "time length");
    const char* kind = band.kind == BandKind::Uniform ? "uniform" : "pointwise";
    const auto old = out.precision(17);
    out << "t,fit,lower,upper,kind\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
        out << t[i] << ',' << band.centers[i] << ',' << band.centers[i] - band.halfwidths[i] << ','
            << band.centers[i] + band.halfwidths[i] << ',' << kind << '\n';
    }
    out.precision(old);
}

}  // namespace fiss::trend
