#include "fiss/posi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fiss/error.hpp"

namespace fiss::posi {

const char* target_name(Target t) noexcept
{
    switch (t) {
        case Target::BetaStar: return "beta_star";
        case Target::BetaStarN: return "beta_star_n";
        case Target::ProjectedMean: return "projected_mean";
        case Target::MuBar: return "mu_bar";
        case Target::MuIndividual: return "mu_individual";
    }
    return "unknown";
}

namespace {

void check_alpha(double alpha)
{
    require(alpha > 0.0 && alpha < 1.0, Errc::DomainError, "alpha must lie in (0, 1)");
}

double z_half(double alpha) { return num::normal_quantile(1.0 - alpha / 2.0); }

/// (XᵀX)⁻¹ with rank problems reported as SingularDesign.
Matrix gram_inverse(const Matrix& x)
{
    require(x.cols() > 0, Errc::SingularDesign, "empty design");
    const Matrix g = num::gram(x);
    Matrix l;
    try {
        l = num::cholesky(g);
    } catch (const Error&) {
        fail(Errc::SingularDesign, "X_MᵀX_M is not invertible");
    }
    double max_diag = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        max_diag = std::max(max_diag, g(i, i));
    }
    for (std::size_t i = 0; i < g.rows(); ++i) {
        if (!(l(i, i) * l(i, i) > 1e-12 * max_diag)) {
            fail(Errc::SingularDesign, "X_MᵀX_M is numerically singular");
        }
    }
    return num::spd_inverse(g);
}

std::size_t label_of(std::span<const std::size_t> labels, std::size_t k)
{
    return labels.empty() ? k : labels[k];
}

double inflation(double tau)
{
    require(tau > 0.0, Errc::DomainError, "tau must be positive");
    return std::isinf(tau) ? 1.0 : 1.0 + 1.0 / (tau * tau);
}

}  // namespace

void write_csv(std::ostream& out, const CiTable& table, bool header)
{
    if (header) {
        out << "index,estimate,lower,upper,target,level\n";
    }
    const auto old = out.precision(17);
    for (const CiRow& r : table.rows) {
        out << r.index << ',' << r.estimate << ',' << r.lower << ',' << r.upper << ','
            << target_name(table.target) << ',' << table.level << '\n';
    }
    out.precision(old);
}

void write_csv(std::ostream& out, const RejectionSet& set, bool header)
{
    if (header) {
        out << "index,pvalue,rejected,level\n";
    }
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < set.pvalues.size(); ++i) {
        const bool rej = std::binary_search(set.rejected.begin(), set.rejected.end(), i);
        out << i << ',' << set.pvalues[i] << ',' << (rej ? 1 : 0) << ',' << set.q << '\n';
    }
    out.precision(old);
}

SelectedModel select_model(const Matrix& X, std::vector<std::size_t> indices)
{
    for (std::size_t k = 0; k < indices.size(); ++k) {
        require(indices[k] < X.cols(), Errc::DomainError, "selected index out of range");
        require(k == 0 || indices[k] > indices[k - 1], Errc::DomainError,
                "selected indices must be unique and sorted");
    }
    Matrix xm = num::select_columns(X, indices);
    return {std::move(indices), std::move(xm)};
}

Matrix ols_covariance(const Matrix& X_M, const Matrix& sigma)
{
    const Matrix inv = gram_inverse(X_M);
    if (sigma.rows() == 1 && sigma.cols() == 1) {
        return num::scale(inv, sigma(0, 0));
    }
    require(sigma.rows() == X_M.rows() && sigma.cols() == X_M.rows(), Errc::DimensionMismatch,
            "Σ must be n×n");
    const Matrix a = num::multiply(inv, num::transpose(X_M));
    return num::multiply(num::multiply(a, sigma), num::transpose(a));
}

CiTable linear_ci(std::span<const double> gY, const Matrix& X_M, const Matrix& sigma, double tau,
                  double alpha, std::span<const std::size_t> labels)
{
    check_alpha(alpha);
    require(gY.size() == X_M.rows(), Errc::DimensionMismatch, "response length");
    require(labels.empty() || labels.size() == X_M.cols(), Errc::DimensionMismatch, "labels");
    const Matrix cov = ols_covariance(X_M, sigma);
    const Vector beta = num::multiply(gram_inverse(X_M), num::multiply_transposed(X_M, gY));
    const double z = z_half(alpha);
    const double infl = inflation(tau);
    CiTable t;
    t.level = 1.0 - alpha;
    t.target = Target::BetaStar;
    for (std::size_t k = 0; k < beta.size(); ++k) {
        const double hw = z * std::sqrt(infl * std::max(cov(k, k), 0.0));
        t.rows.push_back({label_of(labels, k), beta[k], beta[k] - hw, beta[k] + hw});
    }
    return t;
}

SigmaEstimate full_model_sigma(std::span<const double> Y, const Matrix& X_full)
{
    const std::size_t n = X_full.rows();
    const std::size_t p = X_full.cols();
    require(Y.size() == n, Errc::DimensionMismatch, "response length");
    if (n <= p) {
        fail(Errc::RankDeficientFullModel, "full model needs n > p");
    }
    fit::FitResult r;
    try {
        r = fit::ols(fit::Design{X_full, Vector(Y.begin(), Y.end()), fit::Family::Gaussian, {}, {}});
    } catch (const Error& e) {
        if (e.code() == Errc::SingularDesign) {
            fail(Errc::RankDeficientFullModel, "full design is rank deficient");
        }
        throw;
    }
    SigmaEstimate s;
    s.residual_df = n - p;
    s.sigma = std::sqrt(r.deviance / static_cast<double>(s.residual_df));
    s.low_df = s.residual_df < 5;
    return s;
}

EstVarSplit fission_estvar(std::span<const double> Y, const Matrix& X_full, double tau,
                           dist::RngStream& rng)
{
    require(tau > 0.0 && std::isfinite(tau), Errc::DomainError, "tau must be positive");
    EstVarSplit out{Vector(Y.size()), Vector(Y.size()), full_model_sigma(Y, X_full)};
    for (std::size_t i = 0; i < Y.size(); ++i) {
        const double z = rng.normal();
        out.f[i] = Y[i] + out.sigma.sigma * tau * z;
        out.g[i] = Y[i] - out.sigma.sigma * z / tau;
    }
    return out;
}

CiTable linear_ci_estvar(std::span<const double> gY, const Matrix& X_M, const SigmaEstimate& s,
                         double tau, double alpha, std::span<const std::size_t> labels)
{
    const Matrix sigma{{s.sigma * s.sigma}};
    return linear_ci(gY, X_M, sigma, tau, alpha, labels);
}

SandwichPieces sandwich_pieces(const fit::Design& d, std::span<const double> coef)
{
    const std::size_t n = d.X.rows();
    const std::size_t k = d.X.cols();
    require(coef.size() == k, Errc::DimensionMismatch, "coefficient length");
    SandwichPieces s{Matrix(k, k), Matrix(k, k), Matrix()};
    for (std::size_t i = 0; i < n; ++i) {
        auto x = d.X.row(i);
        const double eta = (d.offset.empty() ? 0.0 : d.offset[i]) + num::dot(x, coef);
        const double m = fit::inverse_link(d.family, eta);
        const double w = d.weights.empty() ? 1.0 : d.weights[i];
        // Canonical link: ∂m/∂η equals the variance function.
        const double h = w * fit::variance_fn(d.family, m);
        const double r2 = w * (d.y[i] - m) * (d.y[i] - m);
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) {
                s.H(a, b) += h * x[a] * x[b];
                s.V(a, b) += r2 * x[a] * x[b];
            }
        }
    }
    Matrix hinv;
    try {
        const Matrix l = num::cholesky(s.H);
        double max_diag = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
            max_diag = std::max(max_diag, s.H(a, a));
        }
        for (std::size_t a = 0; a < k; ++a) {
            if (!(l(a, a) * l(a, a) > 1e-12 * max_diag)) {
                fail(Errc::SingularHessian, "estimated Hessian is numerically singular");
            }
        }
        hinv = num::spd_inverse(s.H);
    } catch (const Error& e) {
        if (e.code() == Errc::SingularHessian) {
            throw;
        }
        fail(Errc::SingularHessian, "estimated Hessian is not positive definite");
    }
    s.variance = num::multiply(num::multiply(hinv, s.V), hinv);
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            const double v = 0.5 * (s.variance(a, b) + s.variance(b, a));
            s.variance(a, b) = s.variance(b, a) = v;
        }
    }
    return s;
}

SandwichResult sandwich_ci(const fit::Design& d, double alpha, SmallSample correction,
                           std::span<const std::size_t> labels)
{
    check_alpha(alpha);
    require(labels.empty() || labels.size() == d.X.cols(), Errc::DimensionMismatch, "labels");
    SandwichResult out;
    out.fit = fit::glm_irls(d);
    out.pieces = sandwich_pieces(d, out.fit.coef);
    const std::size_t n = d.X.rows();
    const std::size_t k = d.X.cols();
    double scale = 1.0;
    if (correction == SmallSample::HcDf) {
        require(n > k, Errc::DomainError, "degrees-of-freedom correction needs n > |M|");
        scale = std::sqrt(static_cast<double>(n) / static_cast<double>(n - k));
    }
    const double z = z_half(alpha);
    out.table.level = 1.0 - alpha;
    out.table.target = Target::BetaStarN;
    for (std::size_t j = 0; j < k; ++j) {
        const double b = out.fit.coef[j];
        const double hw = scale * z * std::sqrt(std::max(out.pieces.variance(j, j), 0.0));
        out.table.rows.push_back({label_of(labels, j), b, b - hw, b + hw});
    }
    return out;
}

RejectionSet bh_select(std::span<const double> pvalues, double q)
{
    require(q > 0.0 && q < 1.0, Errc::DomainError, "q must lie in (0, 1)");
    const std::size_t n = pvalues.size();
    for (double p : pvalues) {
        require(p >= 0.0 && p <= 1.0, Errc::DomainError, "p-values must lie in [0, 1]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    std::size_t kstar = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        if (pvalues[order[k - 1]] <= static_cast<double>(k) * q / static_cast<double>(n)) {
            kstar = k;
        }
    }
    RejectionSet r;
    r.q = q;
    r.pvalues.assign(pvalues.begin(), pvalues.end());
    r.rejected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kstar));
    std::sort(r.rejected.begin(), r.rejected.end());
    return r;
}

CiTable by_ci(std::span<const double> y, std::span<const std::size_t> rejected, double sigma,
              double alpha)
{
    check_alpha(alpha);
    if (rejected.empty()) {
        fail(Errc::EmptyRejectionSet, "no rejections to cover");
    }
    const double beta = static_cast<double>(rejected.size()) * alpha / static_cast<double>(y.size());
    const double hw = sigma * z_half(beta);
    CiTable t;
    t.level = 1.0 - alpha;
    t.target = Target::MuIndividual;
    for (std::size_t i : rejected) {
        require(i < y.size(), Errc::DomainError, "rejected index out of range");
        t.rows.push_back({i, y[i], y[i] - hw, y[i] + hw});
    }
    return t;
}

double fission_pvalue(double f, double sigma, double tau)
{
    return 1.0 - num::normal_cdf(f / (sigma * std::sqrt(1.0 + tau * tau)));
}

CiRow aggregate_ci(std::span<const double> g, std::span<const std::size_t> rejected, double sigma,
                   double tau, double alpha)
{
    check_alpha(alpha);
    if (rejected.empty()) {
        fail(Errc::EmptyRejectionSet, "aggregate interval needs at least one rejection");
    }
    double sum = 0.0;
    for (std::size_t i : rejected) {
        sum += g[i];
    }
    const double r = static_cast<double>(rejected.size());
    const double est = sum / r;
    const double hw = z_half(alpha) * sigma * std::sqrt(inflation(tau) / r);
    return {0, est, est - hw, est + hw};
}

MultitestResult fission_multitest(std::span<const double> y, double sigma, double tau,
                                  double alpha, double q, dist::RngStream& rng)
{
    check_alpha(alpha);
    require(sigma > 0.0 && tau > 0.0 && std::isfinite(tau), Errc::DomainError,
            "sigma and tau must be positive");
    const std::size_t n = y.size();
    MultitestResult out;
    out.f.resize(n);
    out.g.resize(n);
    Vector p(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = rng.normal();
        out.f[i] = y[i] + sigma * tau * z;
        out.g[i] = y[i] - sigma * z / tau;
        p[i] = fission_pvalue(out.f[i], sigma, tau);
    }
    out.rejections = bh_select(p, q);
    out.per_signal.level = 1.0 - alpha;
    out.per_signal.target = Target::MuIndividual;
    const double hw = z_half(alpha) * sigma * std::sqrt(inflation(tau));
    for (std::size_t i : out.rejections.rejected) {
        out.per_signal.rows.push_back({i, out.g[i], out.g[i] - hw, out.g[i] + hw});
    }
    if (!out.rejections.rejected.empty()) {
        out.aggregate = aggregate_ci(out.g, out.rejections.rejected, sigma, tau, alpha);
    }
    return out;
}

double randomized_pvalue(double y, const dist::Dist& null, double u, Tail tail)
{
    require(u >= 0.0 && u <= 1.0, Errc::DomainError, "u must lie in [0, 1]");
    const double hi = dist::cdf(null, y);
    const double lo = dist::is_discrete(null) ? dist::cdf_left(null, y) : hi;
    const double yp = std::clamp(hi * u + (1.0 - u) * lo, 0.0, 1.0);
    return tail == Tail::Lower ? yp : 1.0 - yp;
}

double randomized_pvalue(double y, const dist::Dist& null, dist::RngStream& rng, Tail tail)
{
    return randomized_pvalue(y, null, rng.uniform(), tail);
}

CiRow poisson_aggregate_ci(std::span<const double> g_selected, double p, double alpha)
{
    check_alpha(alpha);
    require(p > 0.0 && p < 1.0, Errc::DomainError, "p must lie in (0, 1)");
    if (g_selected.empty()) {
        fail(Errc::EmptyRejectionSet, "aggregate interval needs at least one rejection");
    }
    double sum = 0.0;
    for (double g : g_selected) {
        require(g >= 0.0 && g == std::floor(g), Errc::DomainError,
                "g-parts must be nonnegative integers");
        sum += g;
    }
    const double scale = 2.0 * static_cast<double>(g_selected.size()) * (1.0 - p);
    const double lo = num::chisq_quantile(alpha / 2.0, 2.0 * sum) / scale;
    const double hi = num::chisq_quantile(1.0 - alpha / 2.0, 2.0 * sum + 2.0) / scale;
    return {0, 2.0 * sum / scale, lo, hi};
}

RegressionMetrics regression_metrics(std::span<const double> beta,
                                     std::span<const std::size_t> selected, const CiTable& table,
                                     std::span<const double> targets)
{
    require(targets.size() == table.rows.size(), Errc::DimensionMismatch,
            "one target per interval");
    RegressionMetrics m;
    m.n_selected = selected.size();
    std::size_t nonzero = 0;
    std::size_t positive = 0;
    for (double b : beta) {
        nonzero += b != 0.0;
        positive += b > 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t j : selected) {
        require(j < beta.size(), Errc::DomainError, "selected index out of range");
        hits += beta[j] != 0.0;
    }
    m.power_selected = static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(nonzero, 1));
    m.precision_selected =
        static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(selected.size(), 1));

    std::size_t misses = 0;
    std::size_t signed_cis = 0;
    std::size_t false_signs = 0;
    std::size_t true_pos_signs = 0;
    double length = 0.0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const CiRow& row = table.rows[r];
        require(row.index < beta.size(), Errc::DomainError, "row index out of range");
        const double b = beta[row.index];
        misses += targets[r] < row.lower || targets[r] > row.upper;
        length += row.upper - row.lower;
        if (row.lower > 0.0 || row.upper < 0.0) {
            ++signed_cis;
        }
        false_signs += (b < 0.0 && row.lower > 0.0) || (b > 0.0 && row.upper < 0.0);
        true_pos_signs += b > 0.0 && row.lower > 0.0;
    }
    const double denom = static_cast<double>(std::max<std::size_t>(table.rows.size(), 1));
    m.fcr = static_cast<double>(misses) / denom;
    m.avg_ci_length = table.rows.empty() ? 0.0 : length / static_cast<double>(table.rows.size());
    m.fsr = static_cast<double>(false_signs) / static_cast<double>(std::max<std::size_t>(signed_cis, 1));
    m.power_sign =
        static_cast<double>(true_pos_signs) / static_cast<double>(std::max<std::size_t>(positive, 1));
    return m;
}

MultitestMetrics multitest_metrics(std::span<const double> mu, double mu_null,
                                   const RejectionSet& r, const std::optional<CiRow>& aggregate)
{
    MultitestMetrics m;
    m.n_rejected = r.rejected.size();
    std::size_t false_disc = 0;
    std::size_t true_disc = 0;
    std::size_t signals = 0;
    for (double v : mu) {
        signals += v != mu_null;
    }
    double mubar = 0.0;
    for (std::size_t i : r.rejected) {
        require(i < mu.size(), Errc::DomainError, "rejected index out of range");
        (mu[i] == mu_null ? false_disc : true_disc) += 1;
        mubar += mu[i];
    }
    m.fdp = static_cast<double>(false_disc) / static_cast<double>(std::max<std::size_t>(m.n_rejected, 1));
    m.power = static_cast<double>(true_disc) / static_cast<double>(std::max<std::size_t>(signals, 1));
    if (aggregate && m.n_rejected > 0) {
        mubar /= static_cast<double>(m.n_rejected);
        m.miscoverage = (mubar < aggregate->lower || mubar > aggregate->upper) ? 1.0 : 0.0;
        m.ci_length = aggregate->upper - aggregate->lower;
    }
    return m;
}

}  // namespace fiss::posi
