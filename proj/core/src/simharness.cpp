#include "fiss/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "fiss/error.hpp"
#include "fiss/fission.hpp"
#include "fiss/modelfit.hpp"
#include "fiss/posi.hpp"

namespace fiss::sim {

namespace {

constexpr double kNA = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void config_error(const std::string& field, const std::string& what)
{
    fail(Errc::ConfigError, "field '" + field + "': " + what);
}

void check(bool ok, const char* field, const char* what)
{
    if (!ok) {
        config_error(field, what);
    }
}

bool is_regression(Experiment e)
{
    return e == Experiment::LinregLeverage || e == Experiment::LinregIndep
           || e == Experiment::GlmPoisson || e == Experiment::GlmLogistic;
}

bool is_multitest(Experiment e)
{
    return e == Experiment::MultitestGauss || e == Experiment::MultitestPoisson;
}

bool has_leverage_row(Experiment e)
{
    return e == Experiment::LinregLeverage || e == Experiment::GlmPoisson;
}

const char* knot_rule_name(trend::KnotRule r)
{
    switch (r) {
    case trend::KnotRule::CvMin: return "cv_min";
    case trend::KnotRule::Cv1se: return "cv_1se";
    case trend::KnotRule::Sure: return "sure";
    }
    return "cv_min";
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& v)
{
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
        config_error(key, "expected a number, got '" + v + "'");
    }
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        config_error(key, "expected a nonnegative integer, got '" + v + "'");
    }
    return out;
}

std::vector<Method> parse_methods(const std::string& v)
{
    std::vector<Method> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const std::string item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (!item.empty()) {
            const Method m = parse_method(item);
            if (std::find(out.begin(), out.end(), m) != out.end()) {
                config_error("methods", "duplicate method '" + item + "'");
            }
            out.push_back(m);
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

std::uint64_t method_stream(Method m)
{
    return 1 + static_cast<std::uint64_t>(m);
}

Matrix gaussian_rows(std::size_t n, std::size_t p, dist::RngStream& rng)
{
    Matrix x(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            x(i, j) = rng.normal();
        }
    }
    return x;
}

/// Covariates with `binary` leading Ber(½) columns and the rest Gaussian,
/// optionally correlated through a Cholesky factor.
Matrix draw_design(const ExperimentConfig& c, std::size_t binary, dist::RngStream& rng)
{
    const std::size_t rows = has_leverage_row(c.experiment) ? c.n - 1 : c.n;
    Matrix X = gaussian_rows(rows, c.p, rng);
    if (c.rho != 0.0) {
        const Matrix L = num::cholesky(toeplitz_cov(c.p, c.rho));
        Matrix corr(rows, c.p, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < c.p; ++j) {
                double s = 0.0;
                for (std::size_t l = 0; l <= j; ++l) {
                    s += L(j, l) * X(i, l);
                }
                corr(i, j) = s;
            }
        }
        X = std::move(corr);
    }
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < binary && j < c.p; ++j) {
            X(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
        }
    }
    if (!has_leverage_row(c.experiment)) {
        return X;
    }
    const Vector lev = leverage_row(X, c.gamma);
    Matrix full(c.n, c.p);
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy(X.row(i).begin(), X.row(i).end(), full.row(i).begin());
    }
    std::copy(lev.begin(), lev.end(), full.row(c.n - 1).begin());
    return full;
}

fit::Family family_of(Experiment e)
{
    switch (e) {
    case Experiment::GlmPoisson: return fit::Family::Poisson;
    case Experiment::GlmLogistic: return fit::Family::Binomial;
    default: return fit::Family::Gaussian;
    }
}

std::vector<std::size_t> lasso_select(const Matrix& X, const Vector& y, fit::Family fam,
                                      std::size_t folds, dist::RngStream& rng)
{
    fit::Design d{X, y, fam, {}, {}};
    const double ratio = X.rows() < X.cols() ? 1e-2 : 1e-4;
    const Vector grid = fit::lambda_grid(d, 100, ratio);
    const std::size_t k = std::min(folds, X.rows());
    return fit::cv_select(d, grid, k, rng).selected;
}

Vector nan_row(std::size_t width)
{
    return Vector(width, kNA);
}

struct RegressionData {
    Matrix X;
    Vector mu;    ///< conditional means of y
    Vector eta;   ///< true linear predictor
    Vector y;
    Vector beta;
};

RegressionData draw_regression(const ExperimentConfig& c, dist::RngStream& rng)
{
    RegressionData d;
    const std::size_t binary = c.experiment == Experiment::GlmPoisson || c.experiment == Experiment::GlmLogistic ? 2 : 0;
    d.X = draw_design(c, binary, rng);
    d.beta = true_beta(c);
    d.eta = num::multiply(d.X, d.beta);
    d.mu.resize(c.n);
    d.y.resize(c.n);
    const fit::Family fam = family_of(c.experiment);
    for (std::size_t i = 0; i < c.n; ++i) {
        d.mu[i] = fam == fit::Family::Gaussian ? d.eta[i] : fit::inverse_link(fam, d.eta[i]);
        switch (fam) {
        case fit::Family::Gaussian: d.y[i] = d.mu[i] + c.sigma * rng.normal(); break;
        case fit::Family::Poisson: d.y[i] = dist::sample_scalar(dist::Poisson{d.mu[i]}, rng); break;
        case fit::Family::Binomial: d.y[i] = rng.uniform() < d.mu[i] ? 1.0 : 0.0; break;
        }
    }
    return d;
}

/// Rows used for selection and inference, the responses in each, and the
/// inference-stage offset and target means.
struct Stage {
    std::vector<std::size_t> sel_rows;
    Vector sel_y;
    std::vector<std::size_t> inf_rows;
    Vector inf_y;
    Vector inf_offset;  ///< empty means zero
    Vector inf_mean;    ///< E[inference response] given what was conditioned on
    double tau = INFINITY;
};

Stage make_stage(const ExperimentConfig& c, const RegressionData& d, Method m, dist::RngStream& rng)
{
    Stage s;
    std::vector<std::size_t> all(c.n);
    std::iota(all.begin(), all.end(), 0);
    if (m == Method::FullTwice) {
        s.sel_rows = all;
        s.sel_y = d.y;
        s.inf_rows = all;
        s.inf_y = d.y;
        s.inf_mean = d.mu;
        return s;
    }
    if (m == Method::Split) {
        for (std::size_t i = c.n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
            std::swap(all[i - 1], all[j]);
        }
        const std::size_t half = c.n / 2;
        s.sel_rows.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
        s.inf_rows.assign(all.begin() + static_cast<std::ptrdiff_t>(half), all.end());
        std::sort(s.sel_rows.begin(), s.sel_rows.end());
        std::sort(s.inf_rows.begin(), s.inf_rows.end());
        for (std::size_t i : s.sel_rows) {
            s.sel_y.push_back(d.y[i]);
        }
        for (std::size_t i : s.inf_rows) {
            s.inf_y.push_back(d.y[i]);
            s.inf_mean.push_back(d.mu[i]);
        }
        return s;
    }
    s.sel_rows = all;
    s.inf_rows = all;
    s.sel_y.resize(c.n);
    s.inf_y.resize(c.n);
    s.inf_mean.resize(c.n);
    switch (family_of(c.experiment)) {
    case fit::Family::Gaussian: {
        const rules::FissionRule rule = rules::GaussP1{c.tau, Matrix{{c.sigma * c.sigma}}};
        const auto out = rules::fission(d.y, rule, rng);
        s.sel_y = out.f;
        s.inf_y = out.g;
        s.inf_mean = d.mu;
        s.tau = c.tau;
        break;
    }
    case fit::Family::Poisson: {
        const rules::FissionRule rule = rules::PoissonP1{c.fission_p};
        s.inf_offset.assign(c.n, std::log(1.0 - c.fission_p));
        for (std::size_t i = 0; i < c.n; ++i) {
            const auto out = rules::fission(d.y[i], rule, rng);
            s.sel_y[i] = out.f[0];
            s.inf_y[i] = out.g[0];
            s.inf_mean[i] = (1.0 - c.fission_p) * d.mu[i];
        }
        break;
    }
    case fit::Family::Binomial: {
        const rules::FissionRule rule = rules::BernoulliP2{c.fission_p};
        const double shift = std::log((1.0 - c.fission_p) / c.fission_p);
        s.inf_offset.resize(c.n);
        for (std::size_t i = 0; i < c.n; ++i) {
            const auto out = rules::fission(d.y[i], rule, rng);
            s.sel_y[i] = out.f[0];
            s.inf_y[i] = out.g[0];
            s.inf_offset[i] = (2.0 * out.f[0] - 1.0) * shift;
            s.inf_mean[i] = fit::inverse_link(fit::Family::Binomial, d.eta[i] + s.inf_offset[i]);
        }
        break;
    }
    }
    return s;
}

Vector regression_method(const ExperimentConfig& c, const RegressionData& d, Method m,
                         dist::RngStream& rng)
{
    const std::size_t width = metric_names(c.experiment).size();
    Vector row = nan_row(width);
    const fit::Family fam = family_of(c.experiment);
    try {
        const Stage s = make_stage(c, d, m, rng);
        const Matrix Xs = num::select_rows(d.X, s.sel_rows);
        const std::vector<std::size_t> M = lasso_select(Xs, s.sel_y, fam, c.folds, rng);
        const Matrix Xi = num::select_columns(num::select_rows(d.X, s.inf_rows), M);

        posi::CiTable table;
        Vector targets;
        if (!M.empty()) {
            if (fam == fit::Family::Gaussian) {
                table = posi::linear_ci(s.inf_y, Xi, Matrix{{c.sigma * c.sigma}}, s.tau, c.alpha, M);
                targets = num::solve_spd(num::gram(Xi), num::multiply_transposed(Xi, s.inf_mean));
            } else {
                const fit::Design inf{Xi, s.inf_y, fam, s.inf_offset, {}};
                table = posi::sandwich_ci(inf, c.alpha, posi::SmallSample::HcDf, M).table;
                targets = fit::kl_projection(fit::Design{Xi, s.inf_mean, fam, s.inf_offset, {}}).coef;
            }
        }
        const posi::RegressionMetrics rm = posi::regression_metrics(d.beta, M, table, targets);
        row = {0.0,
               static_cast<double>(rm.n_selected),
               rm.fcr,
               table.rows.empty() ? kNA : rm.avg_ci_length,
               rm.fsr,
               rm.power_sign,
               rm.power_selected,
               rm.precision_selected};
    } catch (const Error&) {
        row[0] = 1.0;
    }
    return row;
}

Vector multitest_method(const ExperimentConfig& c, const Vector& mu, const Vector& y, Method m,
                        dist::RngStream& rng)
{
    const bool poisson = c.experiment == Experiment::MultitestPoisson;
    const double null_mean = poisson ? 1.0 : 0.0;
    const std::size_t n = y.size();
    posi::RejectionSet rej;
    std::optional<posi::CiRow> agg;
    if (!poisson) {
        if (m == Method::Fission) {
            const auto res = posi::fission_multitest(y, 1.0, c.tau, c.alpha, c.q, rng);
            rej = res.rejections;
            agg = res.aggregate;
        } else {
            Vector p(n);
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = 1.0 - num::normal_cdf(y[i]);
            }
            rej = posi::bh_select(p, c.q);
            if (!rej.rejected.empty()) {
                agg = posi::aggregate_ci(y, rej.rejected, 1.0, INFINITY, c.alpha);
            }
        }
    } else {
        Vector sel(n);
        Vector inf(n);
        double thin = 1.0;
        if (m == Method::Fission) {
            const rules::FissionRule rule = rules::PoissonP1{c.fission_p};
            for (std::size_t i = 0; i < n; ++i) {
                const auto out = rules::fission(y[i], rule, rng);
                sel[i] = out.f[0];
                inf[i] = out.g[0];
            }
            thin = c.fission_p;
        } else {
            sel = y;
            inf = y;
        }
        const dist::Dist null = dist::Poisson{thin * null_mean};
        Vector p(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = posi::randomized_pvalue(sel[i], null, rng, posi::Tail::Upper);
        }
        rej = posi::bh_select(p, c.q);
        if (!rej.rejected.empty()) {
            Vector g;
            for (std::size_t i : rej.rejected) {
                g.push_back(inf[i]);
            }
            if (m == Method::Fission) {
                agg = posi::poisson_aggregate_ci(g, c.fission_p, c.alpha);
            } else {
                double sum = std::accumulate(g.begin(), g.end(), 0.0);
                const double scale = 2.0 * static_cast<double>(g.size());
                const double lo = sum > 0.0 ? num::chisq_quantile(c.alpha / 2.0, 2.0 * sum) / scale : 0.0;
                const double hi = num::chisq_quantile(1.0 - c.alpha / 2.0, 2.0 * sum + 2.0) / scale;
                agg = posi::CiRow{0, 2.0 * sum / scale, lo, hi};
            }
        }
    }
    const posi::MultitestMetrics mm = posi::multitest_metrics(mu, null_mean, rej, agg);
    const bool any = mm.n_rejected > 0;
    return {0.0, static_cast<double>(mm.n_rejected), mm.fdp, mm.power, any ? mm.miscoverage : kNA,
            any ? mm.ci_length : kNA};
}

Vector trend_method(const ExperimentConfig& c, const Vector& f0, const Vector& y, Method m,
                    dist::RngStream& rng)
{
    Vector row = nan_row(metric_names(c.experiment).size());
    try {
        const std::size_t n = y.size();
        Vector sel = y;
        Vector inf = y;
        double tau = INFINITY;
        if (m == Method::Fission) {
            const auto out = rules::fission(y, rules::GaussP1{c.tau, Matrix{{c.sigma * c.sigma}}}, rng);
            sel = out.f;
            inf = out.g;
            tau = c.tau;
        }
        trend::KnotOptions opt;
        opt.rule = c.knot_rule;
        opt.folds = c.folds;
        opt.sigma2 = c.sigma * c.sigma * (m == Method::Fission ? 1.0 + c.tau * c.tau : 1.0);
        const trend::KnotSelection ks = trend::knot_select(sel, c.k, opt);
        const Matrix A = trend::falling_factorial_basis(ks.fit.knots, c.k, n);
        const Vector target = trend::projected_mean(A, f0);
        const trend::Band pw = trend::pointwise_band(inf, A, Matrix{{c.sigma * c.sigma}}, tau, c.alpha);
        const trend::Band un = trend::uniform_band(inf, A, c.sigma, tau, c.alpha);
        std::size_t miss_pw = 0;
        bool miss_un = false;
        double len_pw = 0.0;
        double len_un = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            miss_pw += std::abs(target[i] - pw.centers[i]) > pw.halfwidths[i];
            miss_un = miss_un || std::abs(target[i] - un.centers[i]) > un.halfwidths[i];
            len_pw += 2.0 * pw.halfwidths[i];
            len_un += 2.0 * un.halfwidths[i];
        }
        const double dn = static_cast<double>(n);
        row = {0.0, static_cast<double>(ks.fit.knots.size()), static_cast<double>(miss_pw) / dn,
               len_pw / dn, miss_un ? 1.0 : 0.0, len_un / dn};
    } catch (const Error&) {
        row[0] = 1.0;
    }
    return row;
}

}  // namespace

const char* experiment_name(Experiment e) noexcept
{
    switch (e) {
    case Experiment::LinregLeverage: return "linreg_leverage";
    case Experiment::LinregIndep: return "linreg_indep";
    case Experiment::GlmPoisson: return "glm_poisson";
    case Experiment::GlmLogistic: return "glm_logistic";
    case Experiment::MultitestGauss: return "multitest_gauss";
    case Experiment::MultitestPoisson: return "multitest_poisson";
    case Experiment::TrendfilterGrid: return "trendfilter_grid";
    }
    return "unknown";
}

const char* method_name(Method m) noexcept
{
    switch (m) {
    case Method::Fission: return "fission";
    case Method::Split: return "split";
    case Method::FullTwice: return "full_twice";
    }
    return "unknown";
}

Experiment parse_experiment(std::string_view name)
{
    for (Experiment e : {Experiment::LinregLeverage, Experiment::LinregIndep, Experiment::GlmPoisson,
                         Experiment::GlmLogistic, Experiment::MultitestGauss,
                         Experiment::MultitestPoisson, Experiment::TrendfilterGrid}) {
        if (name == experiment_name(e)) {
            return e;
        }
    }
    config_error("experiment", "unknown experiment '" + std::string(name) + "'");
}

Method parse_method(std::string_view name)
{
    for (Method m : {Method::Fission, Method::Split, Method::FullTwice}) {
        if (name == method_name(m)) {
            return m;
        }
    }
    config_error("methods", "unknown method '" + std::string(name) + "'");
}

ExperimentConfig default_config(Experiment e)
{
    ExperimentConfig c;
    c.experiment = e;
    switch (e) {
    case Experiment::LinregLeverage:
        break;
    case Experiment::LinregIndep:
        c.n = 1000;
        c.p = 100;
        c.signal = 0.1;
        break;
    case Experiment::GlmPoisson:
        c.fission_p = 0.5;
        break;
    case Experiment::GlmLogistic:
        c.n = 1000;
        c.p = 100;
        c.signal = 0.3;
        c.fission_p = 0.2;
        break;
    case Experiment::MultitestGauss:
        c.signal = 2.0;
        c.tau = 0.5;
        c.trials = 250;
        c.methods = {Method::Fission, Method::FullTwice};
        break;
    case Experiment::MultitestPoisson:
        c.signal = 3.0;
        c.fission_p = 0.5;
        c.trials = 250;
        c.methods = {Method::Fission, Method::FullTwice};
        break;
    case Experiment::TrendfilterGrid:
        c.n = 200;
        c.sigma = 0.05;
        c.p_knot = 0.19;
        c.folds = 5;
        c.methods = {Method::Fission, Method::FullTwice};
        break;
    }
    return c;
}

void validate(const ExperimentConfig& c)
{
    const Experiment e = c.experiment;
    check(c.trials >= 1, "trials", "must be at least 1");
    check(c.alpha > 0.0 && c.alpha < 1.0, "alpha", "must lie in (0, 1)");
    check(c.q > 0.0 && c.q < 1.0, "q", "must lie in (0, 1)");
    check(c.tau > 0.0, "tau", "must be positive");
    check(c.fission_p > 0.0 && c.fission_p < 1.0, "fission_p", "must lie in (0, 1)");
    check(c.sigma > 0.0, "sigma", "must be positive");
    check(c.gamma >= 0.0, "gamma", "must be nonnegative");
    check(c.rho > -1.0 && c.rho < 1.0, "rho", "must lie in (-1, 1)");
    check(c.p_knot >= 0.0 && c.p_knot <= 1.0, "p_knot", "must lie in [0, 1]");
    check(c.k >= 0 && c.k <= 3, "k", "must lie in 0..3");
    check(c.grid >= 2, "grid", "must be at least 2");
    check(c.radius > 0.0, "radius", "must be positive");
    check(c.folds >= 2, "folds", "must be at least 2");
    check(!c.methods.empty(), "methods", "must name at least one method");
    if (is_regression(e)) {
        check(c.n >= 4, "n", "must be at least 4");
        const std::size_t need = (e == Experiment::LinregLeverage || e == Experiment::GlmPoisson) ? 18 : 100;
        if (c.p < need) {
            config_error("p", "must be at least " + std::to_string(need) + " for " + experiment_name(e));
        }
        check(e == Experiment::LinregIndep || c.rho == 0.0, "rho", "only linreg_indep uses correlated covariates");
    } else {
        for (Method m : c.methods) {
            if (m == Method::Split) {
                config_error("methods", std::string("split is not defined for ") + experiment_name(e));
            }
        }
    }
    if (e == Experiment::MultitestPoisson) {
        check(c.signal > 0.0, "signal", "non-null Poisson mean must be positive");
    }
    if (e == Experiment::TrendfilterGrid) {
        check(c.n >= static_cast<std::size_t>(c.k) + 2 + c.folds, "n", "too short for the trend order and folds");
    }
}

ExperimentConfig parse_config(std::istream& in, const ExperimentConfig& base)
{
    ExperimentConfig c = base;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string body = trim(line);
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            fail(Errc::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string val = trim(std::string_view(body).substr(eq + 1));
        if (val.empty()) {
            config_error(key, "missing value");
        }
        if (key == "experiment") {
            const Experiment e = parse_experiment(val);
            if (e != c.experiment) {
                config_error(key, "config names '" + val + "' but the run is " + experiment_name(c.experiment));
            }
        } else if (key == "n") {
            c.n = parse_uint(key, val);
        } else if (key == "p") {
            c.p = parse_uint(key, val);
        } else if (key == "signal") {
            c.signal = parse_real(key, val);
        } else if (key == "gamma") {
            c.gamma = parse_real(key, val);
        } else if (key == "rho") {
            c.rho = parse_real(key, val);
        } else if (key == "tau") {
            c.tau = parse_real(key, val);
        } else if (key == "fission_p") {
            c.fission_p = parse_real(key, val);
        } else if (key == "sigma") {
            c.sigma = parse_real(key, val);
        } else if (key == "q") {
            c.q = parse_real(key, val);
        } else if (key == "alpha") {
            c.alpha = parse_real(key, val);
        } else if (key == "trials") {
            c.trials = parse_uint(key, val);
        } else if (key == "seed") {
            c.seed = parse_uint(key, val);
        } else if (key == "methods") {
            c.methods = parse_methods(val);
        } else if (key == "p_knot") {
            c.p_knot = parse_real(key, val);
        } else if (key == "k") {
            const auto k = parse_uint(key, val);
            check(k <= 3, "k", "must lie in 0..3");
            c.k = static_cast<int>(k);
        } else if (key == "grid") {
            c.grid = parse_uint(key, val);
        } else if (key == "radius") {
            c.radius = parse_real(key, val);
        } else if (key == "folds") {
            c.folds = parse_uint(key, val);
        } else if (key == "knot_rule") {
            if (val == "cv_min") {
                c.knot_rule = trend::KnotRule::CvMin;
            } else if (val == "cv_1se") {
                c.knot_rule = trend::KnotRule::Cv1se;
            } else if (val == "sure") {
                c.knot_rule = trend::KnotRule::Sure;
            } else {
                config_error(key, "expected cv_min, cv_1se or sure");
            }
        } else {
            config_error(key, "unknown key");
        }
    }
    if (in.bad()) {
        fail(Errc::IoError, "failed reading config");
    }
    return c;
}

ExperimentConfig parse_config(std::istream& in)
{
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::optional<Experiment> e;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        std::string line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos = end == std::string::npos ? text.size() : end + 1;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const auto eq = line.find('=');
        if (eq != std::string::npos && trim(std::string_view(line).substr(0, eq)) == "experiment") {
            e = parse_experiment(trim(std::string_view(line).substr(eq + 1)));
        }
    }
    if (!e) {
        config_error("experiment", "missing");
    }
    std::istringstream again(text);
    return parse_config(again, default_config(*e));
}

void write_config(std::ostream& out, const ExperimentConfig& c)
{
    out << "experiment=" << experiment_name(c.experiment) << '\n'
        << "n=" << c.n << '\n'
        << "p=" << c.p << '\n'
        << "signal=" << format_double(c.signal) << '\n'
        << "gamma=" << format_double(c.gamma) << '\n'
        << "rho=" << format_double(c.rho) << '\n'
        << "tau=" << format_double(c.tau) << '\n'
        << "fission_p=" << format_double(c.fission_p) << '\n'
        << "sigma=" << format_double(c.sigma) << '\n'
        << "q=" << format_double(c.q) << '\n'
        << "alpha=" << format_double(c.alpha) << '\n'
        << "trials=" << c.trials << '\n'
        << "seed=" << c.seed << '\n'
        << "methods=";
    for (std::size_t i = 0; i < c.methods.size(); ++i) {
        out << (i ? "," : "") << method_name(c.methods[i]);
    }
    out << '\n'
        << "p_knot=" << format_double(c.p_knot) << '\n'
        << "k=" << c.k << '\n'
        << "grid=" << c.grid << '\n'
        << "radius=" << format_double(c.radius) << '\n'
        << "folds=" << c.folds << '\n'
        << "knot_rule=" << knot_rule_name(c.knot_rule) << '\n';
}

Vector leverage_row(const Matrix& X, double gamma)
{
    Vector out(X.cols(), 0.0);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        for (std::size_t j = 0; j < X.cols(); ++j) {
            out[j] = std::max(out[j], std::abs(X(i, j)));
        }
    }
    for (double& v : out) {
        v *= gamma;
    }
    return out;
}

Matrix toeplitz_cov(std::size_t p, double rho, std::size_t block)
{
    require(block >= 1, Errc::DomainError, "block size must be positive");
    Matrix s(p, p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            if (i / block == j / block) {
                const auto gap = static_cast<int>(i > j ? i - j : j - i);
                s(i, j) = gap == 0 ? 1.0 : std::pow(rho, gap);
            }
        }
    }
    return s;
}

Vector trend_mean(std::size_t n, double p_knot, dist::RngStream& rng)
{
    Vector f(n);
    double v = rng.uniform() - 0.5;
    double level = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0 && rng.uniform() < p_knot) {
            v = rng.uniform() - 0.5;
        }
        level += v;
        f[t] = level;
    }
    return f;
}

Vector true_beta(const ExperimentConfig& c)
{
    Vector b(c.p, 0.0);
    const double s = c.signal;
    switch (c.experiment) {
    case Experiment::LinregLeverage:
    case Experiment::GlmPoisson:
        b[0] = s;
        b[15] = s;
        b[16] = -s;
        b[17] = s;
        break;
    case Experiment::LinregIndep:
    case Experiment::GlmLogistic: {
        const double tail = c.experiment == Experiment::LinregIndep ? -s : 2.0 * s;
        b[0] = s;
        for (std::size_t j = 2; j <= 21; ++j) {
            b[j] = s;
        }
        for (std::size_t j = 91; j <= 99; ++j) {
            b[j] = tail;
        }
        break;
    }
    default:
        break;
    }
    return b;
}

Vector grid_means(const ExperimentConfig& c)
{
    const double null_mean = c.experiment == Experiment::MultitestPoisson ? 1.0 : 0.0;
    Vector mu(c.grid * c.grid, null_mean);
    const double step = 200.0 / static_cast<double>(c.grid - 1);
    for (std::size_t i = 0; i < c.grid; ++i) {
        for (std::size_t j = 0; j < c.grid; ++j) {
            const double x = -100.0 + step * static_cast<double>(i);
            const double y = -100.0 + step * static_cast<double>(j);
            if (x * x + y * y <= c.radius * c.radius) {
                mu[i * c.grid + j] = c.signal;
            }
        }
    }
    return mu;
}

std::vector<std::string> metric_names(Experiment e)
{
    if (is_regression(e)) {
        return {"failed", "n_selected", "fcr", "avg_ci_length", "fsr", "power_sign", "power_selected",
                "precision_selected"};
    }
    if (is_multitest(e)) {
        return {"failed", "n_rejected", "fdp", "power", "miscoverage", "ci_length"};
    }
    return {"failed", "n_knots", "fcr", "pointwise_length", "simult_type1", "uniform_length"};
}

std::vector<TrialRow> run_trial(const ExperimentConfig& c, std::size_t trial)
{
    const dist::RngStream root(c.seed, trial);
    dist::RngStream data = root.split(0);
    std::vector<TrialRow> out;
    auto emit = [&](Method m, Vector values) { out.push_back({trial, m, std::move(values)}); };

    if (is_regression(c.experiment)) {
        const RegressionData d = draw_regression(c, data);
        for (Method m : c.methods) {
            dist::RngStream rng = root.split(method_stream(m));
            emit(m, regression_method(c, d, m, rng));
        }
    } else if (is_multitest(c.experiment)) {
        const Vector mu = grid_means(c);
        Vector y(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) {
            y[i] = c.experiment == Experiment::MultitestPoisson
                       ? dist::sample_scalar(dist::Poisson{mu[i]}, data)
                       : mu[i] + data.normal();
        }
        for (Method m : c.methods) {
            dist::RngStream rng = root.split(method_stream(m));
            emit(m, multitest_method(c, mu, y, m, rng));
        }
    } else {
        const Vector f0 = trend_mean(c.n, c.p_knot, data);
        Vector y(c.n);
        for (std::size_t t = 0; t < c.n; ++t) {
            y[t] = f0[t] + c.sigma * data.normal();
        }
        for (Method m : c.methods) {
            dist::RngStream rng = root.split(method_stream(m));
            emit(m, trend_method(c, f0, y, m, rng));
        }
    }
    return out;
}

RunResult run(const ExperimentConfig& c, std::size_t threads)
{
    validate(c);
    RunResult r;
    r.config = c;
    std::vector<std::vector<TrialRow>> per(c.trials);
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, c.trials));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= c.trials) {
                return;
            }
            try {
                per[t] = run_trial(c, t);
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(c.trials);
                return;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    for (auto& rows : per) {
        for (auto& row : rows) {
            r.trials.push_back(std::move(row));
        }
    }
    r.summary = summarize(c, r.trials);
    return r;
}

std::vector<SummaryRow> summarize(const ExperimentConfig& c, const std::vector<TrialRow>& rows)
{
    const auto names = metric_names(c.experiment);
    std::vector<SummaryRow> out;
    for (Method m : c.methods) {
        for (std::size_t j = 0; j < names.size(); ++j) {
            double sum = 0.0;
            std::size_t count = 0;
            for (const TrialRow& r : rows) {
                if (r.method == m && !std::isnan(r.values[j])) {
                    sum += r.values[j];
                    ++count;
                }
            }
            SummaryRow s{m, names[j], kNA, kNA, count};
            if (count > 0) {
                s.mean = sum / static_cast<double>(count);
            }
            if (count > 1) {
                double ss = 0.0;
                for (const TrialRow& r : rows) {
                    if (r.method == m && !std::isnan(r.values[j])) {
                        ss += (r.values[j] - s.mean) * (r.values[j] - s.mean);
                    }
                }
                s.se = std::sqrt(ss / static_cast<double>(count - 1) / static_cast<double>(count));
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "NA";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_trials_csv(std::ostream& out, const RunResult& r)
{
    const auto names = metric_names(r.config.experiment);
    out << "trial,method";
    for (const auto& n : names) {
        out << ',' << n;
    }
    out << '\n';
    for (const TrialRow& row : r.trials) {
        out << row.trial << ',' << method_name(row.method);
        for (double v : row.values) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

void write_summary_csv(std::ostream& out, const RunResult& r)
{
    out << "experiment,method,metric,mean,se,count\n";
    for (const SummaryRow& s : r.summary) {
        out << experiment_name(r.config.experiment) << ',' << method_name(s.method) << ',' << s.metric
            << ',' << format_double(s.mean) << ',' << format_double(s.se) << ',' << s.count << '\n';
    }
}

void write_outputs(const std::string& dir, const RunResult& r)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        fail(Errc::IoError, "cannot create output directory '" + dir + "': " + ec.message());
    }
    auto open = [&](const char* name) {
        std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
        if (!f) {
            fail(Errc::IoError, "cannot open '" + dir + "/" + name + "' for writing");
        }
        return f;
    };
    {
        auto f = open("summary.csv");
        write_summary_csv(f, r);
    }
    {
        auto f = open("trials.csv");
        write_trials_csv(f, r);
    }
    {
        auto f = open("config_echo");
        write_config(f, r.config);
    }
}

}  // namespace fiss::sim
