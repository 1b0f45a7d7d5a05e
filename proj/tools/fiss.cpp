#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fiss/error.hpp"
#include "fiss/fission.hpp"
#include "fiss/simharness.hpp"
#include "fiss/trendfilter.hpp"

namespace {

using namespace fiss;

constexpr int kConfigExit = 2;

struct SimArgs {
    std::string experiment;
    std::string config;
    std::string out;
    std::optional<std::size_t> trials;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
};

struct BandArgs {
    std::string input;
    std::string out;
    int k = 1;
    double tau = 1.0;
    std::optional<double> sigma;
    double alpha = 0.1;
    std::string kind = "pointwise";
    std::string rule = "cv_min";
    std::size_t folds = 5;
    std::uint64_t seed = 1;
};

int run_sim(const SimArgs& a)
{
    const sim::Experiment e = sim::parse_experiment(a.experiment);
    std::ifstream in(a.config);
    if (!in) {
        fail(Errc::ConfigError, "cannot open config file '" + a.config + "'");
    }
    sim::ExperimentConfig c = sim::parse_config(in, sim::default_config(e));
    if (a.trials) {
        c.trials = *a.trials;
    }
    if (a.seed) {
        c.seed = *a.seed;
    }
    sim::validate(c);
    const sim::RunResult r = sim::run(c, a.threads);
    sim::write_outputs(a.out, r);
    sim::write_summary_csv(std::cout, r);
    return 0;
}

trend::KnotRule knot_rule(const std::string& s)
{
    if (s == "cv_min") {
        return trend::KnotRule::CvMin;
    }
    if (s == "cv_1se") {
        return trend::KnotRule::Cv1se;
    }
    if (s == "sure") {
        return trend::KnotRule::Sure;
    }
    fail(Errc::ConfigError, "rule: expected cv_min, cv_1se or sure");
}

int run_band(const BandArgs& a)
{
    std::ifstream in(a.input);
    if (!in) {
        fail(Errc::IoError, "cannot open input '" + a.input + "'");
    }
    const trend::Series s = trend::read_series(in);
    const double sigma = a.sigma ? *a.sigma : std::sqrt(trend::estimate_sigma_differences(s.y));
    if (!(sigma > 0.0)) {
        fail(Errc::ConfigError, "sigma must be positive");
    }
    dist::RngStream rng(a.seed, 0);
    const auto parts = rules::fission(s.y, rules::GaussP1{a.tau, num::Matrix{{sigma * sigma}}}, rng);

    trend::KnotOptions opt;
    opt.rule = knot_rule(a.rule);
    opt.folds = a.folds;
    opt.sigma2 = sigma * sigma * (1.0 + a.tau * a.tau);
    const trend::KnotSelection ks = trend::knot_select(parts.f, a.k, opt);
    const num::Matrix A = trend::falling_factorial_basis(ks.fit.knots, a.k, s.y.size());
    const trend::Band band =
        a.kind == "uniform" ? trend::uniform_band(parts.g, A, sigma, a.tau, a.alpha)
                            : trend::pointwise_band(parts.g, A, num::Matrix{{sigma * sigma}}, a.tau, a.alpha);

    std::cerr << "knots " << ks.fit.knots.size() << ", sigma " << sigma << ", multiplier "
              << band.multiplier << '\n';
    if (a.out.empty() || a.out == "-") {
        trend::write_band_csv(std::cout, s.t, band);
        return 0;
    }
    std::ofstream out(a.out);
    if (!out) {
        fail(Errc::IoError, "cannot open output '" + a.out + "'");
    }
    trend::write_band_csv(out, s.t, band);
    if (!out) {
        fail(Errc::IoError, "failed writing '" + a.out + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Data fission simulations and trend-filter bands"};
    app.require_subcommand(1);

    SimArgs sa;
    auto* simc = app.add_subcommand("sim", "Run a simulation study and write summary.csv, trials.csv and config_echo");
    simc->add_option("experiment", sa.experiment,
                     "linreg_leverage, linreg_indep, glm_poisson, glm_logistic, multitest_gauss, "
                     "multitest_poisson or trendfilter_grid")
        ->required();
    simc->add_option("--config", sa.config, "key = value config file")->required();
    simc->add_option("--out", sa.out, "output directory")->required();
    simc->add_option("--trials", sa.trials, "override the trial count");
    simc->add_option("--seed", sa.seed, "override the seed");
    simc->add_option("--threads", sa.threads, "worker threads")->check(CLI::PositiveNumber);

    BandArgs ba;
    auto* bandc = app.add_subcommand("band", "Fission trend-filter confidence band for a two-column series");
    bandc->add_option("input", ba.input, "t,y file")->required();
    bandc->add_option("--out", ba.out, "output CSV, '-' for stdout");
    bandc->add_option("--k", ba.k, "trend order")->check(CLI::Range(0, 3));
    bandc->add_option("--tau", ba.tau, "fission scale")->check(CLI::PositiveNumber);
    bandc->add_option("--sigma", ba.sigma, "noise sd; estimated from first differences if omitted");
    bandc->add_option("--alpha", ba.alpha, "1 - band level")->check(CLI::Range(0.0, 1.0));
    bandc->add_option("--kind", ba.kind, "pointwise or uniform")
        ->check(CLI::IsMember({"pointwise", "uniform"}));
    bandc->add_option("--rule", ba.rule, "cv_min, cv_1se or sure");
    bandc->add_option("--folds", ba.folds, "cross-validation folds");
    bandc->add_option("--seed", ba.seed, "fission seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simc->parsed()) {
            return run_sim(sa);
        }
        return run_band(ba);
    } catch (const Error& e) {
        std::cerr << "fiss: " << e.what() << '\n';
        return e.code() == Errc::ConfigError ? kConfigExit : 1;
    } catch (const std::exception& e) {
        std::cerr << "fiss: " << e.what() << '\n';
        return 1;
    }
}
