#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fiss/distkit.hpp"
#include "fiss/numkit.hpp"
#include "fiss/trendfilter.hpp"

namespace fiss::sim {

using num::Matrix;
using num::Vector;

enum class Experiment {
    LinregLeverage,
    LinregIndep,
    GlmPoisson,
    GlmLogistic,
    MultitestGauss,
    MultitestPoisson,
    TrendfilterGrid,
};

enum class Method { Fission, Split, FullTwice };

const char* experiment_name(Experiment e) noexcept;
const char* method_name(Method m) noexcept;
/// Throws ConfigError for unknown names.
Experiment parse_experiment(std::string_view name);
Method parse_method(std::string_view name);

struct ExperimentConfig {
    Experiment experiment = Experiment::LinregLeverage;
    std::size_t n = 16;
    std::size_t p = 20;
    double signal = 0.2;       ///< S_Δ, or the non-null mean for multiple testing
    double gamma = 4.0;        ///< leverage multiplier
    double rho = 0.0;          ///< Toeplitz correlation
    double tau = 1.0;          ///< Gaussian fission scale
    double fission_p = 0.5;    ///< Poisson thinning or Bernoulli flip probability
    double sigma = 1.0;        ///< noise sd
    double q = 0.2;            ///< BH target level
    double alpha = 0.2;        ///< 1 − CI level
    std::size_t trials = 500;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::Fission, Method::Split, Method::FullTwice};
    double p_knot = 0.19;      ///< trend slope-change probability
    int k = 1;                 ///< trend order
    std::size_t grid = 25;     ///< multiple-testing grid side
    double radius = 40.0;      ///< non-null disc radius on [−100, 100]²
    std::size_t folds = 10;
    trend::KnotRule knot_rule = trend::KnotRule::CvMin;
};

/// Full-scale defaults for one experiment.
ExperimentConfig default_config(Experiment e);

/// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& c);

/// Flat `key = value` lines; '#' starts a comment. Keys override `base`.
/// Throws ConfigError on unknown keys or malformed values.
ExperimentConfig parse_config(std::istream& in, const ExperimentConfig& base);
/// Reads `experiment` from the text if present, then applies the rest on
/// top of that experiment's defaults.
ExperimentConfig parse_config(std::istream& in);

/// Every field as `key=value`, one per line, in a fixed order.
void write_config(std::ostream& out, const ExperimentConfig& c);

// Data generators.

/// γ·(‖X₁‖∞, …, ‖X_p‖∞) over the rows of X.
Vector leverage_row(const Matrix& X, double gamma);
/// Block-diagonal covariance with Toeplitz blocks ρ^|i−j| of size `block`.
Matrix toeplitz_cov(std::size_t p, double rho, std::size_t block = 20);
/// Trend f₀(t), t = 1..n, as a random walk in slope: v₁ ~ U[−½, ½], then
/// with probability p_knot the slope is redrawn, else kept.
Vector trend_mean(std::size_t n, double p_knot, dist::RngStream& rng);
/// True coefficients for a regression experiment.
Vector true_beta(const ExperimentConfig& c);
/// Means on the grid: `signal` inside the disc, the null value outside.
Vector grid_means(const ExperimentConfig& c);

/// Metric names, in column order, for an experiment.
std::vector<std::string> metric_names(Experiment e);

struct TrialRow {
    std::size_t trial = 0;
    Method method = Method::Fission;
    Vector values;  ///< aligned with metric_names; NaN marks not available
};

struct SummaryRow {
    Method method = Method::Fission;
    std::string metric;
    double mean = 0.0;
    double se = 0.0;  ///< sd / √count; NaN when count < 2
    std::size_t count = 0;
};

struct RunResult {
    ExperimentConfig config;
    std::vector<TrialRow> trials;  ///< ordered by trial, then by method
    std::vector<SummaryRow> summary;
};

/// One trial for every configured method. Trial t draws from the stream
/// (seed, t), so results do not depend on scheduling.
std::vector<TrialRow> run_trial(const ExperimentConfig& c, std::size_t trial);

/// All trials on `threads` workers; 0 means one.
RunResult run(const ExperimentConfig& c, std::size_t threads = 1);

/// Means and standard errors over the available values, in trial order.
std::vector<SummaryRow> summarize(const ExperimentConfig& c, const std::vector<TrialRow>& rows);

/// trial,method,<metrics...>; NA for missing values.
void write_trials_csv(std::ostream& out, const RunResult& r);
/// experiment,method,metric,mean,se,count.
void write_summary_csv(std::ostream& out, const RunResult& r);

/// Writes summary.csv, trials.csv and config_echo into `dir`, creating it
/// if needed. Throws IoError.
void write_outputs(const std::string& dir, const RunResult& r);

/// Shortest round-trip text for a double; "NA" for NaN.
std::string format_double(double v);

}  // namespace fiss::sim
