#pragma once

#include <cstddef>

#include "fiss/distkit.hpp"
#include "fiss/fission.hpp"

namespace fiss::info {

/// Share of Fisher information spent on selection and the matching tuning.
struct InfoBudget {
    double fraction = 0.5;
    double tuning = 1.0;  ///< τ for Gaussian fission, p for Poisson thinning
};

/// τ with 1/(1+τ²) = a.
double tau_for_fraction(double a);
double fraction_for_tau(double tau);
/// Poisson thinning keeps fraction p of the information in f.
double poisson_fraction(double p);

InfoBudget gaussian_budget(double a);
InfoBudget poisson_budget(double a);

struct AdditivityReport {
    // Closed forms for a single observation.
    double info_x = 0.0;
    double info_f = 0.0;
    double info_g_given_f = 0.0;
    // Monte Carlo estimates from squared scores of the module's laws.
    double mc_info_x = 0.0;
    double mc_info_f = 0.0;
    double mc_info_g_given_f = 0.0;
    /// |I_X − I_f − E[I_{g|f}]| / I_X from the Monte Carlo estimates.
    double residual = 0.0;
    /// Four standard errors of the residual.
    double band = 0.0;
};

/// Checks I_X = I_f + E[I_{g|f}] for GaussP1 (θ = μ, σ² from the rule) or
/// PoissonP1 (θ = μ). Other rules raise UnsupportedRule.
AdditivityReport info_additivity_check(const rules::FissionRule& rule, double theta,
                                       std::size_t n_mc, dist::RngStream& rng);

enum class SplitFamily { Gaussian, Poisson };

struct VarianceComparison {
    double fission_variance = 0.0;  ///< mean within-replication variance of the f-based MLE
    double split_variance = 0.0;    ///< same for the MLE on an a-fraction subsample
    double ratio = 0.0;             ///< fission / split
    double fission_spread = 0.0;    ///< across-replication variance of the f-based MLE
    double split_spread = 0.0;      ///< across-replication variance of the split MLE
};

/// Monte Carlo comparison of the mean estimator built from fissioned data
/// against the one built from a subsample holding the same information share.
VarianceComparison compare_split_and_fission(SplitFamily family, double a, double mean,
                                             std::size_t n, std::size_t replications,
                                             dist::RngStream& rng);

}  // namespace fiss::info
