#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fiss/distkit.hpp"
#include "fiss/modelfit.hpp"
#include "fiss/numkit.hpp"

namespace fiss::posi {

using num::Matrix;
using num::Vector;

enum class Target { BetaStar, BetaStarN, ProjectedMean, MuBar, MuIndividual };

const char* target_name(Target t) noexcept;

struct CiRow {
    std::size_t index = 0;
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct CiTable {
    std::vector<CiRow> rows;
    double level = 0.95;  ///< nominal coverage 1 − α
    Target target = Target::BetaStar;
};

struct RejectionSet {
    std::vector<std::size_t> rejected;  ///< ascending
    Vector pvalues;
    double q = 0.1;
};

/// Header plus one row per interval: index,estimate,lower,upper,target,level.
void write_csv(std::ostream& out, const CiTable& table, bool header = true);
/// Header plus one row per hypothesis: index,pvalue,rejected,level.
void write_csv(std::ostream& out, const RejectionSet& set, bool header = true);

struct SelectedModel {
    std::vector<std::size_t> indices;
    Matrix X_M;
};

/// Throws DomainError unless indices are unique, sorted and in range.
SelectedModel select_model(const Matrix& X, std::vector<std::size_t> indices);

/// (X_MᵀX_M)⁻¹X_MᵀΣX_M(X_MᵀX_M)⁻¹; a 1×1 Σ means σ²I.
Matrix ols_covariance(const Matrix& X_M, const Matrix& sigma);

/// Intervals for β*(M) from the g-part of Gaussian fission with tuning τ.
/// labels name the rows; empty means 0..|M|−1.
CiTable linear_ci(std::span<const double> gY, const Matrix& X_M, const Matrix& sigma, double tau,
                  double alpha, std::span<const std::size_t> labels = {});

struct SigmaEstimate {
    double sigma = 0.0;
    std::size_t residual_df = 0;
    bool low_df = false;  ///< set when fewer than five residual degrees of freedom remain
};

/// σ̂ from the residuals of the full least-squares fit. Throws
/// RankDeficientFullModel when n ≤ p or the full design is singular.
SigmaEstimate full_model_sigma(std::span<const double> Y, const Matrix& X_full);

struct EstVarSplit {
    Vector f;
    Vector g;
    SigmaEstimate sigma;
};

/// f = Y + σ̂τZ, g = Y − σ̂Z/τ with σ̂ from the full model.
EstVarSplit fission_estvar(std::span<const double> Y, const Matrix& X_full, double tau,
                           dist::RngStream& rng);

/// β̂ ± σ̂ z √((1+τ⁻²)[(X_MᵀX_M)⁻¹]kk) on the g-part of fission_estvar.
CiTable linear_ci_estvar(std::span<const double> gY, const Matrix& X_M, const SigmaEstimate& s,
                         double tau, double alpha, std::span<const std::size_t> labels = {});

enum class SmallSample { None, HcDf };

struct SandwichPieces {
    Matrix H;
    Matrix V;
    Matrix variance;  ///< H⁻¹VH⁻¹
};

struct SandwichResult {
    SandwichPieces pieces;
    CiTable table;
    fit::FitResult fit;
};

/// Quasi-likelihood intervals for β*_n(M). d.X is the selected design
/// (include a ones column for an intercept); d.y holds the g-parts and
/// d.offset absorbs the fission thinning. Throws SingularHessian.
SandwichResult sandwich_ci(const fit::Design& d, double alpha,
                           SmallSample correction = SmallSample::None,
                           std::span<const std::size_t> labels = {});

/// Sandwich pieces at fixed coefficients.
SandwichPieces sandwich_pieces(const fit::Design& d, std::span<const double> coef);

/// Benjamini–Hochberg step-up at level q.
RejectionSet bh_select(std::span<const double> pvalues, double q);

/// y_i ± σ z_{β/2} with β = |R|α/n for every rejected i. Throws EmptyRejectionSet.
CiTable by_ci(std::span<const double> y, std::span<const std::size_t> rejected, double sigma,
              double alpha);

/// One-sided p-value 1 − Φ(f / (σ√(1+τ²))).
double fission_pvalue(double f, double sigma, double tau);

struct MultitestResult {
    Vector f;
    Vector g;
    RejectionSet rejections;
    CiTable per_signal;            ///< target MuIndividual; empty when nothing is rejected
    std::optional<CiRow> aggregate;  ///< target MuBar; absent when nothing is rejected
};

/// Gaussian fission of every y_i, BH on the f-parts, intervals on the g-parts.
MultitestResult fission_multitest(std::span<const double> y, double sigma, double tau,
                                  double alpha, double q, dist::RngStream& rng);

/// Σg/|R| ± z σ √((1+τ⁻²)/|R|). Throws EmptyRejectionSet.
CiRow aggregate_ci(std::span<const double> g, std::span<const std::size_t> rejected, double sigma,
                   double tau, double alpha);

enum class Tail { Lower, Upper };

/// Y' = F(y)U + (1−U)F(y−) under the null (Lower), or 1 − Y' (Upper).
double randomized_pvalue(double y, const dist::Dist& null, double u, Tail tail = Tail::Lower);
double randomized_pvalue(double y, const dist::Dist& null, dist::RngStream& rng,
                         Tail tail = Tail::Lower);

/// χ² interval for the mean of μ over R from Poisson-thinned g-parts,
/// scaled by 1/(2|R|(1−p)). Throws EmptyRejectionSet.
CiRow poisson_aggregate_ci(std::span<const double> g_selected, double p, double alpha);

struct RegressionMetrics {
    double fcr = 0.0;
    double avg_ci_length = 0.0;
    double fsr = 0.0;
    double power_sign = 0.0;
    double power_selected = 0.0;
    double precision_selected = 0.0;
    std::size_t n_selected = 0;
};

/// beta: true coefficients over all p features; selected: M; table rows are
/// labeled by feature index; targets holds the projection target per row.
RegressionMetrics regression_metrics(std::span<const double> beta,
                                     std::span<const std::size_t> selected, const CiTable& table,
                                     std::span<const double> targets);

struct MultitestMetrics {
    double fdp = 0.0;
    double power = 0.0;
    double miscoverage = 0.0;  ///< 1 when μ̄ falls outside the aggregate interval
    double ci_length = 0.0;
    std::size_t n_rejected = 0;
};

/// Rejections are discoveries against null value mu_null.
MultitestMetrics multitest_metrics(std::span<const double> mu, double mu_null,
                                   const RejectionSet& r, const std::optional<CiRow>& aggregate);

}  // namespace fiss::posi
