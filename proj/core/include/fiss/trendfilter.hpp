#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fiss/distkit.hpp"
#include "fiss/numkit.hpp"

namespace fiss::trend {

using num::Matrix;
using num::Vector;

/// D^(k+1), (n−k−1)×n. Throws TooShort unless n ≥ k+2.
Matrix diff_matrix(std::size_t n, int k);

/// Applies D^(k+1) without forming it.
Vector apply_diff(std::span<const double> x, int k);

struct TrendFit {
    Vector fitted;
    double lambda = 0.0;
    int k = 1;
    /// Knot positions as 0-based time indices, read off D^(k+1)x̂ by
    /// knots_of: a nonzero row r places a knot at r + k.
    std::vector<std::size_t> knots;
    int iterations = 0;
    double objective = 0.0;
};

/// ½‖y−x‖² + λ‖D^(k+1)x‖₁.
double trend_objective(std::span<const double> y, std::span<const double> x, int k, double lambda);

struct AdmmOptions {
    int max_iter = 20000;
    double abs_tol = 1e-10;
    double rel_tol = 1e-9;
    /// Initial ρ; zero means ρ = λ.
    double rho = 0.0;
    /// Every 10 iterations, finish the dual problem by projected Newton from
    /// the current ADMM iterate and stop if the result is optimal.
    bool polish = true;
};

/// ADMM on the split z = D^(k+1)x with residual-balancing ρ and dual
/// polishing. Throws NoConvergence when the iteration cap is reached.
TrendFit trendfilter_admm(std::span<const double> y, int k, double lambda,
                          const AdmmOptions& opt = {});

/// Smallest λ at which D^(k+1)x̂ vanishes.
double trend_lambda_max(std::span<const double> y, int k);
/// Log-spaced descending grid from λ_max to ratio·λ_max.
Vector trend_lambda_grid(std::span<const double> y, int k, std::size_t n_lambda = 30,
                         double ratio = 1e-4);

/// Polynomial columns 1, t, …, t^k followed by one falling-factorial column
/// per knot: ∏_{l=1..k}(t − (κ − k + l)) for t > κ, zero otherwise, with
/// t = 0..n−1. For k ≤ 1 this is the truncated power basis. Duplicate knots
/// are dropped. Throws RankDeficientBasis for knots outside [k, n−2] or a
/// rank-deficient result.
Matrix falling_factorial_basis(std::span<const std::size_t> knots, int k, std::size_t n);

enum class BandKind { Pointwise, Uniform };

struct Band {
    Vector centers;
    Vector halfwidths;
    BandKind kind = BandKind::Pointwise;
    double multiplier = 0.0;  ///< z_{α/2} or c(α)
    double gamma = 0.0;       ///< tube length |γ|; uniform bands only
    double level = 0.9;
};

/// μ̂ᵢ ± z √((1+τ⁻²) aᵢᵀ(AᵀA)⁻¹AᵀΣA(AᵀA)⁻¹aᵢ); a 1×1 Σ means σ²I.
/// Throws SingularBasis.
Band pointwise_band(std::span<const double> gY, const Matrix& A, const Matrix& sigma, double tau,
                    double alpha);

struct Multiplier {
    double c = 0.0;
    double gamma = 0.0;
};

/// Tube length Σ‖ãᵢ₊₁ − ãᵢ‖ with ãᵢ = (AᵀA)^{-1/2}aᵢ / ‖(AᵀA)^{-1/2}aᵢ‖.
double tube_length(const Matrix& A);

/// Left side of the multiplier equation at c: Gaussian form, or the t form
/// with df degrees of freedom.
double multiplier_lhs(double c, double gamma, std::optional<double> df = std::nullopt);

/// Root of multiplier_lhs(c) = α/2 by bisection; 0 when the left side at
/// c = 0 is already at most α/2.
double solve_multiplier(double gamma, double alpha, std::optional<double> df = std::nullopt);
Multiplier uniform_multiplier(const Matrix& A, double alpha, std::optional<double> df = std::nullopt);

/// μ̂ᵢ ± c σ √((1+τ⁻²) aᵢᵀ(AᵀA)⁻¹aᵢ). With t_df set, c comes from the t form.
Band uniform_band(std::span<const double> gY, const Matrix& A, double sigma, double tau,
                  double alpha, std::optional<double> t_df = std::nullopt);

/// Projection of f0 onto the column space of A: the band's coverage target.
Vector projected_mean(const Matrix& A, std::span<const double> f0);

/// σ̂² = Σ(y_{t+1} − y_t)² / (2(n−1)). Throws TooShort for n < 2.
double estimate_sigma_differences(std::span<const double> y);

/// Knots read from D^(k+1)x with threshold 1e-6·max(1, ‖x‖∞).
std::vector<std::size_t> knots_of(std::span<const double> x, int k);

enum class KnotRule { CvMin, Cv1se, Sure };
enum class SureDf { Knots, KnotsPlusOne };

struct KnotOptions {
    KnotRule rule = KnotRule::CvMin;
    double sigma2 = 1.0;  ///< noise variance used by SURE
    SureDf sure_df = SureDf::Knots;
    std::size_t folds = 5;
    std::size_t n_lambda = 30;
    double ratio = 1e-4;
};

struct KnotSelection {
    TrendFit fit;  ///< refit on all of the input at the chosen λ
    Vector lambdas;
    Vector scores;     ///< CV mean error or SURE per λ
    Vector score_se;   ///< CV standard error; empty for SURE
    std::size_t chosen = 0;
    SureDf sure_df = SureDf::Knots;
};

/// Chooses λ on the selection data only. CV holds out every folds-th point
/// (never the endpoints) and predicts by linear interpolation.
KnotSelection knot_select(std::span<const double> f_part, int k, const KnotOptions& opt = {});

/// SURE = (1/n)‖y − μ̂‖² + 2σ²·df/n.
double sure_score(std::span<const double> y, std::span<const double> fit, double sigma2,
                  std::size_t df);

struct Series {
    Vector t;
    Vector y;
};

/// Two numeric columns separated by commas, tabs, semicolons or spaces. A
/// leading non-numeric line is treated as a header; '#' starts a comment.
/// Throws IoError on malformed rows.
Series read_series(std::istream& in);

/// Header t,fit,lower,upper,kind then one row per point.
void write_band_csv(std::ostream& out, std::span<const double> t, const Band& band);

}  // namespace fiss::trend
