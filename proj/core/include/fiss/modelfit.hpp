#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fiss/distkit.hpp"
#include "fiss/numkit.hpp"

namespace fiss::fit {

using num::Matrix;
using num::Vector;

enum class Family { Gaussian, Poisson, Binomial };

const char* family_name(Family f) noexcept;

/// Regression problem. Empty offset means zero; empty weights mean one.
/// X is used as given: add a column of ones for an intercept.
struct Design {
    Matrix X;
    Vector y;
    Family family = Family::Gaussian;
    Vector offset;
    Vector weights;
};

/// Throws DimensionMismatch or DomainError on malformed input.
void validate(const Design& d);

/// Mean function of the canonical link.
double inverse_link(Family f, double eta);
/// Variance function evaluated at the mean.
double variance_fn(Family f, double mu);
/// Unit deviance summed with prior weights.
double deviance(Family f, std::span<const double> y, std::span<const double> mu,
                std::span<const double> weights = {});

struct FitResult {
    Vector coef;
    Vector eta;     ///< linear predictor including the offset
    Vector fitted;  ///< means m
    bool converged = false;
    int iterations = 0;
    double deviance = 0.0;
};

/// β̂ = (XᵀWX)⁻¹XᵀW(y − offset). Throws SingularDesign.
FitResult ols(const Design& d);

/// Iteratively reweighted least squares for the canonical link.
/// Throws NoConvergence after 100 iterations, SeparationDetected when a
/// logistic linear predictor exceeds 30 in magnitude, SingularDesign.
FitResult glm_irls(const Design& d);

/// Root of the expected score when y holds exact conditional means rather
/// than draws; the GLM target under misspecification.
FitResult kl_projection(const Design& d);

/// Xᵀ W (y − m) at the given coefficients.
Vector glm_score(const Design& d, std::span<const double> coef);

struct LassoResult {
    Vector lambda;        ///< descending, possibly truncated where the path saturates
    Matrix beta;          ///< rows = λ, columns = slopes on the original scale
    Vector intercept;     ///< per λ, original scale
    Vector dev_ratio;     ///< fraction of null deviance explained
    Vector cv_mean;       ///< empty unless produced by cv_select
    Vector cv_se;
    double lambda_min = 0.0;
    double lambda_1se = 0.0;
    std::size_t index_min = 0;
    std::size_t index_1se = 0;
    std::vector<std::size_t> selected;      ///< support at lambda_1se
    std::vector<std::size_t> selected_min;  ///< support at lambda_min
};

/// max_j |x̃ⱼᵀ(y − m₀)| / n on standardized columns, where m₀ is the
/// intercept-only fit.
double lambda_max(const Design& d);
/// Log-spaced grid from λ_max down to ratio·λ_max.
Vector lambda_grid(const Design& d, std::size_t n_lambda = 100, double ratio = 1e-3);

/// Coordinate-descent lasso path. Columns are standardized internally with
/// the population sd; the intercept is free. X must not contain an
/// intercept column.
LassoResult lasso_path(const Design& d, const Vector& lambdas);

/// Largest KKT violation at path position k, on the standardized scale.
double max_kkt_violation(const Design& d, const LassoResult& path, std::size_t k);

std::vector<std::size_t> support_at(const LassoResult& path, std::size_t k);

/// K-fold CV over the grid with the min and 1-SE rules. Folds come from a
/// seeded shuffle; the error is mean squared error for the Gaussian family
/// and mean deviance otherwise.
LassoResult cv_select(const Design& d, const Vector& lambdas, std::size_t folds,
                      dist::RngStream& rng);

}  // namespace fiss::fit
