#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <variant>

#include "fiss/distkit.hpp"
#include "fiss/numkit.hpp"

namespace fiss::rules {

using dist::Dist;
using dist::RngStream;
using num::Matrix;
using num::Vector;

/// Exponential family written as
///   p(x | θ₁, θ₂) = H(θ₁, θ₂) · exp{θ₁ᵀS(x) − θ₂ᵀA(x)} · base(x)
/// paired with a conjugate likelihood for one auxiliary draw
///   p(z | x) = h(z) · exp{S(x)ᵀT(z) − θ₃ᵀA(x)}.
/// After B draws the parameters update to (θ₁ + ΣT(zᵢ), θ₂ + B·θ₃).
struct ExpFamSpec {
    std::string name;
    double tau = 1.0;  ///< thinning scale carried by the gamma-type specs
    std::size_t dim1 = 0;
    std::size_t dim2 = 0;
    std::function<double(const Vector& th1, const Vector& th2)> log_H;
    std::function<Vector(const Vector& x)> S;
    std::function<Vector(const Vector& x)> A;
    std::function<double(const Vector& x)> log_base;
    std::function<Vector(double z)> T;
    Vector theta3;
    std::function<double(double z)> log_h;
    std::function<double(const Vector& x, RngStream& rng)> draw_z;
    /// Law of x at (θ₁, θ₂) as a distkit family.
    std::function<Dist(const Vector& th1, const Vector& th2)> law;
};

/// Throws InvalidSpec on missing pieces or inconsistent dimensions.
void validate(const ExpFamSpec& spec);

/// Gamma(α, β) with z ~ Poi(τx): θ₁ = α − 1, θ₂ = β.
ExpFamSpec gamma_spec(double tau = 1.0);
/// Exponential(θ) as the α = 1 gamma: θ₁ = 0, θ₂ = θ.
ExpFamSpec exponential_spec(double tau = 1.0);
enum class BetaSide { ThetaOne, OneTheta };
/// Beta(a, b) with z ~ Ber(x) (ThetaOne) or z ~ Ber(1 − x) (OneTheta):
/// θ₁ = (a − 1, b − 1), no θ₂.
ExpFamSpec beta_spec(BetaSide side);
/// Dirichlet(α) on d cells with z ~ Cat(x): θ₁ = α − 1, no θ₂.
ExpFamSpec dirichlet_spec(std::size_t d);

double spec_log_density(const ExpFamSpec& spec, const Vector& th1, const Vector& th2,
                        const Vector& x);
double spec_log_likelihood(const ExpFamSpec& spec, double z, const Vector& x);
/// Posterior parameters after observing zs.
std::pair<Vector, Vector> spec_posterior(const ExpFamSpec& spec, const Vector& th1,
                                         const Vector& th2, const Vector& zs);
/// log of ∏h(zᵢ) · H(θ₁, θ₂) / H(θ₁ + ΣT(zᵢ), θ₂ + Bθ₃).
double spec_marginal_log_pmf(const ExpFamSpec& spec, const Vector& th1, const Vector& th2,
                             const Vector& zs);

// Rules. Σ given as a 1×1 matrix means σ²·I at the observation's dimension.

struct GaussP1 { double tau = 1.0; Matrix sigma{{1.0}}; };
struct GaussP2CP { double tau = 1.0; Matrix sigma{{1.0}}; };
struct GaussP2General { Matrix sigma{{1.0}}; Matrix sigma0{{1.0}}; };
struct PoissonP1 { double p = 0.5; };
struct PoissonP2 { double p = 0.5; };
struct BernoulliP2 { double p = 0.25; };
struct BinomialP2 { double p = 0.5; std::int64_t n = 1; };
struct NegBinomialP2 { double p = 0.5; double r = 1.0; };
struct GammaCP { std::int64_t B = 1; double tau = 1.0; };
struct ExponentialCP { std::int64_t B = 1; double tau = 1.0; };
struct BetaCP { std::int64_t B = 1; BetaSide side = BetaSide::ThetaOne; };
struct DirichletCP { std::int64_t B = 1; };
/// Categories are 0..d−1; D-weights default to uniform when left empty.
struct CategoricalP2 { double p = 0.5; std::int64_t d = 2; Vector weights; };
struct ConjugateReversal { std::shared_ptr<const ExpFamSpec> spec; std::int64_t B = 1; };

using FissionRule = std::variant<GaussP1, GaussP2CP, GaussP2General, PoissonP1, PoissonP2,
                                 BernoulliP2, BinomialP2, NegBinomialP2, GammaCP, ExponentialCP,
                                 BetaCP, DirichletCP, CategoricalP2, ConjugateReversal>;

std::string rule_name(const FissionRule& rule);
/// Throws InvalidTuning when a tuning parameter leaves its open domain.
void validate(const FissionRule& rule);

struct FissionOutput {
    Vector f;
    Vector g;
    Vector z;  ///< realized auxiliary randomness
    FissionRule rule;
};

FissionOutput fission(const Vector& x, const FissionRule& rule, RngStream& rng);
FissionOutput fission(double x, const FissionRule& rule, RngStream& rng);
/// Generic conjugate-prior constructor: f = B i.i.d. draws from p(z | x), g = x.
FissionOutput conjugate_reversal(const ExpFamSpec& spec, std::int64_t B, const Vector& x,
                                 RngStream& rng);

Vector reconstruct(const Vector& f, const Vector& g, const FissionRule& rule);

// Parameter layout θ for marginal_of_f / ConditionalFamily:
//   Gaussian rules: μ (same length as x)
//   PoissonP1/P2: μ            BernoulliP2, BinomialP2, NegBinomialP2: θ
//   GammaCP: (α, β)            ExponentialCP: θ (rate)
//   BetaCP: θ                  DirichletCP: α (length d)
//   CategoricalP2: class probabilities
//   ConjugateReversal: θ₁ followed by θ₂

/// Law of one element of f. Multi-draw rules (GammaCP, ExponentialCP with
/// B > 1) report the per-element law.
Dist marginal_of_f(const FissionRule& rule, const Vector& theta);
/// Joint log pmf/pdf of the whole f-part, available for every rule.
double marginal_log_density(const FissionRule& rule, const Vector& theta, const Vector& f);

/// Law of g(X) given the observed f(X), as a function of θ.
class ConditionalFamily {
  public:
    ConditionalFamily(FissionRule rule, Vector f_observed);

    const FissionRule& rule() const noexcept { return rule_; }
    const Vector& f_observed() const noexcept { return f_; }

    Dist at(const Vector& theta) const;
    double log_density(const Vector& theta, const Vector& g) const;

  private:
    FissionRule rule_;
    Vector f_;
};

ConditionalFamily conditional_of_g(const FissionRule& rule, const Vector& f_observed);

using Record = std::map<std::string, std::string>;
/// Flat key-value form {tag, params...}. Gaussian covariances must be scalar.
Record to_record(const FissionRule& rule);
FissionRule from_record(const Record& record);

}  // namespace fiss::rules
