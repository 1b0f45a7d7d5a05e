#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fiss/numkit.hpp"

namespace fiss::dist {

using num::Matrix;
using num::Vector;

/// Counter-based 64-bit generator keyed by (seed, stream id).
///
/// Draw i of a stream is mix(key + i·γ), so two streams with the same key
/// produce identical sequences and a stream can be split into children
/// without touching its own counter.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double normal() noexcept;
    /// Child stream derived from this stream's key and `child`.
    RngStream split(std::uint64_t child) const;

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Families. Discrete outcomes are stored as doubles holding integers;
// categorical outcomes are 0-based indices.

struct Normal { double mu = 0.0; double sigma = 1.0; };
struct MvNormalDiag { Vector mu; Vector sd; };
/// Multivariate normal N(mu, L·Lᵀ) given the lower Cholesky factor.
struct MvNormal { Vector mu; Matrix chol; };
struct Poisson { double mu = 1.0; };
struct Binomial { std::int64_t n = 1; double p = 0.5; };
struct Bernoulli { double p = 0.5; };
/// pmf C(k+r−1, k)·θ^r·(1−θ)^k on k = 0, 1, ...
struct NegBinomial { double r = 1.0; double theta = 0.5; };
struct Gamma { double shape = 1.0; double rate = 1.0; };
struct Exponential { double rate = 1.0; };
struct Beta { double a = 1.0; double b = 1.0; };
struct Dirichlet { Vector alpha; };
struct Categorical { Vector probs; };
struct Multinomial { std::int64_t n = 1; Vector probs; };
/// pmf θ(1−θ)^k on k = 0, 1, ...
struct Geometric { double theta = 0.5; };
struct BetaBinomial { std::int64_t n = 1; double a = 1.0; double b = 1.0; };
struct DiscreteUniform { std::int64_t lo = 0; std::int64_t hi = 1; };
struct DirichletMultinomial { std::int64_t n = 1; Vector alpha; };

using Dist = std::variant<Normal, MvNormalDiag, MvNormal, Poisson, Binomial, Bernoulli,
                          NegBinomial, Gamma, Exponential, Beta, Dirichlet, Categorical,
                          Multinomial, Geometric, BetaBinomial, DiscreteUniform,
                          DirichletMultinomial>;

std::string family_name(const Dist& d);
/// Throws InvalidParameters when the parameters leave the family's domain.
void validate(const Dist& d);

bool is_discrete(const Dist& d) noexcept;
/// True for families whose draws are scalars.
bool is_univariate(const Dist& d) noexcept;
std::size_t dimension(const Dist& d) noexcept;

Vector sample(const Dist& d, RngStream& rng);
/// Scalar draw; requires a univariate family.
double sample_scalar(const Dist& d, RngStream& rng);

double log_density(const Dist& d, std::span<const double> x);
double log_density(const Dist& d, double x);
double density(const Dist& d, double x);

/// P(X ≤ x) for univariate families.
double cdf(const Dist& d, double x);
/// P(X < x); equals cdf for continuous families.
double cdf_left(const Dist& d, double x);

double mean(const Dist& d);
double variance(const Dist& d);

/// Support points and pmf of a univariate discrete law. Unbounded supports
/// are cut once the accumulated mass exceeds 1 − tail.
std::vector<std::pair<std::int64_t, double>> enumerate_pmf(const Dist& d, double tail = 1e-12);

/// log C(n, k) for real n ≥ k ≥ 0.
double log_choose(double n, double k);

}  // namespace fiss::dist
