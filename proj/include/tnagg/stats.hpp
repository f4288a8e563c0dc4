#pragma once

#include <cstdint>
#include <random>

namespace tnagg {

// Lower bound applied to every scale parameter. A collapsed sigma turns the
// truncated-normal likelihood into a point mass.
inline constexpr double kSigmaFloor = 1e-4;

// Normal distribution truncated to the closed interval [0, 1].
struct TruncNormParams {
    double mu = 0.5;
    double sigma = 0.1;

    static constexpr double lo = 0.0;
    static constexpr double hi = 1.0;

    // Throws DomainError unless mu is finite and sigma >= kSigmaFloor.
    void validate() const;

    bool operator==(const TruncNormParams&) const = default;
};

// Explicitly threaded generator state for all sampling.
using Rng = std::mt19937_64;

// Uniform draw on the open interval (0, 1) with 53 random bits; portable
// across standard library implementations.
double uniform01(Rng& rng);

// Deterministic, well-mixed 64-bit value derived from a seed and a stream
// label. Used to split one seed into independent generators.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

double normal_pdf(double x, double mu, double sigma);
double normal_log_pdf(double x, double mu, double sigma);
double normal_cdf(double x, double mu, double sigma);

// Standard normal CDF and its complement, both accurate in the far tails.
double std_normal_cdf(double z);
double std_normal_sf(double z);

// Inverse standard normal CDF for p in (0, 1).
double std_normal_quantile(double p);

// Probability mass of N(mu, sigma^2) on [0, 1], evaluated on whichever tail
// keeps precision.
double tn_mass(const TruncNormParams& p);

double tn_pdf(double a, const TruncNormParams& p);
double tn_log_pdf(double a, const TruncNormParams& p);
double tn_cdf(double a, const TruncNormParams& p);
double tn_mean(const TruncNormParams& p);

// Inverse-CDF draw from TND(mu, sigma^2, 0, 1).
double tn_sample(const TruncNormParams& p, Rng& rng);

// log(exp(a) + exp(b)) without overflow; handles -inf operands.
double log_sum_exp(double a, double b);

}  // namespace tnagg
