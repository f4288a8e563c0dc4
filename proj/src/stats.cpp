#include "tnagg/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tnagg/errors.hpp"

namespace tnagg {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kMinMass = 1e-300;

void require_positive_sigma(double sigma, const char* where) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError(std::string(where) + ": sigma must be positive and finite, got " +
                          std::to_string(sigma));
    }
}

void require_unit_interval(double a, const char* where) {
    if (!(a >= 0.0 && a <= 1.0)) {
        throw DomainError(std::string(where) + ": value " + std::to_string(a) +
                          " outside [0, 1]");
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Rational approximation (Acklam), relative error about 1.2e-9 before
// refinement.
double quantile_initial(double p) {
    static constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                                -2.759285104469687e+02, 1.383577518672690e+02,
                                                -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                                -1.556989798598866e+02, 6.680131188771972e+01,
                                                -1.328068155288572e+01};
    static constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                                -2.400758277161838e+00, -2.549732539343734e+00,
                                                4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                                2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    auto tail = [&](double q) {
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    };

    if (p < p_low) {
        return tail(std::sqrt(-2.0 * std::log(p)));
    }
    if (p > 1.0 - p_low) {
        return -tail(std::sqrt(-2.0 * std::log1p(-p)));
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

void TruncNormParams::validate() const {
    if (!std::isfinite(mu)) {
        throw DomainError("truncated normal: mu must be finite");
    }
    if (!(sigma >= kSigmaFloor) || !std::isfinite(sigma)) {
        throw DomainError("truncated normal: sigma " + std::to_string(sigma) +
                          " below floor " + std::to_string(kSigmaFloor));
    }
}

double uniform01(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

double normal_pdf(double x, double mu, double sigma) {
    require_positive_sigma(sigma, "normal_pdf");
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z - kLogSqrt2Pi) / sigma;
}

double normal_log_pdf(double x, double mu, double sigma) {
    require_positive_sigma(sigma, "normal_log_pdf");
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - kLogSqrt2Pi - std::log(sigma);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double std_normal_sf(double z) { return 0.5 * std::erfc(z * kInvSqrt2); }

double normal_cdf(double x, double mu, double sigma) {
    require_positive_sigma(sigma, "normal_cdf");
    return std_normal_cdf((x - mu) / sigma);
}

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("std_normal_quantile: p must lie in (0, 1), got " + std::to_string(p));
    }
    double x = quantile_initial(p);
    // One Newton step on the CDF; the residual uses the complement above the
    // median so it keeps precision in the upper tail.
    const double residual = x > 0.0 ? (1.0 - p) - std_normal_sf(x) : std_normal_cdf(x) - p;
    const double density = std::exp(-0.5 * x * x - kLogSqrt2Pi);
    if (density > 0.0) {
        x -= residual / density;
    }
    return x;
}

double tn_mass(const TruncNormParams& p) {
    p.validate();
    const double alpha = (TruncNormParams::lo - p.mu) / p.sigma;
    const double beta = (TruncNormParams::hi - p.mu) / p.sigma;
    if (alpha >= 0.0) {
        return std_normal_sf(alpha) - std_normal_sf(beta);
    }
    if (beta <= 0.0) {
        return std_normal_cdf(beta) - std_normal_cdf(alpha);
    }
    return 1.0 - std_normal_cdf(alpha) - std_normal_sf(beta);
}

namespace {

double checked_mass(const TruncNormParams& p, const char* where) {
    const double mass = tn_mass(p);
    if (!(mass >= kMinMass)) {
        throw DegenerateSupportError(std::string(where) + ": N(" + std::to_string(p.mu) + ", " +
                                     std::to_string(p.sigma) +
                                     "^2) has no usable mass on [0, 1]");
    }
    return mass;
}

}  // namespace

double tn_pdf(double a, const TruncNormParams& p) {
    require_unit_interval(a, "tn_pdf");
    const double mass = checked_mass(p, "tn_pdf");
    return normal_pdf(a, p.mu, p.sigma) / mass;
}

double tn_log_pdf(double a, const TruncNormParams& p) {
    require_unit_interval(a, "tn_log_pdf");
    const double mass = checked_mass(p, "tn_log_pdf");
    return normal_log_pdf(a, p.mu, p.sigma) - std::log(mass);
}

double tn_cdf(double a, const TruncNormParams& p) {
    require_unit_interval(a, "tn_cdf");
    const double mass = checked_mass(p, "tn_cdf");
    const double alpha = (TruncNormParams::lo - p.mu) / p.sigma;
    const double z = (a - p.mu) / p.sigma;
    double below;
    if (alpha >= 0.0) {
        below = std_normal_sf(alpha) - std_normal_sf(z);
    } else {
        below = std_normal_cdf(z) - std_normal_cdf(alpha);
    }
    return std::clamp(below / mass, 0.0, 1.0);
}

double tn_mean(const TruncNormParams& p) {
    const double mass = checked_mass(p, "tn_mean");
    const double alpha = (TruncNormParams::lo - p.mu) / p.sigma;
    const double beta = (TruncNormParams::hi - p.mu) / p.sigma;
    const double phi_a = std::exp(-0.5 * alpha * alpha - kLogSqrt2Pi);
    const double phi_b = std::exp(-0.5 * beta * beta - kLogSqrt2Pi);
    return std::clamp(p.mu + p.sigma * (phi_a - phi_b) / mass, 0.0, 1.0);
}

double tn_sample(const TruncNormParams& p, Rng& rng) {
    checked_mass(p, "tn_sample");
    const double alpha = (TruncNormParams::lo - p.mu) / p.sigma;
    const double beta = (TruncNormParams::hi - p.mu) / p.sigma;
    const double u = uniform01(rng);

    double z;
    if (alpha > 0.0) {
        // Entire interval above the mean: invert the survival function.
        const double sa = std_normal_sf(alpha);
        const double sb = std_normal_sf(beta);
        const double s = sb + u * (sa - sb);
        z = s > 0.0 ? -std_normal_quantile(s) : alpha;
    } else {
        const double fa = std_normal_cdf(alpha);
        const double fb = std_normal_cdf(beta);
        const double f = fa + u * (fb - fa);
        if (f <= 0.0) {
            z = alpha;
        } else if (f >= 1.0) {
            z = beta;
        } else {
            z = std_normal_quantile(f);
        }
    }
    return std::clamp(p.mu + p.sigma * z, TruncNormParams::lo, TruncNormParams::hi);
}

double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) {
        return b;
    }
    if (b == -std::numeric_limits<double>::infinity()) {
        return a;
    }
    const double hi = std::max(a, b);
    const double lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace tnagg
