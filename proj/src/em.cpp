#include "tnagg/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tnagg/errors.hpp"

namespace tnagg {

namespace {

constexpr double kMinWeight = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log f_tn(a) = offset - 0.5 * ((a - mu) / sigma)^2 with the normalizer folded
// into offset, so the per-cell work is one quadratic.
struct LogDensity {
    double mu;
    double inv_sigma;
    double offset;

    explicit LogDensity(const TruncNormParams& p) : mu(p.mu), inv_sigma(1.0 / p.sigma) {
        const double mass = tn_mass(p);
        if (!(mass >= 1e-300)) {
            throw DegenerateSupportError("e_step: rater parameters leave no mass on [0, 1]");
        }
        offset = normal_log_pdf(p.mu, p.mu, p.sigma) - std::log(mass);
    }

    double operator()(double a) const {
        const double z = (a - mu) * inv_sigma;
        return offset - 0.5 * z * z;
    }
};

void require_shape(const AnnotationTensor& data, const RealMatrix& gamma) {
    if (gamma.rows() != data.theories() || gamma.cols() != data.scenarios()) {
        throw ValidationError("gamma shape " + std::to_string(gamma.rows()) + "x" +
                              std::to_string(gamma.cols()) + " does not match tensor " +
                              std::to_string(data.theories()) + "x" +
                              std::to_string(data.scenarios()));
    }
}

struct WeightedMoments {
    double weight = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

template <typename WeightFn>
WeightedMoments weighted_moments(const AnnotationTensor& data, std::size_t m, WeightFn weight_of) {
    WeightedMoments out;
    double sum = 0.0;
    for (std::size_t j = 0; j < data.theories(); ++j) {
        for (std::size_t i = 0; i < data.scenarios(); ++i) {
            if (data.present(m, j, i)) {
                const double w = weight_of(j, i);
                out.weight += w;
                sum += w * data.score(m, j, i);
            }
        }
    }
    if (out.weight < kMinWeight) {
        return out;
    }
    out.mean = sum / out.weight;
    double sq = 0.0;
    for (std::size_t j = 0; j < data.theories(); ++j) {
        for (std::size_t i = 0; i < data.scenarios(); ++i) {
            if (data.present(m, j, i)) {
                const double d = data.score(m, j, i) - out.mean;
                sq += weight_of(j, i) * d * d;
            }
        }
    }
    out.variance = sq / out.weight;
    return out;
}

double clamp_sigma(double variance) {
    return std::clamp(std::sqrt(std::max(variance, 0.0)), kSigmaFloor, 1.0);
}

}  // namespace

void EmConfig::validate() const {
    if (!(prior_pos > 0.0 && prior_pos < 1.0)) {
        throw ValidationError("prior_pos must lie in (0, 1)");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ValidationError("tau must lie in (0, 1)");
    }
    if (!(tau_rp > 0.0)) {
        throw ValidationError("tau_rp must be positive");
    }
    if (max_iters < 1) {
        throw ValidationError("max_iters must be at least 1");
    }
    TruncNormParams{init_mu0, init_sigma}.validate();
    TruncNormParams{init_mu1, init_sigma}.validate();
    if (init_mu0 < 0.0 || init_mu0 > 1.0 || init_mu1 < 0.0 || init_mu1 > 1.0) {
        throw ValidationError("initial means must lie in [0, 1]");
    }
}

ReliabilityParams initial_reliability(std::size_t raters, const EmConfig& cfg) {
    return ReliabilityParams(raters, RaterReliability{cfg.init_mu1, cfg.init_sigma, cfg.init_mu0,
                                                      cfg.init_sigma});
}

std::pair<double, double> posterior_pair(double loglik_pos, double loglik_neg, double prior_pos) {
    const double log_p1 = prior_pos > 0.0 ? std::log(prior_pos) + loglik_pos : kNegInf;
    const double log_p0 = prior_pos < 1.0 ? std::log1p(-prior_pos) + loglik_neg : kNegInf;
    const double norm = log_sum_exp(log_p1, log_p0);
    if (norm == kNegInf) {
        return {prior_pos, 1.0 - prior_pos};
    }
    return {std::exp(log_p1 - norm), std::exp(log_p0 - norm)};
}

Posterior e_step(const AnnotationTensor& data, const ReliabilityParams& theta, const EmConfig& cfg) {
    if (theta.size() != data.raters()) {
        throw ValidationError("reliability parameters given for " + std::to_string(theta.size()) +
                              " raters, tensor has " + std::to_string(data.raters()));
    }
    if (!(cfg.prior_pos >= 0.0 && cfg.prior_pos <= 1.0)) {
        throw ValidationError("prior_pos must lie in [0, 1]");
    }

    std::vector<LogDensity> pos;
    std::vector<LogDensity> neg;
    pos.reserve(theta.size());
    neg.reserve(theta.size());
    for (const auto& r : theta) {
        r.positive().validate();
        r.negative().validate();
        pos.emplace_back(r.positive());
        neg.emplace_back(r.negative());
    }

    Posterior out{RealMatrix(data.theories(), data.scenarios(), cfg.prior_pos), 0};
    for (std::size_t j = 0; j < data.theories(); ++j) {
        for (std::size_t i = 0; i < data.scenarios(); ++i) {
            double ll1 = 0.0;
            double ll0 = 0.0;
            std::size_t seen = 0;
            for (std::size_t m = 0; m < data.raters(); ++m) {
                if (!data.present(m, j, i)) {
                    continue;
                }
                const double a = data.score(m, j, i);
                ll1 += pos[m](a);
                ll0 += neg[m](a);
                ++seen;
            }
            if (seen == 0) {
                ++out.unobserved_cells;
                continue;
            }
            out.gamma(j, i) = std::clamp(posterior_pair(ll1, ll0, cfg.prior_pos).first, 0.0, 1.0);
        }
    }
    return out;
}

MStepResult m_step(const AnnotationTensor& data, const RealMatrix& gamma,
                   const ReliabilityParams& previous) {
    require_shape(data, gamma);
    if (previous.size() != data.raters()) {
        throw ValidationError("previous reliability has wrong rater count");
    }
    for (double g : gamma.data()) {
        if (!(g >= 0.0 && g <= 1.0)) {
            throw ValidationError("gamma entries must lie in [0, 1]");
        }
    }

    MStepResult out{previous, std::vector<bool>(data.raters(), false),
                    std::vector<bool>(data.raters(), false)};
    for (std::size_t m = 0; m < data.raters(); ++m) {
        const auto pos = weighted_moments(data, m, [&](auto j, auto i) { return gamma(j, i); });
        const auto neg = weighted_moments(data, m, [&](auto j, auto i) { return 1.0 - gamma(j, i); });
        auto& r = out.params[m];
        if (pos.weight >= kMinWeight) {
            r.mu1 = std::clamp(pos.mean, 0.0, 1.0);
            r.sigma1 = clamp_sigma(pos.variance);
        } else {
            out.kept_positive[m] = true;
        }
        if (neg.weight >= kMinWeight) {
            r.mu0 = std::clamp(neg.mean, 0.0, 1.0);
            r.sigma0 = clamp_sigma(neg.variance);
        } else {
            out.kept_negative[m] = true;
        }
    }
    return out;
}

double max_param_delta(const ReliabilityParams& a, const ReliabilityParams& b) {
    if (a.size() != b.size()) {
        throw ValidationError("reliability sets differ in rater count");
    }
    double delta = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) {
        delta = std::max({delta, std::abs(a[m].mu1 - b[m].mu1), std::abs(a[m].sigma1 - b[m].sigma1),
                          std::abs(a[m].mu0 - b[m].mu0), std::abs(a[m].sigma0 - b[m].sigma0)});
    }
    return delta;
}

ReliabilityParams em_iteration(const AnnotationTensor& data, const ReliabilityParams& theta,
                               const EmConfig& cfg) {
    return m_step(data, e_step(data, theta, cfg).gamma, theta).params;
}

ConsensusResult run_em(const AnnotationTensor& data, const EmConfig& cfg) {
    cfg.validate();
    data.validate();

    ConsensusResult result;
    result.tau = cfg.tau;
    result.boundary_inclusive = cfg.boundary_inclusive;

    ReliabilityParams theta = initial_reliability(data.raters(), cfg);
    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        ReliabilityParams next = em_iteration(data, theta, cfg);
        result.final_max_delta = max_param_delta(theta, next);
        theta = std::move(next);
        result.iterations = iter;
        if (result.final_max_delta < cfg.tau_rp) {
            result.converged = true;
            break;
        }
    }

    result.gamma = e_step(data, theta, cfg).gamma;

    double mean_mu1 = 0.0;
    double mean_mu0 = 0.0;
    for (const auto& r : theta) {
        mean_mu1 += r.mu1;
        mean_mu0 += r.mu0;
    }
    if (mean_mu1 < mean_mu0) {
        // Mirrored fixed point: the positive and negative roles are swapped.
        for (auto& r : theta) {
            std::swap(r.mu1, r.mu0);
            std::swap(r.sigma1, r.sigma0);
        }
        for (auto& g : result.gamma.data()) {
            g = 1.0 - g;
        }
        result.relabeled = true;
    }

    result.reliability = std::move(theta);
    result.labels = binarize(result.gamma, cfg.tau, cfg.boundary_inclusive);
    return result;
}

unsigned char binarize_value(double value, double tau, bool boundary_inclusive) {
    return (boundary_inclusive ? value >= tau : value > tau) ? 1 : 0;
}

LabelMatrix binarize(const RealMatrix& gamma, double tau, bool boundary_inclusive) {
    LabelMatrix labels(gamma.rows(), gamma.cols(), 0);
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        labels.data()[k] = binarize_value(gamma.data()[k], tau, boundary_inclusive);
    }
    return labels;
}

RealMatrix mean_aggregate(const AnnotationTensor& data) {
    RealMatrix out(data.theories(), data.scenarios(), 0.0);
    for (std::size_t j = 0; j < data.theories(); ++j) {
        for (std::size_t i = 0; i < data.scenarios(); ++i) {
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t m = 0; m < data.raters(); ++m) {
                if (data.present(m, j, i)) {
                    sum += data.score(m, j, i);
                    ++n;
                }
            }
            if (n == 0) {
                throw ValidationError("mean_aggregate: no scores for theory '" +
                                      data.theory_ids()[j] + "' scenario '" +
                                      data.scenario_ids()[i] + "'");
            }
            out(j, i) = std::clamp(sum / static_cast<double>(n), 0.0, 1.0);
        }
    }
    return out;
}

ConsensusResult run_mean(const AnnotationTensor& data, const EmConfig& cfg) {
    cfg.validate();
    data.validate();
    ConsensusResult result;
    result.gamma = mean_aggregate(data);
    result.labels = binarize(result.gamma, cfg.tau, cfg.boundary_inclusive);
    result.converged = true;
    result.tau = cfg.tau;
    result.boundary_inclusive = cfg.boundary_inclusive;
    return result;
}

}  // namespace tnagg
