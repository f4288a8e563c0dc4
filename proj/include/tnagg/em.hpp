#pragma once

#include <cstddef>
#include <vector>

#include "tnagg/matrix.hpp"
#include "tnagg/stats.hpp"
#include "tnagg/tensor.hpp"

namespace tnagg {

// Score model of one rater: TND(mu1, sigma1^2) when the latent label is 1 and
// TND(mu0, sigma0^2) when it is 0.
struct RaterReliability {
    double mu1 = 0.8;
    double sigma1 = 0.1;
    double mu0 = 0.2;
    double sigma0 = 0.1;

    TruncNormParams positive() const { return {mu1, sigma1}; }
    TruncNormParams negative() const { return {mu0, sigma0}; }

    bool operator==(const RaterReliability&) const = default;
};

// One entry per rater, in tensor rater order.
using ReliabilityParams = std::vector<RaterReliability>;

struct EmConfig {
    double prior_pos = 0.5;
    double tau = 0.5;
    double tau_rp = 1e-6;
    std::size_t max_iters = 1000;
    double init_mu0 = 0.2;
    double init_mu1 = 0.8;
    double init_sigma = 0.1;
    bool boundary_inclusive = false;

    // Throws ValidationError when a field is outside its documented range.
    void validate() const;
};

struct Posterior {
    RealMatrix gamma;                 // theories x scenarios
    std::size_t unobserved_cells = 0; // cells with no present score; gamma = prior there
};

struct MStepResult {
    ReliabilityParams params;
    // Raters whose positive (negative) weight total fell below 1e-12; their
    // previous parameters for that side were kept.
    std::vector<bool> kept_positive;
    std::vector<bool> kept_negative;
};

struct ConsensusResult {
    RealMatrix gamma;
    LabelMatrix labels;
    ReliabilityParams reliability;
    std::size_t iterations = 0;
    bool converged = false;
    double final_max_delta = 0.0;
    bool relabeled = false;
    double tau = 0.5;
    bool boundary_inclusive = false;
};

ReliabilityParams initial_reliability(std::size_t raters, const EmConfig& cfg);

// Posterior P(label = 1 | scores) for every (theory, scenario) cell, from
// per-rater truncated-normal log-likelihoods combined in the log domain.
Posterior e_step(const AnnotationTensor& data, const ReliabilityParams& theta, const EmConfig& cfg);

// Normalized (P(label=1), P(label=0)) from the summed log-likelihoods of one
// cell.
std::pair<double, double> posterior_pair(double loglik_pos, double loglik_neg, double prior_pos);

// Gamma-weighted mean and (biased) variance per rater, pooled over theories
// and scenarios; weights 1 - gamma for the negative side.
MStepResult m_step(const AnnotationTensor& data, const RealMatrix& gamma,
                   const ReliabilityParams& previous);

// Largest absolute change over all four parameters of all raters.
double max_param_delta(const ReliabilityParams& a, const ReliabilityParams& b);

// One E-step followed by one M-step.
ReliabilityParams em_iteration(const AnnotationTensor& data, const ReliabilityParams& theta,
                               const EmConfig& cfg);

ConsensusResult run_em(const AnnotationTensor& data, const EmConfig& cfg);

LabelMatrix binarize(const RealMatrix& gamma, double tau, bool boundary_inclusive);
unsigned char binarize_value(double value, double tau, bool boundary_inclusive);

// Per-cell arithmetic mean over present raters.
RealMatrix mean_aggregate(const AnnotationTensor& data);

// Consensus built from mean_aggregate; reliability is left empty.
ConsensusResult run_mean(const AnnotationTensor& data, const EmConfig& cfg);

}  // namespace tnagg
