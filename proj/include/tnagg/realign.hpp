#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tnagg/matrix.hpp"
#include "tnagg/metrics.hpp"
#include "tnagg/tensor.hpp"

namespace tnagg {

// Two-way distribution (P(acceptable), P(not acceptable)).
using Distribution2 = std::array<double, 2>;

struct TargetDistribution {
    Distribution2 p{0.5, 0.5};

    static TargetDistribution from_gamma(double gamma) { return {{gamma, 1.0 - gamma}}; }
};

std::vector<TargetDistribution> targets_from_gamma(std::span<const double> gamma);

// Small differentiable rater: K trainable token embeddings of width D, pooled
// as tanh(mean_k(e_k) * x) elementwise against the scenario features x, then an
// affine two-way head and a softmax.
//
// The embeddings at construction are kept as the frozen reference for the
// cosine-distance regularizer.
class ToyAnnotator {
public:
    ToyAnnotator() = default;

    // Unit-normal embeddings and a uniform head in +-sqrt(6 / (D + 2)) with zero
    // bias, all drawn from `seed`.
    ToyAnnotator(std::string theory_id, std::size_t tokens, std::size_t dim, std::uint64_t seed);

    // head is 2 x (dim + 1); its last column is the bias.
    ToyAnnotator(std::string theory_id, RealMatrix embeddings, RealMatrix head);

    const std::string& theory_id() const { return theory_id_; }
    std::size_t tokens() const { return embeddings_.rows(); }
    std::size_t dim() const { return embeddings_.cols(); }

    const RealMatrix& embeddings() const { return embeddings_; }
    const RealMatrix& original_embeddings() const { return original_; }
    const RealMatrix& head() const { return head_; }

    Distribution2 predict(std::span<const double> features) const;

    // Trainable parameters, flattened as embeddings (row-major) then head.
    std::size_t parameter_count() const { return embeddings_.size() + head_.size(); }
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> values);

    bool operator==(const ToyAnnotator&) const = default;

private:
    std::string theory_id_;
    RealMatrix embeddings_;
    RealMatrix original_;
    RealMatrix head_;
};

struct RealignConfig {
    double learning_rate = 0.5;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool grad_check = false;
    bool use_cosine_term = true;
    std::size_t grad_check_probes = 20;

    void validate() const;
};

// Natural-log Jensen-Shannon divergence with 0 log 0 = 0; result in [0, ln 2].
double js_divergence(std::span<const double> p, std::span<const double> q);

// 1 - cos(u, v); both vectors must have norm above 1e-12.
double cosine_distance(std::span<const double> u, std::span<const double> v);

struct LossTerms {
    double js = 0.0;  // mean over scenarios
    double cs = 0.0;  // mean cosine distance of embeddings to their originals
    double total = 0.0;
};

// features is N x D; targets has N entries.
LossTerms realign_loss(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                       const RealMatrix& features, bool use_cosine_term = true);

struct LossGradient {
    LossTerms loss;
    std::vector<double> grad;  // same layout as ToyAnnotator::parameters()
};

// Loss over the scenarios listed in `batch` (all when empty) and its analytic
// gradient.
LossGradient loss_and_gradient(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                               const RealMatrix& features, std::span<const std::size_t> batch,
                               bool use_cosine_term = true);

struct GradCheckProbe {
    std::size_t parameter = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckProbe> probes;
    double max_rel_error = 0.0;
    bool passed = false;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;

// Compares analytic derivatives with central differences at randomly chosen
// parameters, on the scenarios in `batch` (all when empty).
GradCheckReport gradient_check(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                               const RealMatrix& features, std::span<const std::size_t> batch,
                               std::size_t probes, std::uint64_t seed, bool use_cosine_term = true);

struct EpochLoss {
    std::size_t epoch = 0;
    LossTerms loss;
};

struct RealignResult {
    ToyAnnotator annotator;
    std::vector<EpochLoss> trajectory;
    std::optional<GradCheckReport> grad_check;
};

// Mini-batch gradient descent on loss_E. Only the embeddings and the head
// change. Throws NumericalError on a non-finite loss or gradient, or when the
// requested gradient check fails.
RealignResult realign(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                      const RealMatrix& features, const RealignConfig& cfg);

struct FeatureConfig {
    std::size_t dim = 16;
    double noise = 0.25;
    std::uint64_t seed = 0;
};

// Per-scenario feature vectors: a seeded random projection of the centred
// scores (a - 0.5) that the other raters gave the scenario across all theories,
// standardized to unit RMS, plus seeded unit-normal noise scaled by
// cfg.noise. The realigned rater's own scores never enter.
RealMatrix scenario_features(const AnnotationTensor& data, std::size_t exclude_rater,
                             const FeatureConfig& cfg);

// Class-1 probability of every scenario.
std::vector<double> predict_scores(const ToyAnnotator& ann, const RealMatrix& features);

// Binarizes predict_scores with the consensus threshold rule and scores it
// against one row of consensus labels.
F1Stats toy_alignment_f1(const ToyAnnotator& ann, const RealMatrix& features,
                         std::span<const unsigned char> consensus_labels, double tau,
                         bool boundary_inclusive);

}  // namespace tnagg
