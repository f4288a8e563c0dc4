#include "tnagg/realign.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tnagg/em.hpp"
#include "tnagg/errors.hpp"
#include "tnagg/stats.hpp"

namespace tnagg {

namespace {

double normal_draw(Rng& rng) { return std_normal_quantile(uniform01(rng)); }

void require_distribution(std::span<const double> p, const char* which) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw DomainError(std::string("js_divergence: ") + which + " has a negative or non-finite entry");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DomainError(std::string("js_divergence: ") + which + " does not sum to 1");
    }
}

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        s += a[k] * b[k];
    }
    return s;
}

void require_shapes(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                    const RealMatrix& features) {
    if (features.rows() != targets.size()) {
        throw ValidationError("realign: " + std::to_string(features.rows()) + " feature rows but " +
                              std::to_string(targets.size()) + " targets");
    }
    if (features.cols() != ann.dim()) {
        throw ValidationError("realign: feature width " + std::to_string(features.cols()) +
                              " does not match embedding width " + std::to_string(ann.dim()));
    }
    if (targets.empty()) {
        throw ValidationError("realign: no scenarios");
    }
}

// Forward pass of one scenario, keeping what the backward pass needs.
struct Forward {
    std::vector<double> pooled;  // tanh(mean_e * x)
    Distribution2 p{};
};

std::vector<double> mean_embedding(const RealMatrix& e) {
    std::vector<double> mean(e.cols(), 0.0);
    for (std::size_t k = 0; k < e.rows(); ++k) {
        for (std::size_t d = 0; d < e.cols(); ++d) {
            mean[d] += e(k, d);
        }
    }
    for (auto& v : mean) {
        v /= static_cast<double>(e.rows());
    }
    return mean;
}

Forward forward(const std::vector<double>& mean_e, const RealMatrix& head, std::span<const double> x) {
    const std::size_t D = mean_e.size();
    Forward f;
    f.pooled.resize(D);
    for (std::size_t d = 0; d < D; ++d) {
        f.pooled[d] = std::tanh(mean_e[d] * x[d]);
    }
    double z[2];
    for (std::size_t c = 0; c < 2; ++c) {
        z[c] = head(c, D);
        for (std::size_t d = 0; d < D; ++d) {
            z[c] += head(c, d) * f.pooled[d];
        }
    }
    const double zmax = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - zmax);
    const double e1 = std::exp(z[1] - zmax);
    f.p = {e0 / (e0 + e1), e1 / (e0 + e1)};
    return f;
}

double cosine_term(const ToyAnnotator& ann) {
    double s = 0.0;
    for (std::size_t k = 0; k < ann.tokens(); ++k) {
        s += cosine_distance(ann.embeddings().row(k), ann.original_embeddings().row(k));
    }
    return s / static_cast<double>(ann.tokens());
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<TargetDistribution> targets_from_gamma(std::span<const double> gamma) {
    std::vector<TargetDistribution> out;
    out.reserve(gamma.size());
    for (double g : gamma) {
        if (!(g >= 0.0 && g <= 1.0)) {
            throw DomainError("target probability outside [0, 1]");
        }
        out.push_back(TargetDistribution::from_gamma(g));
    }
    return out;
}

ToyAnnotator::ToyAnnotator(std::string theory_id, std::size_t tokens, std::size_t dim, std::uint64_t seed)
    : theory_id_(std::move(theory_id)), embeddings_(tokens, dim), head_(2, dim + 1, 0.0) {
    if (tokens < 1 || dim < 1) {
        throw ValidationError("toy annotator needs at least one token and one dimension");
    }
    Rng rng(derive_seed(seed, 0x746f79));
    for (auto& v : embeddings_.data()) {
        v = normal_draw(rng);
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(dim + 2));
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t d = 0; d < dim; ++d) {
            head_(c, d) = limit * (2.0 * uniform01(rng) - 1.0);
        }
    }
    original_ = embeddings_;
}

ToyAnnotator::ToyAnnotator(std::string theory_id, RealMatrix embeddings, RealMatrix head)
    : theory_id_(std::move(theory_id)), embeddings_(std::move(embeddings)), head_(std::move(head)) {
    if (embeddings_.rows() < 1 || embeddings_.cols() < 1) {
        throw ValidationError("toy annotator needs at least one token and one dimension");
    }
    if (head_.rows() != 2 || head_.cols() != embeddings_.cols() + 1) {
        throw ValidationError("toy annotator head must be 2 x (dim + 1)");
    }
    original_ = embeddings_;
}

Distribution2 ToyAnnotator::predict(std::span<const double> features) const {
    if (features.size() != dim()) {
        throw ValidationError("predict: feature width does not match embedding width");
    }
    return forward(mean_embedding(embeddings_), head_, features).p;
}

std::vector<double> ToyAnnotator::parameters() const {
    std::vector<double> out(embeddings_.data());
    out.insert(out.end(), head_.data().begin(), head_.data().end());
    return out;
}

void ToyAnnotator::set_parameters(std::span<const double> values) {
    if (values.size() != parameter_count()) {
        throw ValidationError("set_parameters: wrong parameter count");
    }
    const auto split = values.begin() + static_cast<std::ptrdiff_t>(embeddings_.size());
    std::copy(values.begin(), split, embeddings_.data().begin());
    std::copy(split, values.end(), head_.data().begin());
}

void RealignConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("learning_rate must be finite and non-negative");
    }
    if (epochs < 1) {
        throw ValidationError("epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw ValidationError("batch_size must be at least 1");
    }
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) {
        throw DomainError("js_divergence: distributions differ in length");
    }
    require_distribution(p, "p");
    require_distribution(q, "q");
    double kl_p = 0.0;
    double kl_q = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double m = 0.5 * (p[k] + q[k]);
        if (p[k] > 0.0) {
            kl_p += p[k] * std::log(p[k] / m);
        }
        if (q[k] > 0.0) {
            kl_q += q[k] * std::log(q[k] / m);
        }
    }
    return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, std::numbers::ln2);
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw DomainError("cosine_distance: vectors differ in length");
    }
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu <= 1e-12 || nv <= 1e-12) {
        throw DomainError("cosine_distance: near-zero vector");
    }
    return std::clamp(1.0 - dot(u, v) / (nu * nv), 0.0, 2.0);
}

LossTerms realign_loss(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                       const RealMatrix& features, bool use_cosine_term) {
    return loss_and_gradient(ann, targets, features, {}, use_cosine_term).loss;
}

LossGradient loss_and_gradient(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                               const RealMatrix& features, std::span<const std::size_t> batch,
                               bool use_cosine_term) {
    require_shapes(ann, targets, features);
    const std::size_t K = ann.tokens();
    const std::size_t D = ann.dim();
    const RealMatrix& head = ann.head();
    const std::vector<double> mean_e = mean_embedding(ann.embeddings());

    std::vector<std::size_t> all;
    if (batch.empty()) {
        all.resize(targets.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        batch = all;
    }

    LossGradient out;
    out.grad.assign(ann.parameter_count(), 0.0);
    std::vector<double> grad_mean_e(D, 0.0);
    double* grad_head = out.grad.data() + K * D;

    for (std::size_t i : batch) {
        if (i >= targets.size()) {
            throw ValidationError("loss_and_gradient: batch index out of range");
        }
        const auto x = features.row(i);
        const Forward f = forward(mean_e, head, x);
        if (!std::isfinite(f.p[0]) || !std::isfinite(f.p[1])) {
            throw NumericalError("non-finite prediction for scenario " + std::to_string(i));
        }
        const auto& q = targets[i].p;
        out.loss.js += js_divergence(f.p, q);

        // dJS/dp_c = 0.5 * log(p_c / m_c), then through the softmax.
        double g[2];
        double pg = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
            const double m = 0.5 * (f.p[c] + q[c]);
            g[c] = f.p[c] > 0.0 ? 0.5 * std::log(f.p[c] / m) : 0.0;
            pg += f.p[c] * g[c];
        }
        double dz[2];
        for (std::size_t c = 0; c < 2; ++c) {
            dz[c] = f.p[c] * (g[c] - pg);
        }
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t d = 0; d < D; ++d) {
                grad_head[c * (D + 1) + d] += dz[c] * f.pooled[d];
            }
            grad_head[c * (D + 1) + D] += dz[c];
        }
        for (std::size_t d = 0; d < D; ++d) {
            const double dh = dz[0] * head(0, d) + dz[1] * head(1, d);
            grad_mean_e[d] += dh * (1.0 - f.pooled[d] * f.pooled[d]) * x[d];
        }
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    out.loss.js *= inv_b;
    for (std::size_t k = 0; k < 2 * (D + 1); ++k) {
        grad_head[k] *= inv_b;
    }
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t d = 0; d < D; ++d) {
            out.grad[k * D + d] = grad_mean_e[d] * inv_b / static_cast<double>(K);
        }
    }

    if (use_cosine_term) {
        out.loss.cs = cosine_term(ann);
        // d(1 - cos)/du = -(v / (|u||v|) - (u.v) u / (|u|^3 |v|)), averaged over K.
        for (std::size_t k = 0; k < K; ++k) {
            const auto u = ann.embeddings().row(k);
            const auto v = ann.original_embeddings().row(k);
            const double nu = norm2(u);
            const double nv = norm2(v);
            const double uv = dot(u, v);
            for (std::size_t d = 0; d < D; ++d) {
                const double dcos = v[d] / (nu * nv) - uv * u[d] / (nu * nu * nu * nv);
                out.grad[k * D + d] -= dcos / static_cast<double>(K);
            }
        }
    }
    out.loss.total = out.loss.js + out.loss.cs;
    return out;
}

GradCheckReport gradient_check(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                               const RealMatrix& features, std::span<const std::size_t> batch,
                               std::size_t probes, std::uint64_t seed, bool use_cosine_term) {
    const LossGradient analytic = loss_and_gradient(ann, targets, features, batch, use_cosine_term);
    const std::vector<double> base = ann.parameters();
    Rng rng(derive_seed(seed, 0x67726164));

    GradCheckReport report;
    ToyAnnotator probe = ann;
    std::vector<double> params = base;
    for (std::size_t n = 0; n < probes; ++n) {
        const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(base.size()));
        params[k] = base[k] + kGradCheckStep;
        probe.set_parameters(params);
        const double up = loss_and_gradient(probe, targets, features, batch, use_cosine_term).loss.total;
        params[k] = base[k] - kGradCheckStep;
        probe.set_parameters(params);
        const double down = loss_and_gradient(probe, targets, features, batch, use_cosine_term).loss.total;
        params[k] = base[k];

        GradCheckProbe p;
        p.parameter = k;
        p.analytic = analytic.grad[k];
        p.numeric = (up - down) / (2.0 * kGradCheckStep);
        // Relative to the larger magnitude, floored so vanishing derivatives
        // are judged on absolute agreement.
        const double scale = std::max({std::abs(p.analytic), std::abs(p.numeric), 1e-6});
        p.rel_error = std::abs(p.analytic - p.numeric) / scale;
        report.max_rel_error = std::max(report.max_rel_error, p.rel_error);
        report.probes.push_back(p);
    }
    report.passed = report.max_rel_error < kGradCheckTolerance;
    return report;
}

RealignResult realign(const ToyAnnotator& ann, std::span<const TargetDistribution> targets,
                      const RealMatrix& features, const RealignConfig& cfg) {
    cfg.validate();
    require_shapes(ann, targets, features);

    RealignResult result{ann, {}, std::nullopt};
    Rng rng(derive_seed(cfg.seed, 0x7265616c));

    std::vector<std::size_t> order(targets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    if (cfg.grad_check) {
        std::vector<std::size_t> probe_batch(order.begin(),
                                             order.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(64, order.size())));
        result.grad_check = gradient_check(ann, targets, features, probe_batch, cfg.grad_check_probes,
                                           cfg.seed, cfg.use_cosine_term);
        if (!result.grad_check->passed) {
            throw NumericalError("gradient check failed: max relative error " +
                                 std::to_string(result.grad_check->max_rel_error));
        }
    }

    ToyAnnotator& model = result.annotator;
    std::vector<double> params = model.parameters();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates with the portable uniform draw.
        for (std::size_t k = order.size(); k > 1; --k) {
            const auto r = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(k));
            std::swap(order[k - 1], order[r]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            const LossGradient lg = loss_and_gradient(model, targets, features, batch, cfg.use_cosine_term);
            if (!std::isfinite(lg.loss.total) || !all_finite(lg.grad)) {
                throw NumericalError("non-finite loss or gradient in epoch " + std::to_string(epoch));
            }
            if (cfg.learning_rate == 0.0) {
                continue;
            }
            for (std::size_t k = 0; k < params.size(); ++k) {
                params[k] -= cfg.learning_rate * lg.grad[k];
            }
            model.set_parameters(params);
        }
        const LossTerms loss = realign_loss(model, targets, features, cfg.use_cosine_term);
        if (!std::isfinite(loss.total)) {
            throw NumericalError("non-finite loss after epoch " + std::to_string(epoch));
        }
        result.trajectory.push_back({epoch, loss});
    }
    return result;
}

RealMatrix scenario_features(const AnnotationTensor& data, std::size_t exclude_rater, const FeatureConfig& cfg) {
    if (exclude_rater >= data.raters()) {
        throw ValidationError("scenario_features: rater index out of range");
    }
    if (cfg.dim < 1 || !(cfg.noise >= 0.0)) {
        throw ValidationError("scenario_features: dim must be positive and noise non-negative");
    }
    const std::size_t N = data.scenarios();
    const std::size_t width = (data.raters() - 1) * data.theories();

    Rng rng(derive_seed(cfg.seed, 0x66656174));
    RealMatrix projection(cfg.dim, width);
    for (auto& v : projection.data()) {
        v = normal_draw(rng);
    }

    RealMatrix out(N, cfg.dim, 0.0);
    std::vector<double> committee(width);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t k = 0;
        for (std::size_t m = 0; m < data.raters(); ++m) {
            if (m == exclude_rater) {
                continue;
            }
            for (std::size_t j = 0; j < data.theories(); ++j, ++k) {
                committee[k] = data.present(m, j, i) ? data.score(m, j, i) - 0.5 : 0.0;
            }
        }
        for (std::size_t d = 0; d < cfg.dim; ++d) {
            out(i, d) = dot(projection.row(d), committee);
        }
    }

    double sq = 0.0;
    for (double v : out.data()) {
        sq += v * v;
    }
    const double rms = std::sqrt(sq / static_cast<double>(std::max<std::size_t>(1, out.size())));
    const double scale = rms > 0.0 ? 1.0 / rms : 0.0;
    for (auto& v : out.data()) {
        v = v * scale + cfg.noise * normal_draw(rng);
    }
    return out;
}

std::vector<double> predict_scores(const ToyAnnotator& ann, const RealMatrix& features) {
    if (features.cols() != ann.dim()) {
        throw ValidationError("predict_scores: feature width does not match embedding width");
    }
    const std::vector<double> mean_e = mean_embedding(ann.embeddings());
    std::vector<double> out(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        out[i] = forward(mean_e, ann.head(), features.row(i)).p[0];
    }
    return out;
}

F1Stats toy_alignment_f1(const ToyAnnotator& ann, const RealMatrix& features,
                         std::span<const unsigned char> consensus_labels, double tau,
                         bool boundary_inclusive) {
    const std::vector<double> scores = predict_scores(ann, features);
    std::vector<unsigned char> pred(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        pred[i] = binarize_value(scores[i], tau, boundary_inclusive);
    }
    return binary_f1(pred, consensus_labels);
}

}  // namespace tnagg
