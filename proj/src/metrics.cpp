#include "tnagg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tnagg/errors.hpp"

namespace tnagg {

F1Stats binary_f1(std::span<const unsigned char> predicted, std::span<const unsigned char> reference,
                  std::span<const unsigned char> include) {
    if (predicted.size() != reference.size() || (!include.empty() && include.size() != predicted.size())) {
        throw ValidationError("binary_f1: prediction and reference lengths differ");
    }
    F1Stats s;
    for (std::size_t k = 0; k < predicted.size(); ++k) {
        if (!include.empty() && !include[k]) {
            continue;
        }
        const bool p = predicted[k] != 0;
        const bool r = reference[k] != 0;
        if (p && r) {
            ++s.tp;
        } else if (p) {
            ++s.fp;
        } else if (r) {
            ++s.fn;
        } else {
            ++s.tn;
        }
    }
    const std::size_t denom = 2 * s.tp + s.fp + s.fn;
    if (denom == 0) {
        s.degenerate = true;
        s.f1 = 0.0;
    } else {
        s.f1 = 100.0 * static_cast<double>(2 * s.tp) / static_cast<double>(denom);
    }
    return s;
}

double AlignmentReport::mean_f1(std::size_t m) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < stats.cols(); ++j) {
        sum += stats(m, j).f1;
    }
    return stats.cols() ? sum / static_cast<double>(stats.cols()) : 0.0;
}

AlignmentReport f1_alignment(const AnnotationTensor& data, const ConsensusResult& consensus,
                             const EmConfig& cfg) {
    if (consensus.labels.rows() != data.theories() || consensus.labels.cols() != data.scenarios()) {
        throw ValidationError("f1_alignment: consensus is " + std::to_string(consensus.labels.rows()) +
                              "x" + std::to_string(consensus.labels.cols()) + ", annotations are " +
                              std::to_string(data.theories()) + "x" + std::to_string(data.scenarios()));
    }
    AlignmentReport report;
    report.rater_ids = data.rater_ids();
    report.theory_ids = data.theory_ids();
    report.stats = Matrix<F1Stats>(data.raters(), data.theories());
    report.labels_used = consensus.labels;
    report.tau = cfg.tau;
    report.boundary_inclusive = cfg.boundary_inclusive;

    std::vector<unsigned char> pred(data.scenarios());
    std::vector<unsigned char> include(data.scenarios());
    for (std::size_t m = 0; m < data.raters(); ++m) {
        for (std::size_t j = 0; j < data.theories(); ++j) {
            for (std::size_t i = 0; i < data.scenarios(); ++i) {
                include[i] = data.present(m, j, i) ? 1 : 0;
                pred[i] = include[i] ? binarize_value(data.score(m, j, i), cfg.tau, cfg.boundary_inclusive) : 0;
            }
            report.stats(m, j) = binary_f1(pred, consensus.labels.row(j), include);
        }
    }
    return report;
}

double pearson_corr(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DomainError("pearson_corr: vectors differ in length");
    }
    if (x.size() < 2) {
        throw DomainError("pearson_corr: at least two observations required");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = x[k] - mx;
        const double dy = y[k] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DomainError("pearson_corr: correlation undefined for a constant vector");
    }
    const double r = sxy / (std::sqrt(sxx) * std::sqrt(syy));
    return std::clamp(r, -1.0, 1.0);
}

CorrelationMatrix theory_correlation_matrix(const RealMatrix& gamma) {
    const std::size_t m = gamma.rows();
    if (m < 2) {
        throw ValidationError("theory_correlation_matrix: need at least two theories");
    }
    CorrelationMatrix out{RealMatrix(m, m, 0.0), 0};
    for (std::size_t a = 0; a < m; ++a) {
        out.r(a, a) = 1.0;
        for (std::size_t b = a + 1; b < m; ++b) {
            double r;
            try {
                r = pearson_corr(gamma.row(a), gamma.row(b));
            } catch (const DomainError&) {
                r = std::numeric_limits<double>::quiet_NaN();
                ++out.undefined_pairs;
            }
            out.r(a, b) = r;
            out.r(b, a) = r;
        }
    }
    return out;
}

}  // namespace tnagg
