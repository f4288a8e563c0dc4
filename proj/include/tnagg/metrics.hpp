#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tnagg/em.hpp"
#include "tnagg/matrix.hpp"
#include "tnagg/tensor.hpp"

namespace tnagg {

// Binary confusion counts with label 1 as the positive class.
struct F1Stats {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    double f1 = 0.0;          // percent
    bool degenerate = false;  // 2*TP + FP + FN == 0; f1 reported as 0
};

// Entries where `include` is given and zero are skipped.
F1Stats binary_f1(std::span<const unsigned char> predicted, std::span<const unsigned char> reference,
                  std::span<const unsigned char> include = {});

struct AlignmentReport {
    std::vector<std::string> rater_ids;
    std::vector<std::string> theory_ids;
    Matrix<F1Stats> stats;  // raters x theories
    LabelMatrix labels_used;
    double tau = 0.5;
    bool boundary_inclusive = false;

    double f1(std::size_t m, std::size_t j) const { return stats(m, j).f1; }
    // Mean F1 of a rater across theories.
    double mean_f1(std::size_t m) const;
};

// Each rater's scores on each theory are binarized with the same threshold rule
// as the consensus and scored against the consensus labels. Cells the rater
// left unscored are excluded.
AlignmentReport f1_alignment(const AnnotationTensor& data, const ConsensusResult& consensus,
                             const EmConfig& cfg);

// Throws DomainError when n < 2, lengths differ, or either vector is constant.
double pearson_corr(std::span<const double> x, std::span<const double> y);

struct CorrelationMatrix {
    RealMatrix r;  // NaN where a pair is undefined
    std::size_t undefined_pairs = 0;
};

// Pearson r between consensus rows (theories) across scenarios.
CorrelationMatrix theory_correlation_matrix(const RealMatrix& gamma);

}  // namespace tnagg
