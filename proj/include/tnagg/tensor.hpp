#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tnagg {

// Scores a[m][j][i] for L raters x M theories x N scenarios, with a presence
// mask. Storage is rater-major, then theory, then scenario.
class AnnotationTensor {
public:
    AnnotationTensor() = default;

    // All cells start masked out with score 0.
    AnnotationTensor(std::vector<std::string> rater_ids, std::vector<std::string> theory_ids,
                     std::vector<std::string> scenario_ids);

    std::size_t raters() const { return rater_ids_.size(); }
    std::size_t theories() const { return theory_ids_.size(); }
    std::size_t scenarios() const { return scenario_ids_.size(); }

    const std::vector<std::string>& rater_ids() const { return rater_ids_; }
    const std::vector<std::string>& theory_ids() const { return theory_ids_; }
    const std::vector<std::string>& scenario_ids() const { return scenario_ids_; }

    double score(std::size_t m, std::size_t j, std::size_t i) const { return scores_[index(m, j, i)]; }
    bool present(std::size_t m, std::size_t j, std::size_t i) const { return mask_[index(m, j, i)] != 0; }

    void set(std::size_t m, std::size_t j, std::size_t i, double score);
    void clear(std::size_t m, std::size_t j, std::size_t i);

    // Number of raters with a score for cell (j, i).
    std::size_t coverage(std::size_t j, std::size_t i) const;

    // Throws ValidationError on: L < 2, M < 1, N < 1, duplicate ids on an axis,
    // a present score outside [0, 1], or a (j, i) cell with no scores at all.
    void validate() const;

    // Copy restricted to the given rater indices (in the given order).
    AnnotationTensor select_raters(const std::vector<std::size_t>& keep) const;

    // Copy with the scenario axis reordered: result scenario k is source
    // scenario order[k].
    AnnotationTensor permute_scenarios(const std::vector<std::size_t>& order) const;

    bool operator==(const AnnotationTensor&) const = default;

private:
    std::size_t index(std::size_t m, std::size_t j, std::size_t i) const {
        return (m * theories() + j) * scenarios() + i;
    }

    std::vector<std::string> rater_ids_;
    std::vector<std::string> theory_ids_;
    std::vector<std::string> scenario_ids_;
    std::vector<double> scores_;
    std::vector<unsigned char> mask_;
};

// Index of an id within an axis, or throws ValidationError.
std::size_t index_of(const std::vector<std::string>& ids, const std::string& id, const char* axis);

}  // namespace tnagg
