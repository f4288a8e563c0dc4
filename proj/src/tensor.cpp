#include "tnagg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tnagg/errors.hpp"

namespace tnagg {

namespace {

void require_unique(const std::vector<std::string>& ids, const char* axis) {
    std::set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) {
            throw ValidationError(std::string("duplicate ") + axis + " id '" + id + "'");
        }
    }
}

}  // namespace

AnnotationTensor::AnnotationTensor(std::vector<std::string> rater_ids,
                                   std::vector<std::string> theory_ids,
                                   std::vector<std::string> scenario_ids)
    : rater_ids_(std::move(rater_ids)),
      theory_ids_(std::move(theory_ids)),
      scenario_ids_(std::move(scenario_ids)),
      scores_(rater_ids_.size() * theory_ids_.size() * scenario_ids_.size(), 0.0),
      mask_(scores_.size(), 0) {}

void AnnotationTensor::set(std::size_t m, std::size_t j, std::size_t i, double score) {
    if (!(score >= 0.0 && score <= 1.0)) {
        throw ValidationError("score " + std::to_string(score) + " for rater '" + rater_ids_.at(m) +
                              "' outside [0, 1]");
    }
    scores_.at(index(m, j, i)) = score;
    mask_[index(m, j, i)] = 1;
}

void AnnotationTensor::clear(std::size_t m, std::size_t j, std::size_t i) {
    scores_.at(index(m, j, i)) = 0.0;
    mask_[index(m, j, i)] = 0;
}

std::size_t AnnotationTensor::coverage(std::size_t j, std::size_t i) const {
    std::size_t n = 0;
    for (std::size_t m = 0; m < raters(); ++m) {
        n += mask_[index(m, j, i)];
    }
    return n;
}

void AnnotationTensor::validate() const {
    if (raters() < 2) {
        throw ValidationError("at least 2 raters required, got " + std::to_string(raters()));
    }
    if (theories() < 1 || scenarios() < 1) {
        throw ValidationError("at least one theory and one scenario required");
    }
    require_unique(rater_ids_, "rater");
    require_unique(theory_ids_, "theory");
    require_unique(scenario_ids_, "scenario");
    for (std::size_t k = 0; k < scores_.size(); ++k) {
        if (mask_[k] && !(scores_[k] >= 0.0 && scores_[k] <= 1.0)) {
            throw ValidationError("score outside [0, 1] in annotation tensor");
        }
    }
    for (std::size_t j = 0; j < theories(); ++j) {
        for (std::size_t i = 0; i < scenarios(); ++i) {
            if (coverage(j, i) == 0) {
                throw ValidationError("no rater scored theory '" + theory_ids_[j] +
                                      "' on scenario '" + scenario_ids_[i] + "'");
            }
        }
    }
}

AnnotationTensor AnnotationTensor::select_raters(const std::vector<std::size_t>& keep) const {
    std::vector<std::string> ids;
    ids.reserve(keep.size());
    for (auto m : keep) {
        ids.push_back(rater_ids_.at(m));
    }
    AnnotationTensor out(std::move(ids), theory_ids_, scenario_ids_);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        for (std::size_t j = 0; j < theories(); ++j) {
            for (std::size_t i = 0; i < scenarios(); ++i) {
                if (present(keep[k], j, i)) {
                    out.set(k, j, i, score(keep[k], j, i));
                }
            }
        }
    }
    return out;
}

AnnotationTensor AnnotationTensor::permute_scenarios(const std::vector<std::size_t>& order) const {
    if (order.size() != scenarios()) {
        throw ValidationError("scenario permutation has wrong length");
    }
    std::vector<std::string> ids;
    ids.reserve(order.size());
    for (auto i : order) {
        ids.push_back(scenario_ids_.at(i));
    }
    AnnotationTensor out(rater_ids_, theory_ids_, std::move(ids));
    for (std::size_t m = 0; m < raters(); ++m) {
        for (std::size_t j = 0; j < theories(); ++j) {
            for (std::size_t k = 0; k < order.size(); ++k) {
                if (present(m, j, order[k])) {
                    out.set(m, j, k, score(m, j, order[k]));
                }
            }
        }
    }
    return out;
}

std::size_t index_of(const std::vector<std::string>& ids, const std::string& id, const char* axis) {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) {
        throw ValidationError(std::string("unknown ") + axis + " id '" + id + "'");
    }
    return static_cast<std::size_t>(it - ids.begin());
}

}  // namespace tnagg
