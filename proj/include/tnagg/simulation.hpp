#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnagg/em.hpp"
#include "tnagg/matrix.hpp"
#include "tnagg/metrics.hpp"
#include "tnagg/stats.hpp"
#include "tnagg/tensor.hpp"

namespace tnagg {

enum class RaterKind { tnd, random01, constant };

const char* to_string(RaterKind kind);
RaterKind rater_kind_from_string(const std::string& s);

struct RaterSpec {
    std::string id;
    RaterKind kind = RaterKind::tnd;
    TruncNormParams pos{0.8, 0.1};  // tnd only
    TruncNormParams neg{0.2, 0.1};  // tnd only
    double value = 0.5;             // constant only

    static RaterSpec tnd(std::string id, TruncNormParams pos, TruncNormParams neg);
    static RaterSpec random01(std::string id);
    static RaterSpec constant(std::string id, double value);
};

struct SimConfig {
    std::size_t n_scenarios = 2000;
    std::size_t n_theories = 5;
    double prevalence = 0.5;
    std::vector<RaterSpec> raters;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimOutput {
    AnnotationTensor annotations;  // rater axis sorted by id
    LabelMatrix truth;             // theories x scenarios
    std::vector<RaterSpec> generating_params;
};

// Id used for the adversarial rater added by the robustness experiment.
inline constexpr const char* kRandom01Id = "Random01";

std::vector<std::string> theory_ids_for(std::size_t n_theories);
std::vector<std::string> scenario_ids_for(std::size_t n_scenarios);

// The latent labels depend only on the seed, and every rater draws from its own
// generator keyed by (seed, rater id), so adding or removing a rater leaves
// the other raters' scores unchanged.
SimOutput simulate(const SimConfig& cfg);

// Four tnd raters of graded reliability, N = 2000, M = 5, prevalence 0.5.
SimConfig reference_sim_config(std::uint64_t seed = 20240601);

struct RobustnessReport {
    std::vector<std::string> base_rater_ids;
    AlignmentReport em_base;
    AlignmentReport em_with_random;
    AlignmentReport mean_base;
    AlignmentReport mean_with_random;
    // F1(with Random01) - F1(without), base raters x theories.
    RealMatrix em_delta;
    RealMatrix mean_delta;
    bool random_added = false;

    double mean_abs_delta_em() const;
    double mean_abs_delta_mean() const;
};

// Runs EM and mean aggregation on the base raters (a) and on the base raters
// plus one Random01 rater (b). With add_random01 = false, (b) repeats (a).
RobustnessReport random01_robustness_experiment(const SimConfig& base, const EmConfig& em_cfg = {},
                                                bool add_random01 = true);

}  // namespace tnagg
