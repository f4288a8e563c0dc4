#pragma once

// Shared setup for the reference realignment run: the reference simulation,
// its EM consensus, and a randomly initialized toy annotator for the least
// reliable rater on one theory.

#include <cstdint>
#include <string>
#include <vector>

#include "tnagg/em.hpp"
#include "tnagg/realign.hpp"
#include "tnagg/simulation.hpp"

namespace reference {

struct RealignSetup {
    tnagg::SimOutput sim;
    tnagg::ConsensusResult consensus;
    std::size_t rater = 0;
    std::size_t theory = 0;
    tnagg::RealMatrix features;
    std::vector<tnagg::TargetDistribution> targets;
    tnagg::ToyAnnotator initial;
};

inline RealignSetup realign_setup(std::size_t theory = 0, std::uint64_t seed = 7) {
    using namespace tnagg;
    RealignSetup s;
    s.sim = simulate(reference_sim_config());
    s.consensus = run_em(s.sim.annotations, EmConfig{});
    s.rater = index_of(s.sim.annotations.rater_ids(), "tnd4", "rater");
    s.theory = theory;
    s.features = scenario_features(s.sim.annotations, s.rater, FeatureConfig{16, 0.25, seed});
    s.targets = targets_from_gamma(s.consensus.gamma.row(theory));
    s.initial = ToyAnnotator(s.sim.annotations.theory_ids()[theory], 3, 16, seed + 1);
    return s;
}

inline tnagg::RealignConfig reference_realign_config() {
    tnagg::RealignConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 40;
    cfg.batch_size = 32;
    cfg.seed = 7;
    return cfg;
}

}  // namespace reference
