#include "tnagg/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string_view>

#include "tnagg/errors.hpp"

namespace tnagg {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> padded_ids(const std::string& prefix, std::size_t n) {
    const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::string num = std::to_string(k);
        ids.push_back(prefix + std::string(width - num.size(), '0') + num);
    }
    return ids;
}

double draw_score(const RaterSpec& spec, bool positive, Rng& rng) {
    switch (spec.kind) {
        case RaterKind::tnd:
            return tn_sample(positive ? spec.pos : spec.neg, rng);
        case RaterKind::random01:
            return uniform01(rng) < 0.5 ? 0.0 : 1.0;
        case RaterKind::constant:
            return spec.value;
    }
    return 0.0;
}

RealMatrix f1_delta(const AlignmentReport& with, const AlignmentReport& without) {
    RealMatrix out(without.stats.rows(), without.stats.cols(), 0.0);
    for (std::size_t m = 0; m < without.stats.rows(); ++m) {
        const std::size_t k = index_of(with.rater_ids, without.rater_ids[m], "rater");
        for (std::size_t j = 0; j < without.stats.cols(); ++j) {
            out(m, j) = with.f1(k, j) - without.f1(m, j);
        }
    }
    return out;
}

double mean_abs(const RealMatrix& x) {
    if (x.size() == 0) {
        return 0.0;
    }
    double s = 0.0;
    for (double v : x.data()) {
        s += std::abs(v);
    }
    return s / static_cast<double>(x.size());
}

}  // namespace

const char* to_string(RaterKind kind) {
    switch (kind) {
        case RaterKind::tnd:
            return "tnd";
        case RaterKind::random01:
            return "random01";
        case RaterKind::constant:
            return "constant";
    }
    return "?";
}

RaterKind rater_kind_from_string(const std::string& s) {
    if (s == "tnd") return RaterKind::tnd;
    if (s == "random01") return RaterKind::random01;
    if (s == "constant") return RaterKind::constant;
    throw ValidationError("unknown rater kind '" + s + "' (expected tnd, random01 or constant)");
}

RaterSpec RaterSpec::tnd(std::string id, TruncNormParams pos, TruncNormParams neg) {
    RaterSpec r;
    r.id = std::move(id);
    r.kind = RaterKind::tnd;
    r.pos = pos;
    r.neg = neg;
    return r;
}

RaterSpec RaterSpec::random01(std::string id) {
    RaterSpec r;
    r.id = std::move(id);
    r.kind = RaterKind::random01;
    return r;
}

RaterSpec RaterSpec::constant(std::string id, double value) {
    RaterSpec r;
    r.id = std::move(id);
    r.kind = RaterKind::constant;
    r.value = value;
    return r;
}

void SimConfig::validate() const {
    if (n_scenarios < 1 || n_theories < 1) {
        throw ValidationError("simulation needs at least one scenario and one theory");
    }
    if (!(prevalence > 0.0 && prevalence < 1.0)) {
        throw ValidationError("prevalence must lie in (0, 1)");
    }
    if (raters.empty()) {
        throw ValidationError("simulation needs at least one rater");
    }
    std::set<std::string> ids;
    for (const auto& r : raters) {
        if (r.id.empty()) {
            throw ValidationError("rater id must not be empty");
        }
        if (!ids.insert(r.id).second) {
            throw ValidationError("duplicate rater id '" + r.id + "'");
        }
        try {
            if (r.kind == RaterKind::tnd) {
                r.pos.validate();
                r.neg.validate();
                tn_mean(r.pos);
                tn_mean(r.neg);
            }
        } catch (const DomainError& e) {
            throw ValidationError("rater '" + r.id + "': " + e.what());
        }
        if (r.kind == RaterKind::constant && !(r.value >= 0.0 && r.value <= 1.0)) {
            throw ValidationError("rater '" + r.id + "': constant value outside [0, 1]");
        }
    }
}

std::vector<std::string> theory_ids_for(std::size_t n) { return padded_ids("theory", n); }

std::vector<std::string> scenario_ids_for(std::size_t n) { return padded_ids("s", n); }

SimOutput simulate(const SimConfig& cfg) {
    cfg.validate();

    std::vector<RaterSpec> specs = cfg.raters;
    std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    const std::size_t M = cfg.n_theories;
    const std::size_t N = cfg.n_scenarios;

    SimOutput out;
    out.truth = LabelMatrix(M, N, 0);
    Rng truth_rng(derive_seed(cfg.seed, fnv1a("latent-truth")));
    for (auto& t : out.truth.data()) {
        t = uniform01(truth_rng) < cfg.prevalence ? 1 : 0;
    }

    std::vector<std::string> rater_ids;
    for (const auto& s : specs) {
        rater_ids.push_back(s.id);
    }
    out.annotations = AnnotationTensor(std::move(rater_ids), theory_ids_for(M), scenario_ids_for(N));
    for (std::size_t m = 0; m < specs.size(); ++m) {
        Rng rng(derive_seed(cfg.seed, fnv1a("rater:" + specs[m].id)));
        for (std::size_t j = 0; j < M; ++j) {
            for (std::size_t i = 0; i < N; ++i) {
                out.annotations.set(m, j, i, draw_score(specs[m], out.truth(j, i) != 0, rng));
            }
        }
    }
    out.generating_params = std::move(specs);
    return out;
}

SimConfig reference_sim_config(std::uint64_t seed) {
    SimConfig cfg;
    cfg.n_scenarios = 2000;
    cfg.n_theories = 5;
    cfg.prevalence = 0.5;
    cfg.seed = seed;
    constexpr double sigma = 0.12;
    const double pos[] = {0.70, 0.65, 0.60, 0.55};
    const double neg[] = {0.30, 0.35, 0.40, 0.45};
    for (int k = 0; k < 4; ++k) {
        cfg.raters.push_back(RaterSpec::tnd("tnd" + std::to_string(k + 1), {pos[k], sigma}, {neg[k], sigma}));
    }
    return cfg;
}

double RobustnessReport::mean_abs_delta_em() const { return mean_abs(em_delta); }

double RobustnessReport::mean_abs_delta_mean() const { return mean_abs(mean_delta); }

RobustnessReport random01_robustness_experiment(const SimConfig& base, const EmConfig& em_cfg,
                                                bool add_random01) {
    base.validate();
    const auto tnd_count = std::count_if(base.raters.begin(), base.raters.end(),
                                         [](const auto& r) { return r.kind == RaterKind::tnd; });
    if (tnd_count < 2) {
        throw ValidationError("robustness experiment needs at least two tnd raters");
    }

    SimConfig with = base;
    if (add_random01) {
        with.raters.push_back(RaterSpec::random01(kRandom01Id));
    }

    const SimOutput a = simulate(base);
    const SimOutput b = simulate(with);

    RobustnessReport rep;
    rep.base_rater_ids = a.annotations.rater_ids();
    rep.random_added = add_random01;

    rep.em_base = f1_alignment(a.annotations, run_em(a.annotations, em_cfg), em_cfg);
    rep.em_with_random = f1_alignment(b.annotations, run_em(b.annotations, em_cfg), em_cfg);
    rep.mean_base = f1_alignment(a.annotations, run_mean(a.annotations, em_cfg), em_cfg);
    rep.mean_with_random = f1_alignment(b.annotations, run_mean(b.annotations, em_cfg), em_cfg);

    rep.em_delta = f1_delta(rep.em_with_random, rep.em_base);
    rep.mean_delta = f1_delta(rep.mean_with_random, rep.mean_base);
    return rep;
}

}  // namespace tnagg
