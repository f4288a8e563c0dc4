#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "tnagg/errors.hpp"
#include "tnagg/simulation.hpp"

using namespace tnagg;

namespace {

SimConfig small_config(std::uint64_t seed) {
    SimConfig cfg;
    cfg.n_scenarios = 400;
    cfg.n_theories = 5;
    cfg.seed = seed;
    cfg.raters = {RaterSpec::tnd("b", {0.8, 0.1}, {0.2, 0.1}), RaterSpec::tnd("a", {0.7, 0.12}, {0.3, 0.12}),
                  RaterSpec::random01("z"), RaterSpec::constant("c", 0.5)};
    return cfg;
}

std::size_t rater(const SimOutput& out, const std::string& id) {
    return index_of(out.annotations.rater_ids(), id, "rater");
}

}  // namespace

TEST_CASE("simulate orders raters by id and fills every cell") {
    const SimOutput out = simulate(small_config(1));
    CHECK(out.annotations.rater_ids() == std::vector<std::string>{"a", "b", "c", "z"});
    CHECK(out.annotations.theories() == 5);
    CHECK(out.annotations.scenarios() == 400);
    CHECK(out.truth.rows() == 5);
    CHECK(out.truth.cols() == 400);
    CHECK_NOTHROW(out.annotations.validate());
}

TEST_CASE("rater kinds produce their documented score sets") {
    const SimOutput out = simulate(small_config(2));
    const auto& t = out.annotations;
    const std::size_t c = rater(out, "c"), z = rater(out, "z");
    std::size_t ones = 0, cells = 0;
    for (std::size_t m = 0; m < t.raters(); ++m)
        for (std::size_t j = 0; j < t.theories(); ++j)
            for (std::size_t i = 0; i < t.scenarios(); ++i) {
                const double a = t.score(m, j, i);
                CHECK(a >= 0.0);
                CHECK(a <= 1.0);
                if (m == c) CHECK(a == 0.5);
                if (m == z) {
                    CHECK((a == 0.0 || a == 1.0));
                    ones += a == 1.0;
                    ++cells;
                }
            }
    CHECK(cells == 2000);
}

TEST_CASE("random01 emits ones half the time over 10^4 cells") {
    SimConfig cfg;
    cfg.n_scenarios = 2000;
    cfg.n_theories = 5;
    cfg.seed = 77;
    cfg.raters = {RaterSpec::random01("r"), RaterSpec::constant("k", 0.1)};
    const SimOutput out = simulate(cfg);
    const std::size_t m = rater(out, "r");
    double ones = 0;
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t i = 0; i < 2000; ++i) ones += out.annotations.score(m, j, i);
    CHECK(std::abs(ones / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("tnd rater mean on positive cells matches the truncated mean") {
    const SimOutput out = simulate(small_config(3));
    const std::size_t m = rater(out, "b");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t i = 0; i < 400; ++i)
            if (out.truth(j, i) == 1) {
                sum += out.annotations.score(m, j, i);
                ++n;
            }
    REQUIRE(n > 500);
    CHECK(std::abs(sum / static_cast<double>(n) - oracle::tn_mean_d(0.8, 0.1)) <= 0.01);
    CHECK(std::abs(sum / static_cast<double>(n) - 0.794) <= 0.01);
}

TEST_CASE("prevalence controls the latent label rate") {
    SimConfig cfg = small_config(4);
    cfg.prevalence = 0.2;
    const SimOutput out = simulate(cfg);
    double pos = 0;
    for (auto v : out.truth.data()) pos += v;
    CHECK(std::abs(pos / 2000.0 - 0.2) <= 0.03);
}

TEST_CASE("simulate is bit-identical for a fixed seed and differs across seeds") {
    const SimOutput a = simulate(small_config(5));
    const SimOutput b = simulate(small_config(5));
    const SimOutput c = simulate(small_config(6));
    CHECK(a.annotations == b.annotations);
    CHECK(a.truth == b.truth);
    CHECK_FALSE(a.annotations == c.annotations);
}

TEST_CASE("adding a rater leaves the other raters' draws unchanged") {
    SimConfig base = small_config(9);
    SimConfig more = base;
    more.raters.push_back(RaterSpec::tnd("aa", {0.6, 0.2}, {0.4, 0.2}));
    const SimOutput a = simulate(base);
    const SimOutput b = simulate(more);
    CHECK(a.truth == b.truth);
    for (const auto& id : a.annotations.rater_ids()) {
        const std::size_t ma = rater(a, id), mb = rater(b, id);
        for (std::size_t j = 0; j < 5; ++j)
            for (std::size_t i = 0; i < 400; ++i) CHECK(a.annotations.score(ma, j, i) == b.annotations.score(mb, j, i));
    }
}

TEST_CASE("config validation") {
    SimConfig cfg = small_config(1);
    cfg.prevalence = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_config(1);
    cfg.n_scenarios = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_config(1);
    cfg.raters.push_back(RaterSpec::constant("a", 0.3));
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_config(1);
    cfg.raters.push_back(RaterSpec::constant("q", 1.5));
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_config(1);
    cfg.raters.push_back(RaterSpec::tnd("q", {0.5, 0.0}, {0.5, 0.1}));
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK(rater_kind_from_string("random01") == RaterKind::random01);
    CHECK_THROWS_AS(rater_kind_from_string("gmm"), ValidationError);
}

TEST_CASE("robustness experiment without the adversary has zero deltas") {
    SimConfig cfg = reference_sim_config();
    cfg.n_scenarios = 300;
    const RobustnessReport r = random01_robustness_experiment(cfg, EmConfig{}, false);
    CHECK_FALSE(r.random_added);
    for (double d : r.em_delta.data()) CHECK(d == 0.0);
    for (double d : r.mean_delta.data()) CHECK(d == 0.0);
    CHECK(r.mean_abs_delta_em() == 0.0);
}

TEST_CASE("robustness experiment ranks Random01 last under EM") {
    SimConfig cfg = reference_sim_config();
    cfg.n_scenarios = 600;
    const RobustnessReport r = random01_robustness_experiment(cfg);
    REQUIRE(r.random_added);
    const auto& ids = r.em_with_random.rater_ids;
    const std::size_t z = index_of(ids, kRandom01Id, "rater");
    for (std::size_t m = 0; m < ids.size(); ++m)
        if (m != z) CHECK(r.em_with_random.mean_f1(z) < r.em_with_random.mean_f1(m));
    CHECK(r.mean_with_random.mean_f1(z) > r.em_with_random.mean_f1(z));
    CHECK(r.mean_abs_delta_em() < r.mean_abs_delta_mean());
}

TEST_CASE("robustness experiment needs two tnd raters") {
    SimConfig cfg;
    cfg.n_scenarios = 10;
    cfg.raters = {RaterSpec::tnd("a", {0.8, 0.1}, {0.2, 0.1}), RaterSpec::constant("b", 0.5)};
    CHECK_THROWS_AS(random01_robustness_experiment(cfg), ValidationError);
}
