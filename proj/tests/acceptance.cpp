// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is nonzero when any criterion fails.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "reference_run.hpp"
#include "tnagg/em.hpp"
#include "tnagg/io.hpp"
#include "tnagg/metrics.hpp"
#include "tnagg/realign.hpp"
#include "tnagg/simulation.hpp"
#include "tnagg/stats.hpp"

#ifndef TNAGG_CLI_PATH
#error "TNAGG_CLI_PATH must name the CLI binary"
#endif

using namespace tnagg;
namespace fs = std::filesystem;

namespace {

constexpr double kIntegralTol = 1e-8;
constexpr double kSpotRelTol = 1e-9;
constexpr double kKsTol = 0.01;
constexpr double kMeanTarget = 0.79447;
constexpr double kMeanTol = 0.002;
constexpr double kParamTol = 0.02;
constexpr double kAccuracyMin = 0.95;
constexpr std::size_t kIterCap = 1000;
constexpr double kEStepTol = 1e-10;
constexpr double kRandomEmMax = 60.0;
constexpr double kRandomGapMin = 15.0;
constexpr double kGradTol = kGradCheckTolerance;
constexpr double kPearsonTol = 1e-12;
constexpr double kSymTol = 1e-12;

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

// ---- 1 -------------------------------------------------------------------

Outcome density() {
    Outcome o;
    double worst_integral = 0.0;
    for (int k = 1; k <= 9; ++k) {
        for (double sigma : {0.05, 0.1, 0.2, 0.5}) {
            const TruncNormParams p{0.1 * k, sigma};
            const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                [&](double a) { return tn_pdf(a, p); }, 0.0, 1.0, 15, 1e-13);
            worst_integral = std::max(worst_integral, std::abs(integral - 1.0));
        }
    }
    double worst_spot = 0.0;
    for (double mu : {0.0, 0.05, 0.3, 0.5, 0.9, 1.2}) {
        for (double sigma : {0.01, 0.1, 0.13, 0.6, 1.0}) {
            for (double a : {0.0, 0.21, 0.5, 0.93, 1.0}) {
                const double ref = oracle::tn_pdf_d(a, mu, sigma);
                if (ref < 1e-250) continue;
                worst_spot = std::max(worst_spot, std::abs(tn_pdf(a, {mu, sigma}) - ref) / ref);
            }
        }
    }
    o.pass = worst_integral <= kIntegralTol && worst_spot <= kSpotRelTol;
    o.detail = "max |integral-1| = " + fmt(worst_integral, 3) + " (tol " + fmt(kIntegralTol) +
               "), max rel err vs 50-digit oracle = " + fmt(worst_spot, 3) + " (tol " + fmt(kSpotRelTol) + ")";
    return o;
}

// ---- 2 -------------------------------------------------------------------

Outcome sampler() {
    Outcome o;
    const TruncNormParams settings[] = {{0.8, 0.1}, {0.2, 0.3}, {0.5, 0.05}, {0.95, 0.6}};
    double worst_ks = 0.0;
    std::uint64_t seed = 1000;
    for (const auto& p : settings) {
        Rng rng(seed++);
        std::vector<double> xs(100000);
        for (auto& x : xs) x = tn_sample(p, rng);
        std::sort(xs.begin(), xs.end());
        const double n = static_cast<double>(xs.size());
        double ks = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const double f = oracle::tn_cdf_fast(xs[k], p.mu, p.sigma);
            ks = std::max({ks, std::abs(f - static_cast<double>(k) / n), std::abs(f - static_cast<double>(k + 1) / n)});
        }
        worst_ks = std::max(worst_ks, ks);
    }
    Rng rng(2024);
    double sum = 0.0;
    for (int k = 0; k < 100000; ++k) sum += tn_sample({0.8, 0.1}, rng);
    const double mean = sum / 100000.0;
    const double analytic = oracle::tn_mean_d(0.8, 0.1);
    o.pass = worst_ks < kKsTol && std::abs(mean - kMeanTarget) <= kMeanTol;
    o.detail = "max KS over 4 settings = " + fmt(worst_ks, 4) + " (tol " + fmt(kKsTol) + "), mean TND(0.8, 0.1^2) = " +
               fmt(mean, 6) + " vs " + fmt(kMeanTarget) + " +- " + fmt(kMeanTol) + " (analytic " + fmt(analytic, 8) + ")";
    return o;
}

// ---- 3 -------------------------------------------------------------------

Outcome em_recovery(const SimOutput& sim, const ConsensusResult& r) {
    Outcome o;
    const SimConfig cfg = reference_sim_config();
    double worst_mu = 0.0, worst_sigma = 0.0;
    for (const auto& spec : cfg.raters) {
        const std::size_t m = index_of(sim.annotations.rater_ids(), spec.id, "rater");
        const auto& p = r.reliability[m];
        worst_mu = std::max({worst_mu, std::abs(p.mu1 - spec.pos.mu), std::abs(p.mu0 - spec.neg.mu)});
        worst_sigma = std::max({worst_sigma, std::abs(p.sigma1 - spec.pos.sigma), std::abs(p.sigma0 - spec.neg.sigma)});
    }
    std::size_t agree = 0;
    for (std::size_t k = 0; k < r.labels.size(); ++k) agree += r.labels.data()[k] == sim.truth.data()[k];
    const double acc = static_cast<double>(agree) / static_cast<double>(r.labels.size());
    o.pass = r.converged && r.iterations < kIterCap && worst_mu <= kParamTol && worst_sigma <= kParamTol &&
             acc >= kAccuracyMin;
    o.detail = "converged=" + std::string(r.converged ? "yes" : "no") + " in " + std::to_string(r.iterations) +
               " iters (cap " + std::to_string(kIterCap) + "), max |mu err| = " + fmt(worst_mu, 3) +
               ", max |sigma err| = " + fmt(worst_sigma, 3) + " (tol " + fmt(kParamTol) + "), accuracy = " + fmt(acc, 5) +
               " (min " + fmt(kAccuracyMin) + ")";
    return o;
}

// ---- 4 -------------------------------------------------------------------

Outcome estep_exactness() {
    Outcome o;
    Rng rng(4242);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t l = 2 + static_cast<std::size_t>(trial % 2);
        std::vector<std::string> raters;
        for (std::size_t m = 0; m < l; ++m) raters.push_back("r" + std::to_string(m));
        AnnotationTensor t(raters, {"t"}, {"s0", "s1", "s2"});
        ReliabilityParams theta(l);
        for (std::size_t m = 0; m < l; ++m) {
            theta[m] = {0.5 + 0.4 * uniform01(rng), 0.08 + 0.3 * uniform01(rng), 0.1 + 0.4 * uniform01(rng),
                        0.08 + 0.3 * uniform01(rng)};
            for (std::size_t i = 0; i < 3; ++i) t.set(m, 0, i, uniform01(rng));
        }
        EmConfig cfg;
        cfg.prior_pos = 0.1 + 0.8 * uniform01(rng);
        const Posterior post = e_step(t, theta, cfg);
        for (std::size_t i = 0; i < 3; ++i) {
            oracle::hp pos = cfg.prior_pos, neg = 1 - oracle::hp(cfg.prior_pos);
            for (std::size_t m = 0; m < l; ++m) {
                pos *= oracle::tn_pdf(t.score(m, 0, i), theta[m].mu1, theta[m].sigma1);
                neg *= oracle::tn_pdf(t.score(m, 0, i), theta[m].mu0, theta[m].sigma0);
            }
            worst = std::max(worst, std::abs(post.gamma(0, i) - static_cast<double>(pos / (pos + neg))));
        }
    }
    o.pass = worst <= kEStepTol;
    o.detail = "100 instances (L in {2,3}), max |log-domain - linear| = " + fmt(worst, 3) + " (tol " + fmt(kEStepTol) + ")";
    return o;
}

// ---- 5 -------------------------------------------------------------------

Outcome robustness() {
    Outcome o;
    const RobustnessReport r = random01_robustness_experiment(reference_sim_config());
    const auto& ids = r.em_with_random.rater_ids;
    const std::size_t z = index_of(ids, kRandom01Id, "rater");
    const double em_z = r.em_with_random.mean_f1(z);
    const double mean_z = r.mean_with_random.mean_f1(z);
    bool lowest = true;
    double next = 100.0;
    for (std::size_t m = 0; m < ids.size(); ++m) {
        if (m == z) continue;
        next = std::min(next, r.em_with_random.mean_f1(m));
        lowest = lowest && em_z < r.em_with_random.mean_f1(m);
    }
    const bool a = lowest && em_z <= kRandomEmMax;
    const bool b = mean_z - em_z >= kRandomGapMin;
    const bool c = r.mean_abs_delta_em() < r.mean_abs_delta_mean();
    o.pass = a && b && c;
    o.detail = std::string("(a) ") + (a ? "ok" : "FAIL") + " EM F1 Random01 = " + fmt(em_z, 4) + " < min other " +
               fmt(next, 4) + ", <= " + fmt(kRandomEmMax) + "; (b) " + (b ? "ok" : "FAIL") + " mean-agg F1 Random01 = " +
               fmt(mean_z, 4) + ", gap " + fmt(mean_z - em_z, 4) + " >= " + fmt(kRandomGapMin) + "; (c) " +
               (c ? "ok" : "FAIL") + " mean |dF1| EM = " + fmt(r.mean_abs_delta_em(), 4) + " < mean-agg " +
               fmt(r.mean_abs_delta_mean(), 4);
    return o;
}

// ---- 6 -------------------------------------------------------------------

Outcome binarization() {
    Outcome o;
    // Mean of 0.25 and 0.75 is exactly 0.5 in binary floating point.
    AnnotationTensor t({"a", "b"}, {"t0", "t1"}, {"s0", "s1", "s2", "s3"});
    const double sa[2][4] = {{0.25, 0.9, 0.1, 0.75}, {0.6, 0.3, 0.25, 0.45}};
    const double sb[2][4] = {{0.75, 0.8, 0.2, 0.25}, {0.2, 0.3, 0.75, 0.55}};
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < 4; ++i) {
            t.set(0, j, i, sa[j][i]);
            t.set(1, j, i, sb[j][i]);
        }
    EmConfig strict, inclusive;
    inclusive.boundary_inclusive = true;
    const ConsensusResult cs = run_mean(t, strict);
    const ConsensusResult ci = run_mean(t, inclusive);

    // EM path: choose tau equal to an attained posterior.
    const SimOutput sim = reference::realign_setup().sim;
    const ConsensusResult em = run_em(sim.annotations, EmConfig{});
    EmConfig em_strict, em_inclusive;
    em_strict.tau = em_inclusive.tau = em.gamma(1, 7);
    em_inclusive.boundary_inclusive = true;

    std::size_t at_tau = 0, differing = 0, bad = 0;
    const auto compare = [&](const RealMatrix& g, const LabelMatrix& s, const LabelMatrix& i, double tau) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const bool eq = g.data()[k] == tau;
            const bool diff = s.data()[k] != i.data()[k];
            at_tau += eq;
            differing += diff;
            if (eq != diff) ++bad;
        }
    };
    compare(cs.gamma, cs.labels, ci.labels, 0.5);
    compare(em.gamma, binarize(em.gamma, em_strict.tau, false), binarize(em.gamma, em_inclusive.tau, true), em_strict.tau);
    o.pass = bad == 0 && at_tau >= 4;
    o.detail = std::to_string(at_tau) + " cells with gamma == tau, " + std::to_string(differing) +
               " cells where strict and inclusive labels differ, " + std::to_string(bad) + " mismatches (must be 0)";
    return o;
}

// ---- 7 -------------------------------------------------------------------

Outcome realignment() {
    Outcome o;
    std::ostringstream detail;
    double worst_grad = 0.0;
    bool ok = true;
    const RealignConfig cfg = reference::reference_realign_config();
    for (std::size_t theory = 0; theory < 5; ++theory) {
        const reference::RealignSetup s = reference::realign_setup(theory);
        const GradCheckReport g = gradient_check(s.initial, s.targets, s.features, {}, 20, theory, true);
        worst_grad = std::max(worst_grad, g.max_rel_error);
        const RealignResult r = realign(s.initial, s.targets, s.features, cfg);
        const auto labels = s.consensus.labels.row(theory);
        const double before = toy_alignment_f1(s.initial, s.features, labels, 0.5, false).f1;
        const double after = toy_alignment_f1(r.annotator, s.features, labels, 0.5, false).f1;
        const double first = r.trajectory.front().loss.total;
        const double last = r.trajectory.back().loss.total;
        ok = ok && g.passed && last < first && after >= before;
        detail << (theory ? "; " : "") << s.initial.theory_id() << ": loss " << fmt(first, 4) << "->" << fmt(last, 4)
               << ", F1 " << fmt(before, 4) << "->" << fmt(after, 4);
    }
    o.pass = ok && worst_grad < kGradTol;
    o.detail = "rater tnd4; grad check 20 probes x 5 theories, max rel err = " + fmt(worst_grad, 3) + " (tol " +
               fmt(kGradTol) + "); " + detail.str();
    return o;
}

// ---- 8 -------------------------------------------------------------------

Outcome metrics(const ConsensusResult& ref) {
    Outcome o;
    using L = std::vector<unsigned char>;
    using V = std::vector<double>;
    const bool f1_half = binary_f1(L{1, 1, 0, 0}, L{1, 0, 1, 0}).f1 == 50.0;
    const bool f1_full = binary_f1(L{1, 0, 1}, L{1, 0, 1}).f1 == 100.0;
    const F1Stats deg = binary_f1(L{0, 0, 0}, L{0, 0, 0});
    const bool f1_deg = deg.f1 == 0.0 && deg.degenerate;
    const double r08 = pearson_corr(V{1, 2, 3, 4}, V{1, 3, 2, 4});
    const double rp1 = pearson_corr(V{0, 1, 2}, V{0, 2, 4});
    const double rm1 = pearson_corr(V{0, 1, 2}, V{4, 2, 0});
    const bool pearson = std::abs(r08 - 0.8) <= kPearsonTol && std::abs(rp1 - 1.0) <= kPearsonTol &&
                         std::abs(rm1 + 1.0) <= kPearsonTol;
    const CorrelationMatrix c = theory_correlation_matrix(ref.gamma);
    double asym = 0.0;
    bool diag = true;
    for (std::size_t a = 0; a < c.r.rows(); ++a) {
        diag = diag && c.r(a, a) == 1.0;
        for (std::size_t b = 0; b < c.r.cols(); ++b) asym = std::max(asym, std::abs(c.r(a, b) - c.r(b, a)));
    }
    o.pass = f1_half && f1_full && f1_deg && pearson && asym <= kSymTol && diag && c.undefined_pairs == 0;
    o.detail = std::string("F1 {50, 100, degenerate 0}: ") + (f1_half && f1_full && f1_deg ? "ok" : "FAIL") +
               "; Pearson r = " + fmt(r08, 17) + ", " + fmt(rp1, 17) + ", " + fmt(rm1, 17) + " (tol " +
               fmt(kPearsonTol) + "); 5x5 theory matrix max asym = " + fmt(asym, 3) + ", unit diagonal " +
               (diag ? "yes" : "no");
    return o;
}

// ---- 9 -------------------------------------------------------------------

std::string read_without_timestamps(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string line, out;
    while (std::getline(in, line)) {
        if (line.find("\"created_at\"") != std::string::npos) continue;
        out += line;
        out += '\n';
    }
    return out;
}

int shell(const fs::path& dir, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" + std::string(TNAGG_CLI_PATH) + "' " + args +
                            " > cli.log 2>&1";
    return std::system(cmd.c_str());
}

Outcome determinism() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / ("tnagg-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::vector<std::string> steps = {
        "simulate --config sim.json --seed 20240601 --annotations-out annotations.csv --truth-out truth.csv",
        "aggregate --annotations annotations.csv --out consensus.json --method em",
        "evaluate --annotations annotations.csv --consensus consensus.json --out evaluation.json",
        "realign --annotations annotations.csv --consensus consensus.json --rater tnd4 "
        "--theories theory0,theory2 --config realign.json --seed 7 --out-dir realign",
    };
    std::vector<fs::path> dirs = {root / "run1", root / "run2"};
    for (const auto& d : dirs) {
        fs::create_directories(d);
        std::ofstream(d / "sim.json") << dump_json(sim_config_to_json(reference_sim_config()));
        std::ofstream(d / "realign.json")
            << R"({"learning_rate": 0.5, "epochs": 40, "batch_size": 32, "seed": 7, "grad_check": true,)"
            << R"( "use_cosine_term": true, "tokens": 3, "dim": 16, "feature_noise": 0.25})" << "\n";
        for (const auto& step : steps) {
            if (shell(d, step) != 0) {
                o.pass = false;
                o.detail = "command failed in " + d.string() + ": " + step;
                return o;
            }
        }
    }
    std::size_t compared = 0;
    std::vector<std::string> differing;
    for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
        if (!e.is_regular_file() || e.path().filename() == "cli.log") continue;
        const fs::path rel = fs::relative(e.path(), dirs[0]);
        ++compared;
        if (!fs::exists(dirs[1] / rel) || read_without_timestamps(e.path()) != read_without_timestamps(dirs[1] / rel)) {
            differing.push_back(rel.string());
        }
    }
    o.pass = differing.empty() && compared >= 10;
    o.detail = std::to_string(compared) + " artifacts compared byte-for-byte (created_at lines excluded), " +
               std::to_string(differing.size()) + " differ";
    for (const auto& d : differing) o.detail += " [" + d + "]";
    if (o.pass) fs::remove_all(root);
    return o;
}

}  // namespace

int main() {
    const SimOutput sim = simulate(reference_sim_config());
    const ConsensusResult ref = run_em(sim.annotations, EmConfig{});

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"density correctness", density},
        {"sampler fidelity", sampler},
        {"EM oracle recovery", [&] { return em_recovery(sim, ref); }},
        {"E-step exactness", estep_exactness},
        {"Random01 robustness", robustness},
        {"binarization variants", binarization},
        {"realignment", realignment},
        {"metrics", [&] { return metrics(ref); }},
        {"end-to-end determinism", determinism},
    };

    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (k + 1) << " (" << criteria[k].first << ", "
                  << fmt(secs, 3) << " s): " << o.detail << std::endl;
    }
    std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
