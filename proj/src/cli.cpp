#include "tnagg/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "tnagg/errors.hpp"
#include "tnagg/io.hpp"

namespace tnagg {

namespace fs = std::filesystem;

namespace {

std::uint64_t fresh_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

RunManifest make_manifest(const std::string& command, const std::vector<fs::path>& inputs) {
    RunManifest m;
    m.command = command;
    for (const auto& p : inputs) {
        m.inputs.push_back({p.filename().string(), sha256_file(p)});
    }
    m.created_at = utc_timestamp();
    return m;
}

fs::path sidecar(const fs::path& p) {
    fs::path s = p;
    s += ".manifest.json";
    return s;
}

void require_same_axes(const AnnotationTensor& data, const ConsensusDocument& doc) {
    if (doc.theory_ids != data.theory_ids() || doc.scenario_ids != data.scenario_ids()) {
        throw ValidationError("consensus document theories/scenarios do not match the annotations");
    }
}

std::string fixed(double v, int digits = 2) {
    if (!std::isfinite(v)) {
        return "n/a";
    }
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct SimulateArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string annotations_out = "annotations.csv";
    std::string truth_out = "truth.csv";
};

int run_simulate(const SimulateArgs& a, std::ostream& out) {
    const json raw = read_json_file(a.config);
    SimConfig cfg = sim_config_from_json(raw);
    bool generated = false;
    if (a.seed) {
        cfg.seed = *a.seed;
    } else if (!raw.contains("seed")) {
        cfg.seed = fresh_seed();
        generated = true;
    }
    const SimOutput sim = simulate(cfg);

    RunManifest manifest = make_manifest("simulate", {a.config});
    manifest.config = sim_config_to_json(cfg);
    manifest.seed = cfg.seed;
    manifest.seed_generated = generated;

    StagedOutputs staged;
    staged.add(a.annotations_out, annotations_to_csv(sim.annotations));
    staged.add(a.truth_out, truth_to_csv(sim.truth, sim.annotations.theory_ids(), sim.annotations.scenario_ids()));
    staged.add(sidecar(a.annotations_out), dump_json(manifest.to_json()));
    staged.add(sidecar(a.truth_out), dump_json(manifest.to_json()));
    staged.commit();

    out << "simulated " << sim.annotations.raters() << " raters x " << sim.annotations.theories() << " theories x "
        << sim.annotations.scenarios() << " scenarios (seed " << cfg.seed << ")\n";
    return kExitOk;
}

struct AggregateArgs {
    std::string annotations;
    std::string out;
    std::string method = "em";
    EmConfig em;
};

int run_aggregate(const AggregateArgs& a, std::ostream& out) {
    a.em.validate();
    const AnnotationTensor data = load_annotations(a.annotations);

    ConsensusDocument doc;
    doc.method = a.method;
    doc.rater_ids = data.rater_ids();
    doc.theory_ids = data.theory_ids();
    doc.scenario_ids = data.scenario_ids();
    doc.result = a.method == "em" ? run_em(data, a.em) : run_mean(data, a.em);
    doc.manifest = make_manifest("aggregate", {a.annotations});
    doc.manifest.config = {{"method", a.method},
                           {"tau", a.em.tau},
                           {"boundary_inclusive", a.em.boundary_inclusive},
                           {"max_iters", a.em.max_iters},
                           {"tau_rp", a.em.tau_rp},
                           {"prior_pos", a.em.prior_pos},
                           {"init_mu0", a.em.init_mu0},
                           {"init_mu1", a.em.init_mu1},
                           {"init_sigma", a.em.init_sigma}};
    save_consensus(doc, a.out);

    out << "aggregate (" << a.method << "): " << data.theories() << "x" << data.scenarios() << " consensus";
    if (a.method == "em") {
        out << ", " << (doc.result.converged ? "converged" : "stopped") << " after " << doc.result.iterations
            << " iterations";
    }
    out << "\n";
    return kExitOk;
}

struct EvaluateArgs {
    std::string annotations;
    std::string consensus;
    std::string out;
};

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
    const AnnotationTensor data = load_annotations(a.annotations);
    const ConsensusDocument doc = load_consensus(a.consensus);
    require_same_axes(data, doc);

    EmConfig cfg;
    cfg.tau = doc.result.tau;
    cfg.boundary_inclusive = doc.result.boundary_inclusive;
    const AlignmentReport report = f1_alignment(data, doc.result, cfg);

    json j = {{"alignment", alignment_to_json(report)}, {"consensus_method", doc.method}};
    std::size_t undefined = 0;
    if (data.theories() >= 2) {
        const CorrelationMatrix corr = theory_correlation_matrix(doc.result.gamma);
        undefined = corr.undefined_pairs;
        j["correlation"] = correlation_to_json(corr, data.theory_ids());
    } else {
        j["correlation"] = nullptr;
    }
    RunManifest manifest = make_manifest("evaluate", {a.annotations, a.consensus});
    j["manifest"] = manifest.to_json();
    write_file_atomic(a.out, dump_json(j));

    for (std::size_t m = 0; m < data.raters(); ++m) {
        out << data.rater_ids()[m] << ": mean F1 " << fixed(report.mean_f1(m)) << "\n";
    }
    if (undefined > 0) {
        out << "warning: " << undefined << " theory pairs have undefined correlation (constant consensus row)\n";
    }
    return kExitOk;
}

struct RealignArgs {
    std::string annotations;
    std::string consensus;
    std::string rater;
    std::vector<std::string> theories;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

int run_realign(const RealignArgs& a, std::ostream& out) {
    const AnnotationTensor data = load_annotations(a.annotations);
    const ConsensusDocument doc = load_consensus(a.consensus);
    require_same_axes(data, doc);

    std::vector<fs::path> inputs = {a.annotations, a.consensus};
    RealignJob job;
    bool seed_in_config = false;
    if (!a.config.empty()) {
        const json raw = read_json_file(a.config);
        job = realign_job_from_json(raw);
        seed_in_config = raw.contains("seed");
        inputs.emplace_back(a.config);
    }
    bool generated = false;
    if (a.seed) {
        job.optimizer.seed = *a.seed;
    } else if (!seed_in_config) {
        job.optimizer.seed = fresh_seed();
        generated = true;
    }
    const std::uint64_t seed = job.optimizer.seed;

    const std::size_t rater = index_of(data.rater_ids(), a.rater, "rater");
    if (a.theories.empty()) {
        throw ValidationError("realign: at least one theory is required");
    }
    const RealMatrix features = scenario_features(data, rater, {job.dim, job.feature_noise, seed});

    RunManifest manifest = make_manifest("realign", inputs);
    manifest.config = realign_job_to_json(job);
    manifest.config["rater"] = a.rater;
    manifest.config["theories"] = a.theories;
    manifest.seed = seed;
    manifest.seed_generated = generated;

    EmConfig thresholds;
    thresholds.tau = doc.result.tau;
    thresholds.boundary_inclusive = doc.result.boundary_inclusive;
    const AlignmentReport rater_alignment = f1_alignment(data, doc.result, thresholds);

    StagedOutputs staged;
    std::string predictions = "theory_id,scenario_id,score_before,score_after\n";
    json summary = json::object();
    for (const auto& theory : a.theories) {
        const std::size_t j = index_of(data.theory_ids(), theory, "theory");
        const auto targets = targets_from_gamma(doc.result.gamma.row(j));
        const ToyAnnotator initial(theory, job.tokens, job.dim, derive_seed(seed, fnv1a("toy:" + theory)));

        const RealignResult result = realign(initial, targets, features, job.optimizer);
        const auto labels = doc.result.labels.row(j);
        const F1Stats before = toy_alignment_f1(initial, features, labels, thresholds.tau, thresholds.boundary_inclusive);
        const F1Stats after = toy_alignment_f1(result.annotator, features, labels, thresholds.tau, thresholds.boundary_inclusive);

        const auto scores_before = predict_scores(initial, features);
        const auto scores_after = predict_scores(result.annotator, features);
        for (std::size_t i = 0; i < data.scenarios(); ++i) {
            predictions += theory + "," + data.scenario_ids()[i] + "," + format_decimal(scores_before[i]) + "," +
                           format_decimal(scores_after[i]) + "\n";
        }
        const fs::path trajectory_path = fs::path(a.out_dir) / ("trajectory_" + theory + ".csv");
        staged.add(trajectory_path, trajectory_to_csv(result.trajectory));

        json entry = {{"rater_f1", rater_alignment.f1(rater, j)},
                      {"toy_f1_before", before.f1},
                      {"toy_f1_after", after.f1},
                      {"first_epoch_loss", result.trajectory.front().loss.total},
                      {"final_epoch_loss", result.trajectory.back().loss.total},
                      {"final_loss_cs", result.trajectory.back().loss.cs}};
        if (result.grad_check) {
            entry["grad_check"] = {{"max_rel_error", result.grad_check->max_rel_error},
                                   {"passed", result.grad_check->passed},
                                   {"probes", result.grad_check->probes.size()}};
        }
        summary[theory] = entry;
        out << theory << ": rater F1 " << fixed(rater_alignment.f1(rater, j)) << ", toy F1 " << fixed(before.f1)
            << " -> " << fixed(after.f1) << ", loss_E " << fixed(result.trajectory.front().loss.total, 4) << " -> "
            << fixed(result.trajectory.back().loss.total, 4) << "\n";
    }
    const fs::path predictions_path = fs::path(a.out_dir) / "predictions.csv";
    staged.add(predictions_path, predictions);
    staged.add(sidecar(predictions_path), dump_json(manifest.to_json()));
    staged.add(fs::path(a.out_dir) / "realign_summary.json",
               dump_json({{"rater", a.rater}, {"theories", summary}, {"manifest", manifest.to_json()}}));
    staged.commit();
    return kExitOk;
}

struct RobustnessArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    EmConfig em;
};

int run_robustness(const RobustnessArgs& a, std::ostream& out) {
    a.em.validate();
    const json raw = read_json_file(a.config);
    SimConfig cfg = sim_config_from_json(raw);
    bool generated = false;
    if (a.seed) {
        cfg.seed = *a.seed;
    } else if (!raw.contains("seed")) {
        cfg.seed = fresh_seed();
        generated = true;
    }
    const RobustnessReport report = random01_robustness_experiment(cfg, a.em);

    RunManifest manifest = make_manifest("robustness", {a.config});
    manifest.config = sim_config_to_json(cfg);
    manifest.config["tau"] = a.em.tau;
    manifest.config["boundary_inclusive"] = a.em.boundary_inclusive;
    manifest.seed = cfg.seed;
    manifest.seed_generated = generated;

    json j = robustness_to_json(report);
    j["manifest"] = manifest.to_json();
    write_file_atomic(a.out, dump_json(j));

    const auto& em = report.em_with_random;
    for (std::size_t m = 0; m < em.rater_ids.size(); ++m) {
        const std::size_t k = index_of(report.mean_with_random.rater_ids, em.rater_ids[m], "rater");
        out << em.rater_ids[m] << ": EM F1 " << fixed(em.mean_f1(m)) << ", mean-aggregation F1 "
            << fixed(report.mean_with_random.mean_f1(k)) << "\n";
    }
    out << "mean |F1 delta| of base raters: EM " << fixed(report.mean_abs_delta_em()) << ", mean aggregation "
        << fixed(report.mean_abs_delta_mean()) << "\n";
    return kExitOk;
}

struct ReportArgs {
    std::string consensus;
    std::string evaluation;
    std::string robustness;
    std::string realign;
    std::string format = "md";
    std::string out;
};

void f1_table(std::ostream& md, const json& alignment) {
    const auto theories = alignment.at("theory_ids").get<std::vector<std::string>>();
    md << "| rater |";
    for (const auto& t : theories) md << " " << t << " |";
    md << " mean |\n|---|";
    for (std::size_t k = 0; k <= theories.size(); ++k) md << "---|";
    md << "\n";
    for (const auto& id : alignment.at("rater_ids")) {
        const std::string rid = id.get<std::string>();
        md << "| " << rid << " |";
        for (const auto& v : alignment.at("f1").at(rid)) md << " " << fixed(v.get<double>()) << " |";
        md << " " << fixed(alignment.at("mean_f1").at(rid).get<double>()) << " |\n";
    }
}

std::string render_markdown(const json& r) {
    std::ostringstream md;
    md << "# Consensus report\n";
    if (r.contains("consensus")) {
        const auto& c = r.at("consensus");
        md << "\n## Consensus\n\n";
        md << "- method: " << c.at("method").get<std::string>() << "\n";
        md << "- theories: " << c.at("theory_ids").size() << ", scenarios: " << c.at("scenario_ids").size()
           << ", raters: " << c.at("rater_ids").size() << "\n";
        md << "- iterations: " << c.at("iterations").get<std::size_t>()
           << ", converged: " << (c.at("converged").get<bool>() ? "yes" : "no") << "\n";
        md << "- tau: " << c.at("tau").get<double>()
           << (c.at("boundary_inclusive").get<bool>() ? " (inclusive)" : " (strict)") << "\n";
        const auto theories = c.at("theory_ids").get<std::vector<std::string>>();
        md << "\n| theory | acceptable | not acceptable |\n|---|---|---|\n";
        for (std::size_t j = 0; j < theories.size(); ++j) {
            std::size_t ones = 0;
            for (const auto& v : c.at("labels")[j]) ones += v.get<int>();
            md << "| " << theories[j] << " | " << ones << " | " << c.at("labels")[j].size() - ones << " |\n";
        }
        if (!c.at("reliability").empty()) {
            md << "\n| rater | mu1 | sigma1 | mu0 | sigma0 |\n|---|---|---|---|---|\n";
            for (const auto& [id, p] : c.at("reliability").items()) {
                md << "| " << id << " | " << fixed(p.at("mu1").get<double>(), 3) << " | "
                   << fixed(p.at("sigma1").get<double>(), 3) << " | " << fixed(p.at("mu0").get<double>(), 3) << " | "
                   << fixed(p.at("sigma0").get<double>(), 3) << " |\n";
            }
        }
    }
    if (r.contains("evaluation")) {
        const auto& e = r.at("evaluation");
        md << "\n## Alignment F1 (%)\n\n";
        f1_table(md, e.at("alignment"));
        if (!e.at("correlation").is_null()) {
            const auto& corr = e.at("correlation");
            const auto theories = corr.at("theory_ids").get<std::vector<std::string>>();
            md << "\n## Theory correlation (Pearson)\n\n|  |";
            for (const auto& t : theories) md << " " << t << " |";
            md << "\n|---|";
            for (std::size_t k = 0; k < theories.size(); ++k) md << "---|";
            md << "\n";
            for (std::size_t a = 0; a < theories.size(); ++a) {
                md << "| " << theories[a] << " |";
                for (const auto& v : corr.at("pearson")[a]) {
                    md << " " << (v.is_null() ? std::string("n/a") : fixed(v.get<double>(), 3)) << " |";
                }
                md << "\n";
            }
        }
    }
    if (r.contains("robustness")) {
        const auto& rb = r.at("robustness");
        md << "\n## Random01 robustness\n";
        for (const char* cond : {"em_base", "em_with_random01", "mean_base", "mean_with_random01"}) {
            md << "\n### " << cond << "\n\n";
            f1_table(md, rb.at("conditions").at(cond));
        }
        md << "\nMean |F1 delta| of base raters: EM " << fixed(rb.at("mean_abs_delta").at("em").get<double>())
           << ", mean aggregation " << fixed(rb.at("mean_abs_delta").at("mean").get<double>()) << "\n";
    }
    if (r.contains("realign")) {
        const auto& ra = r.at("realign");
        md << "\n## Realignment of " << ra.at("rater").get<std::string>() << "\n\n";
        md << "| theory | rater F1 | toy F1 before | toy F1 after | loss_E first | loss_E final |\n";
        md << "|---|---|---|---|---|---|\n";
        for (const auto& [theory, t] : ra.at("theories").items()) {
            md << "| " << theory << " | " << fixed(t.at("rater_f1").get<double>()) << " | "
               << fixed(t.at("toy_f1_before").get<double>()) << " | " << fixed(t.at("toy_f1_after").get<double>())
               << " | " << fixed(t.at("first_epoch_loss").get<double>(), 4) << " | "
               << fixed(t.at("final_epoch_loss").get<double>(), 4) << " |\n";
        }
    }
    return md.str();
}

int run_report(const ReportArgs& a, std::ostream& out) {
    if (a.consensus.empty() && a.evaluation.empty() && a.robustness.empty() && a.realign.empty()) {
        throw ValidationError("report: give at least one of --consensus, --evaluation, --robustness, --realign");
    }
    json r = json::object();
    if (!a.consensus.empty()) {
        r["consensus"] = consensus_to_json(load_consensus(a.consensus));
    }
    if (!a.evaluation.empty()) {
        r["evaluation"] = read_json_file(a.evaluation);
    }
    if (!a.robustness.empty()) {
        r["robustness"] = read_json_file(a.robustness);
    }
    if (!a.realign.empty()) {
        r["realign"] = read_json_file(a.realign);
    }

    std::string text;
    try {
        if (a.format == "json") {
            json summary = json::object();
            for (auto& [key, value] : r.items()) {
                json v = value;
                v.erase("manifest");
                summary[key] = std::move(v);
            }
            text = dump_json(summary);
        } else {
            text = render_markdown(r);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("report: malformed input document: ") + e.what());
    }
    if (a.out.empty()) {
        out << text;
    } else {
        write_file_atomic(a.out, text);
    }
    return kExitOk;
}

void add_em_options(CLI::App* cmd, EmConfig& em) {
    cmd->add_option("--tau", em.tau, "Binarization threshold in (0, 1)")->capture_default_str();
    cmd->add_flag("--boundary-inclusive", em.boundary_inclusive, "Label 1 when gamma >= tau instead of gamma > tau");
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Truncated-normal EM consensus of bounded rater scores"};
    app.name("tnagg");
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "Generate synthetic annotations and latent truth");
    simulate_cmd->add_option("--config", sim.config, "Simulation config (JSON)")->required();
    simulate_cmd->add_option("--seed", sim.seed, "Override the config seed");
    simulate_cmd->add_option("--annotations-out", sim.annotations_out, "Annotation CSV to write")->capture_default_str();
    simulate_cmd->add_option("--truth-out", sim.truth_out, "Latent-label CSV to write")->capture_default_str();

    AggregateArgs agg;
    auto* aggregate_cmd = app.add_subcommand("aggregate", "Fuse annotations into a consensus document");
    aggregate_cmd->add_option("--annotations", agg.annotations, "Annotation CSV")->required();
    aggregate_cmd->add_option("--out", agg.out, "Consensus document to write")->required();
    aggregate_cmd->add_option("--method", agg.method, "em or mean")->check(CLI::IsMember({"em", "mean"}))->capture_default_str();
    add_em_options(aggregate_cmd, agg.em);
    aggregate_cmd->add_option("--max-iters", agg.em.max_iters, "EM iteration cap")->capture_default_str();
    aggregate_cmd->add_option("--tau-rp", agg.em.tau_rp, "Convergence threshold on the largest parameter change")->capture_default_str();
    aggregate_cmd->add_option("--prior", agg.em.prior_pos, "Prior probability of label 1")->capture_default_str();

    EvaluateArgs eval;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Alignment F1 and theory correlation against a consensus");
    evaluate_cmd->add_option("--annotations", eval.annotations, "Annotation CSV")->required();
    evaluate_cmd->add_option("--consensus", eval.consensus, "Consensus document")->required();
    evaluate_cmd->add_option("--out", eval.out, "Evaluation report to write")->required();

    RealignArgs re;
    auto* realign_cmd = app.add_subcommand("realign", "Realign a toy annotator for one rater to the consensus");
    realign_cmd->add_option("--annotations", re.annotations, "Annotation CSV")->required();
    realign_cmd->add_option("--consensus", re.consensus, "Consensus document")->required();
    realign_cmd->add_option("--rater", re.rater, "Rater id to realign")->required();
    realign_cmd->add_option("--theories", re.theories, "Theory ids to optimize")->required()->delimiter(',');
    realign_cmd->add_option("--config", re.config, "Realignment config (JSON)");
    realign_cmd->add_option("--seed", re.seed, "Override the config seed");
    realign_cmd->add_option("--out-dir", re.out_dir, "Directory for predictions and loss trajectories")->required();

    RobustnessArgs rob;
    auto* robustness_cmd = app.add_subcommand("robustness", "Random01 comparison of EM and mean aggregation");
    robustness_cmd->add_option("--config", rob.config, "Simulation config (JSON)")->required();
    robustness_cmd->add_option("--seed", rob.seed, "Override the config seed");
    robustness_cmd->add_option("--out", rob.out, "Report to write")->required();
    add_em_options(robustness_cmd, rob.em);

    ReportArgs rep;
    auto* report_cmd = app.add_subcommand("report", "Human-readable summary of pipeline artifacts");
    report_cmd->add_option("--consensus", rep.consensus, "Consensus document");
    report_cmd->add_option("--evaluation", rep.evaluation, "Evaluation report");
    report_cmd->add_option("--robustness", rep.robustness, "Robustness report");
    report_cmd->add_option("--realign", rep.realign, "realign_summary.json");
    report_cmd->add_option("--format", rep.format, "md or json")->check(CLI::IsMember({"md", "json"}))->capture_default_str();
    report_cmd->add_option("--out", rep.out, "Write to a file instead of stdout");

    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("tnagg");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) {
        argv.push_back(s.data());
    }

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitValidation;
    }

    try {
        if (*simulate_cmd) return run_simulate(sim, out);
        if (*aggregate_cmd) return run_aggregate(agg, out);
        if (*evaluate_cmd) return run_evaluate(eval, out);
        if (*realign_cmd) return run_realign(re, out);
        if (*robustness_cmd) return run_robustness(rob, out);
        if (*report_cmd) return run_report(rep, out);
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    err << app.help();
    return kExitValidation;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace tnagg
