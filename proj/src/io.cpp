#include "tnagg/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "tnagg/errors.hpp"

namespace tnagg {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string::size_type start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<std::string> sorted_ids(const std::set<std::string>& ids) { return {ids.begin(), ids.end()}; }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ValidationError(where + ": expected a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ValidationError(where + ": unknown field '" + key + "'");
        }
    }
}

json reliability_to_json(const RaterReliability& r) {
    return {{"mu1", r.mu1}, {"sigma1", r.sigma1}, {"mu0", r.mu0}, {"sigma0", r.sigma0}};
}

json matrix_rows(const RealMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (double v : m.row(r)) {
            if (std::isfinite(v)) {
                row.push_back(v);
            } else {
                row.push_back(nullptr);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

TruncNormParams params_from_json(const json& j, const std::string& where) {
    check_keys(j, {"mu", "sigma"}, where);
    return {j.at("mu").get<double>(), j.at("sigma").get<double>()};
}

template <typename Fn>
auto translate_json_errors(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

std::atomic<unsigned> g_temp_counter{0};

}  // namespace

std::string format_decimal(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
    if (res.ec != std::errc{}) {
        res = std::to_chars(buf, buf + sizeof buf, value);
    }
    return std::string(buf, res.ptr);
}

AnnotationTensor parse_annotations(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;

    using Key = std::tuple<std::string, std::string, std::string>;
    std::map<Key, std::pair<double, std::size_t>> records;
    std::set<std::string> raters, theories, scenarios;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
            line.erase(0, 3);
        }
        if (!have_header) {
            if (line != kAnnotationHeader) {
                throw ValidationError(source + ":" + std::to_string(line_no) + ": expected header '" +
                                      kAnnotationHeader + "'");
            }
            have_header = true;
            continue;
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        const std::string where = source + ":" + std::to_string(line_no);
        if (fields.size() != 4) {
            throw ValidationError(where + ": expected 4 fields, got " + std::to_string(fields.size()));
        }
        for (std::size_t k = 0; k < 3; ++k) {
            if (fields[k].empty()) {
                throw ValidationError(where + ": empty id");
            }
        }
        const std::string& text = fields[3];
        double score = 0.0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), score);
        if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(score)) {
            throw ValidationError(where + ": score '" + text + "' is not a finite decimal");
        }
        if (score < 0.0 || score > 1.0) {
            throw ValidationError(where + ": score " + text + " outside [0, 1]");
        }
        Key key{fields[0], fields[1], fields[2]};
        auto [it, inserted] = records.emplace(key, std::make_pair(score, line_no));
        if (!inserted) {
            throw ValidationError(where + ": duplicate triple (rater '" + fields[0] + "', theory '" + fields[1] +
                                  "', scenario '" + fields[2] + "'), first seen on line " +
                                  std::to_string(it->second.second));
        }
        raters.insert(fields[0]);
        theories.insert(fields[1]);
        scenarios.insert(fields[2]);
    }
    if (records.empty()) {
        throw ValidationError(source + ": no annotation records");
    }

    const auto rater_ids = sorted_ids(raters);
    const auto theory_ids = sorted_ids(theories);
    const auto scenario_ids = sorted_ids(scenarios);
    AnnotationTensor tensor(rater_ids, theory_ids, scenario_ids);
    for (const auto& [key, value] : records) {
        const auto m = static_cast<std::size_t>(std::lower_bound(rater_ids.begin(), rater_ids.end(), std::get<0>(key)) - rater_ids.begin());
        const auto j = static_cast<std::size_t>(std::lower_bound(theory_ids.begin(), theory_ids.end(), std::get<1>(key)) - theory_ids.begin());
        const auto i = static_cast<std::size_t>(std::lower_bound(scenario_ids.begin(), scenario_ids.end(), std::get<2>(key)) - scenario_ids.begin());
        tensor.set(m, j, i, value.first);
    }
    try {
        tensor.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return tensor;
}

AnnotationTensor load_annotations(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open annotations file '" + path.string() + "'");
    }
    return parse_annotations(in, path.string());
}

std::string annotations_to_csv(const AnnotationTensor& data) {
    std::string out = std::string(kAnnotationHeader) + "\n";
    for (std::size_t m = 0; m < data.raters(); ++m) {
        for (std::size_t j = 0; j < data.theories(); ++j) {
            for (std::size_t i = 0; i < data.scenarios(); ++i) {
                if (data.present(m, j, i)) {
                    out += data.rater_ids()[m] + "," + data.theory_ids()[j] + "," + data.scenario_ids()[i] + "," +
                           format_decimal(data.score(m, j, i)) + "\n";
                }
            }
        }
    }
    return out;
}

std::string truth_to_csv(const LabelMatrix& truth, const std::vector<std::string>& theory_ids,
                         const std::vector<std::string>& scenario_ids) {
    std::string out = "theory_id,scenario_id,label\n";
    for (std::size_t j = 0; j < truth.rows(); ++j) {
        for (std::size_t i = 0; i < truth.cols(); ++i) {
            out += theory_ids.at(j) + "," + scenario_ids.at(i) + "," + (truth(j, i) ? "1" : "0") + "\n";
        }
    }
    return out;
}

json RunManifest::to_json() const {
    json inputs_json = json::array();
    for (const auto& d : inputs) {
        inputs_json.push_back({{"path", d.path}, {"sha256", d.sha256}});
    }
    json j = {{"tool_version", tool_version}, {"command", command}, {"config", config},
              {"inputs", inputs_json}, {"seed_generated", seed_generated}, {"created_at", created_at}};
    j["seed"] = seed ? json(*seed) : json(nullptr);
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    return translate_json_errors("manifest", [&] {
        RunManifest m;
        m.tool_version = j.value("tool_version", "");
        m.command = j.value("command", "");
        m.config = j.value("config", json::object());
        for (const auto& d : j.value("inputs", json::array())) {
            m.inputs.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
        }
        if (j.contains("seed") && !j.at("seed").is_null()) {
            m.seed = j.at("seed").get<std::uint64_t>();
        }
        m.seed_generated = j.value("seed_generated", false);
        m.created_at = j.value("created_at", "");
        return m;
    });
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw IoError("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[digest[k] >> 4]);
        out.push_back(hex[digest[k] & 0xf]);
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text_file(path)); }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json consensus_to_json(const ConsensusDocument& doc) {
    const auto& r = doc.result;
    json labels = json::array();
    for (std::size_t j = 0; j < r.labels.rows(); ++j) {
        json row = json::array();
        for (auto v : r.labels.row(j)) {
            row.push_back(static_cast<int>(v));
        }
        labels.push_back(std::move(row));
    }
    json reliability = json::object();
    for (std::size_t m = 0; m < r.reliability.size(); ++m) {
        reliability[doc.rater_ids.at(m)] = reliability_to_json(r.reliability[m]);
    }
    return {{"format", "tnagg-consensus/1"},
            {"method", doc.method},
            {"ordering", "lexicographic"},
            {"rater_ids", doc.rater_ids},
            {"theory_ids", doc.theory_ids},
            {"scenario_ids", doc.scenario_ids},
            {"tau", r.tau},
            {"boundary_inclusive", r.boundary_inclusive},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"final_max_delta", r.final_max_delta},
            {"relabeled", r.relabeled},
            {"gamma", matrix_rows(r.gamma)},
            {"labels", labels},
            {"reliability", reliability},
            {"manifest", doc.manifest.to_json()}};
}

ConsensusDocument consensus_from_json(const json& j) {
    ConsensusDocument doc = translate_json_errors("consensus document", [&] {
        ConsensusDocument d;
        d.method = j.at("method").get<std::string>();
        d.rater_ids = j.at("rater_ids").get<std::vector<std::string>>();
        d.theory_ids = j.at("theory_ids").get<std::vector<std::string>>();
        d.scenario_ids = j.at("scenario_ids").get<std::vector<std::string>>();
        auto& r = d.result;
        r.tau = j.at("tau").get<double>();
        r.boundary_inclusive = j.at("boundary_inclusive").get<bool>();
        r.iterations = j.at("iterations").get<std::size_t>();
        r.converged = j.at("converged").get<bool>();
        r.final_max_delta = j.value("final_max_delta", 0.0);
        r.relabeled = j.value("relabeled", false);

        const std::size_t M = d.theory_ids.size();
        const std::size_t N = d.scenario_ids.size();
        const auto& gamma = j.at("gamma");
        const auto& labels = j.at("labels");
        if (gamma.size() != M || labels.size() != M) {
            throw ValidationError("consensus document: gamma/labels row count does not match theory_ids");
        }
        r.gamma = RealMatrix(M, N);
        r.labels = LabelMatrix(M, N);
        for (std::size_t t = 0; t < M; ++t) {
            if (gamma[t].size() != N || labels[t].size() != N) {
                throw ValidationError("consensus document: row length does not match scenario_ids");
            }
            for (std::size_t i = 0; i < N; ++i) {
                const double g = gamma[t][i].get<double>();
                if (!(g >= 0.0 && g <= 1.0)) {
                    throw ValidationError("consensus document: gamma outside [0, 1]");
                }
                r.gamma(t, i) = g;
                const int label = labels[t][i].get<int>();
                if (label != 0 && label != 1) {
                    throw ValidationError("consensus document: labels must be 0 or 1");
                }
                r.labels(t, i) = static_cast<unsigned char>(label);
            }
        }
        const auto& rel = j.at("reliability");
        if (!rel.empty()) {
            for (const auto& id : d.rater_ids) {
                const auto& p = rel.at(id);
                r.reliability.push_back({p.at("mu1").get<double>(), p.at("sigma1").get<double>(),
                                         p.at("mu0").get<double>(), p.at("sigma0").get<double>()});
            }
        }
        if (j.contains("manifest")) {
            d.manifest = RunManifest::from_json(j.at("manifest"));
        }
        return d;
    });
    if (!(doc.result.tau > 0.0 && doc.result.tau < 1.0)) {
        throw ValidationError("consensus document: tau must lie in (0, 1)");
    }
    if (binarize(doc.result.gamma, doc.result.tau, doc.result.boundary_inclusive) != doc.result.labels) {
        throw ValidationError("consensus document: labels disagree with gamma under the stored threshold");
    }
    return doc;
}

void save_consensus(const ConsensusDocument& doc, const fs::path& path) {
    write_file_atomic(path, dump_json(consensus_to_json(doc)));
}

ConsensusDocument load_consensus(const fs::path& path) {
    try {
        return consensus_from_json(read_json_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

json alignment_to_json(const AlignmentReport& report) {
    json f1 = json::object();
    json mean = json::object();
    json degenerate = json::object();
    json counts = json::object();
    for (std::size_t m = 0; m < report.rater_ids.size(); ++m) {
        json row = json::array();
        json deg = json::array();
        json cnt = json::array();
        for (std::size_t j = 0; j < report.theory_ids.size(); ++j) {
            const auto& s = report.stats(m, j);
            row.push_back(s.f1);
            deg.push_back(s.degenerate);
            cnt.push_back({{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"tn", s.tn}});
        }
        const auto& id = report.rater_ids[m];
        f1[id] = std::move(row);
        degenerate[id] = std::move(deg);
        counts[id] = std::move(cnt);
        mean[id] = report.mean_f1(m);
    }
    return {{"rater_ids", report.rater_ids}, {"theory_ids", report.theory_ids},
            {"tau", report.tau},             {"boundary_inclusive", report.boundary_inclusive},
            {"f1", f1},                      {"mean_f1", mean},
            {"degenerate", degenerate},      {"counts", counts}};
}

json correlation_to_json(const CorrelationMatrix& corr, const std::vector<std::string>& theory_ids) {
    return {{"theory_ids", theory_ids}, {"pearson", matrix_rows(corr.r)}, {"undefined_pairs", corr.undefined_pairs}};
}

json robustness_to_json(const RobustnessReport& report) {
    auto deltas = [&](const RealMatrix& d) {
        json out = json::object();
        for (std::size_t m = 0; m < report.base_rater_ids.size(); ++m) {
            out[report.base_rater_ids[m]] = std::vector<double>(d.row(m).begin(), d.row(m).end());
        }
        return out;
    };
    return {{"base_rater_ids", report.base_rater_ids},
            {"random01_added", report.random_added},
            {"conditions",
             {{"em_base", alignment_to_json(report.em_base)},
              {"em_with_random01", alignment_to_json(report.em_with_random)},
              {"mean_base", alignment_to_json(report.mean_base)},
              {"mean_with_random01", alignment_to_json(report.mean_with_random)}}},
            {"f1_delta", {{"em", deltas(report.em_delta)}, {"mean", deltas(report.mean_delta)}}},
            {"mean_abs_delta", {{"em", report.mean_abs_delta_em()}, {"mean", report.mean_abs_delta_mean()}}}};
}

SimConfig sim_config_from_json(const json& j) {
    return translate_json_errors("simulation config", [&] {
        check_keys(j, {"n_scenarios", "n_theories", "prevalence", "seed", "raters"}, "simulation config");
        SimConfig cfg;
        cfg.n_scenarios = j.at("n_scenarios").get<std::size_t>();
        cfg.n_theories = j.at("n_theories").get<std::size_t>();
        cfg.prevalence = j.value("prevalence", 0.5);
        cfg.seed = j.value("seed", std::uint64_t{0});
        for (const auto& r : j.at("raters")) {
            const std::string id = r.at("id").get<std::string>();
            const std::string where = "rater '" + id + "'";
            const RaterKind kind = rater_kind_from_string(r.at("kind").get<std::string>());
            switch (kind) {
                case RaterKind::tnd:
                    check_keys(r, {"id", "kind", "pos", "neg"}, where);
                    cfg.raters.push_back(RaterSpec::tnd(id, params_from_json(r.at("pos"), where),
                                                        params_from_json(r.at("neg"), where)));
                    break;
                case RaterKind::random01:
                    check_keys(r, {"id", "kind"}, where);
                    cfg.raters.push_back(RaterSpec::random01(id));
                    break;
                case RaterKind::constant:
                    check_keys(r, {"id", "kind", "value"}, where);
                    cfg.raters.push_back(RaterSpec::constant(id, r.at("value").get<double>()));
                    break;
            }
        }
        cfg.validate();
        return cfg;
    });
}

json sim_config_to_json(const SimConfig& cfg) {
    json raters = json::array();
    for (const auto& r : cfg.raters) {
        json o = {{"id", r.id}, {"kind", to_string(r.kind)}};
        if (r.kind == RaterKind::tnd) {
            o["pos"] = {{"mu", r.pos.mu}, {"sigma", r.pos.sigma}};
            o["neg"] = {{"mu", r.neg.mu}, {"sigma", r.neg.sigma}};
        } else if (r.kind == RaterKind::constant) {
            o["value"] = r.value;
        }
        raters.push_back(std::move(o));
    }
    return {{"n_scenarios", cfg.n_scenarios}, {"n_theories", cfg.n_theories}, {"prevalence", cfg.prevalence},
            {"seed", cfg.seed},               {"raters", raters}};
}

RealignJob realign_job_from_json(const json& j) {
    return translate_json_errors("realign config", [&] {
        check_keys(j,
                   {"learning_rate", "epochs", "batch_size", "seed", "grad_check", "use_cosine_term",
                    "grad_check_probes", "tokens", "dim", "feature_noise"},
                   "realign config");
        RealignJob job;
        auto& o = job.optimizer;
        o.learning_rate = j.value("learning_rate", o.learning_rate);
        o.epochs = j.value("epochs", o.epochs);
        o.batch_size = j.value("batch_size", o.batch_size);
        o.seed = j.value("seed", o.seed);
        o.grad_check = j.value("grad_check", o.grad_check);
        o.use_cosine_term = j.value("use_cosine_term", o.use_cosine_term);
        o.grad_check_probes = j.value("grad_check_probes", o.grad_check_probes);
        job.tokens = j.value("tokens", job.tokens);
        job.dim = j.value("dim", job.dim);
        job.feature_noise = j.value("feature_noise", job.feature_noise);
        o.validate();
        if (job.tokens < 1 || job.dim < 1 || !(job.feature_noise >= 0.0)) {
            throw ValidationError("realign config: tokens and dim must be positive, feature_noise non-negative");
        }
        return job;
    });
}

json realign_job_to_json(const RealignJob& job) {
    const auto& o = job.optimizer;
    return {{"learning_rate", o.learning_rate}, {"epochs", o.epochs},       {"batch_size", o.batch_size},
            {"seed", o.seed},                   {"grad_check", o.grad_check}, {"use_cosine_term", o.use_cosine_term},
            {"grad_check_probes", o.grad_check_probes}, {"tokens", job.tokens}, {"dim", job.dim},
            {"feature_noise", job.feature_noise}};
}

std::string trajectory_to_csv(const std::vector<EpochLoss>& trajectory) {
    std::string out = "epoch,loss_JS,loss_CS,loss_E\n";
    for (const auto& e : trajectory) {
        out += std::to_string(e.epoch) + "," + format_decimal(e.loss.js) + "," + format_decimal(e.loss.cs) + "," +
               format_decimal(e.loss.total) + "\n";
    }
    return out;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("error reading '" + path.string() + "'");
    }
    return ss.str();
}

json read_json_file(const fs::path& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": invalid JSON: " + e.what());
    }
}

StagedOutputs::~StagedOutputs() {
    if (committed_) {
        return;
    }
    for (const auto& [temp, _] : staged_) {
        std::error_code ec;
        fs::remove(temp, ec);
    }
}

void StagedOutputs::add(const fs::path& target, const std::string& content) {
    if (committed_) {
        throw IoError("outputs already committed");
    }
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory '" + target.parent_path().string() + "': " + ec.message());
        }
    }
    fs::path temp = target;
    temp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(g_temp_counter++);
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write '" + target.string() + "'");
    }
    staged_.emplace_back(temp, target);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) {
        throw IoError("error writing '" + target.string() + "'");
    }
}

void StagedOutputs::commit() {
    for (const auto& [temp, target] : staged_) {
        std::error_code ec;
        fs::rename(temp, target, ec);
        if (ec) {
            throw IoError("cannot move output into place at '" + target.string() + "': " + ec.message());
        }
    }
    committed_ = true;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    StagedOutputs out;
    out.add(path, content);
    out.commit();
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace tnagg
