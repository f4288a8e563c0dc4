#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnagg/em.hpp"
#include "tnagg/metrics.hpp"
#include "tnagg/realign.hpp"
#include "tnagg/simulation.hpp"
#include "tnagg/tensor.hpp"

namespace tnagg {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kAnnotationHeader = "rater_id,theory_id,scenario_id,score";

// Shortest decimal string that parses back to exactly `value`.
std::string format_decimal(double value);

// Annotation CSV: UTF-8, LF line endings, header `rater_id,theory_id,scenario_id,score`.
// Axes are the sorted distinct ids; absent triples are masked. Errors carry
// the source name and line number.
AnnotationTensor parse_annotations(std::istream& in, const std::string& source = "<stream>");
AnnotationTensor load_annotations(const std::filesystem::path& path);
std::string annotations_to_csv(const AnnotationTensor& data);

// Truth CSV: header `theory_id,scenario_id,label`.
std::string truth_to_csv(const LabelMatrix& truth, const std::vector<std::string>& theory_ids,
                         const std::vector<std::string>& scenario_ids);

struct InputDigest {
    std::string path;
    std::string sha256;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string command;
    json config = json::object();
    std::vector<InputDigest> inputs;
    std::optional<std::uint64_t> seed;
    bool seed_generated = false;
    std::string created_at;  // the only field that varies between identical runs

    json to_json() const;
    static RunManifest from_json(const json& j);
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string utc_timestamp();

struct ConsensusDocument {
    std::string method = "em";
    std::vector<std::string> rater_ids;
    std::vector<std::string> theory_ids;
    std::vector<std::string> scenario_ids;
    ConsensusResult result;
    RunManifest manifest;
};

json consensus_to_json(const ConsensusDocument& doc);
// Checks shapes and that the stored labels follow the stored gamma and tau.
ConsensusDocument consensus_from_json(const json& j);

void save_consensus(const ConsensusDocument& doc, const std::filesystem::path& path);
ConsensusDocument load_consensus(const std::filesystem::path& path);

json alignment_to_json(const AlignmentReport& report);
json correlation_to_json(const CorrelationMatrix& corr, const std::vector<std::string>& theory_ids);
json robustness_to_json(const RobustnessReport& report);

SimConfig sim_config_from_json(const json& j);
json sim_config_to_json(const SimConfig& cfg);

// Realignment job settings: the optimizer config plus the toy architecture and
// feature construction.
struct RealignJob {
    RealignConfig optimizer;
    std::size_t tokens = 3;
    std::size_t dim = 16;
    double feature_noise = 0.25;
};

RealignJob realign_job_from_json(const json& j);
json realign_job_to_json(const RealignJob& job);

std::string trajectory_to_csv(const std::vector<EpochLoss>& trajectory);

json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// Collects output files as temporaries next to their targets and renames them
// into place on commit(). Uncommitted temporaries are removed on destruction,
// so a failed command leaves no partial outputs.
class StagedOutputs {
public:
    StagedOutputs() = default;
    StagedOutputs(const StagedOutputs&) = delete;
    StagedOutputs& operator=(const StagedOutputs&) = delete;
    ~StagedOutputs();

    void add(const std::filesystem::path& target, const std::string& content);
    void commit();

private:
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;  // temp, target
    bool committed_ = false;
};

// Single-file convenience wrapper over StagedOutputs.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Pretty-printed JSON with a trailing newline.
std::string dump_json(const json& j);

}  // namespace tnagg
