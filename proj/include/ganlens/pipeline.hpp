#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ganlens/classifier_training.hpp"
#include "ganlens/gan_training.hpp"
#include "ganlens/inversion.hpp"
#include "ganlens/models.hpp"

namespace ganlens {

struct PipelineConfig {
    std::string profile = "fast";
    std::uint64_t seed = 1234;
    bool deterministic = false;
    ModelConfig model;
    int corpus_count = 2000;
    double positive_fraction = 0.5;
    TrainConfig classifier;
    GanTrainConfig gan;
    InversionConfig inversion;
    int inversion_targets = 2;
    int traversal_steps = 10;
    std::string gradcam_layer = "last_conv";
    int eval_repetitions = 1000;
    int eval_pairs = 100;

    static PipelineConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// structural + range + cross-field checks; returns human-readable violations
std::vector<std::string> validate_config(const nlohmann::json& cfg);
std::vector<std::string> validate_config_file(const std::filesystem::path& path);

struct StageRecord {
    std::string name;
    std::uint64_t seed = 0;
    bool cached = false;
    double duration_s = 0.0;
    std::map<std::string, std::string> inputs;   // label -> sha256
    std::map<std::string, std::string> outputs;  // relative path (or aggregate label) -> sha256

    nlohmann::json to_json() const;
};

struct RunManifest {
    std::string tool_version;
    std::uint64_t master_seed = 0;
    std::string status;  // complete | partial
    std::string failed_stage;
    std::string error;
    std::string created_at;
    nlohmann::json config_echo;
    std::vector<StageRecord> stages;

    nlohmann::json to_json() const;
};

inline constexpr const char* kStageNames[6] = {"corpus",   "classifier", "gan",
                                               "invert",   "traverse",   "evaluate"};

std::uint64_t stage_seed(std::uint64_t master, int stage_index);

// Executes corpus -> classifier -> gan -> invert -> traverse -> evaluate in
// workdir, skipping stages whose recorded input hash and outputs are intact.
// Throws ConfigError for invalid configs; stage failures surface as
// StageFailure with the manifest already written as partial.
struct StageFailure : std::runtime_error {
    std::string stage;
    StageFailure(std::string stage_name, const std::string& what)
        : std::runtime_error(what), stage(std::move(stage_name)) {}
};

RunManifest run_pipeline(const std::filesystem::path& config_path, const std::filesystem::path& workdir);

// re-hashes every artifact referenced by a run manifest; returns mismatches
std::vector<std::string> verify_manifest(const std::filesystem::path& workdir);

}  // namespace ganlens
