#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qqeval/engine.hpp"
#include "qqeval/provider.hpp"
#include "qqeval/types.hpp"

namespace qqeval {

struct DatasetSpec {
    std::string path;
    std::string name;  // grouping label in reports; defaults to the file stem
};

// Everything a run needs, serialized verbatim into the run manifest so any
// run directory can be re-executed from its manifest alone.
struct RunConfig {
    RunMode mode = RunMode::strive;
    std::vector<DatasetSpec> datasets;

    ProviderConfig tm1;                         // also serves baseline mode
    std::optional<ProviderConfig> tm2;          // default: same as tm1
    std::optional<ProviderConfig> tm1_judge;    // default: tm1
    std::optional<ProviderConfig> tm2_judge;    // default: tm2 (or tm1)

    EngineOptions engine;
    int parallelism = 1;
    std::string run_dir;
    bool record = false;          // write transcript.jsonl into the run dir
    uint64_t seed = 0;            // mock determinism and sampling only
    std::string prompt_dir;       // override for the built-in prompt templates
    std::string definitions_path; // override for the built-in metric definitions

    // Throws ConfigError whose field names the CLI flag (e.g. "--dataset").
    void validate() const;
};

std::string run_config_to_json_text(const RunConfig& config);
RunConfig run_config_from_json_text(const std::string& text);

// Hash of the canonical JSON form; a resumed run must match it.
std::string run_config_hash(const RunConfig& config);

// Swaps every provider to replay-from-transcript, keeping model names so
// traces and reports come out identical to the recorded run.
RunConfig replay_variant(const RunConfig& config, const std::string& transcript_path,
                         const std::string& run_dir);

}  // namespace qqeval
