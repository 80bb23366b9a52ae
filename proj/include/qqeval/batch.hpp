#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qqeval/run_config.hpp"

namespace qqeval {

struct BatchResult {
    int evaluated = 0;  // questions run in this invocation
    int resumed = 0;    // skipped because a finished trace already existed
    int failed = 0;     // questions whose trace is marked failed (either way)
    std::string run_dir;
    std::string summary_path;
    std::string manifest_path;
    std::string transcript_path;  // empty unless recording

    bool clean() const { return failed == 0; }
};

// Runs every dataset question through the configured mode and writes the run
// directory: manifest.json first (so interrupted runs can resume), then one
// trace per question under traces/, then summary.csv in input order. A rerun
// over an existing directory verifies the manifest's config hash, keeps the
// finished traces, and evaluates only what is missing.
//
// `progress`, when given, receives one line per question; it is advisory
// output and never part of the run artifacts.
BatchResult run_batch(const RunConfig& config, std::ostream* progress = nullptr);

// Where the pieces of a run directory live.
std::string manifest_path_of(const std::string& run_dir);
std::string summary_path_of(const std::string& run_dir);
std::string transcript_path_of(const std::string& run_dir);
std::string trace_path_of(const std::string& run_dir, const std::string& question_id);

// File-name-safe form of a question id (anything outside [A-Za-z0-9._-]
// becomes '_'). Distinct ids that collide after sanitizing are rejected
// up front.
std::string sanitize_id(const std::string& question_id);

}  // namespace qqeval
