// qqeval: batch question-quality evaluation over LLM providers.
//
// Subcommands:
//   evaluate   score datasets in baseline or strive mode, writing a run dir
//   replay     re-execute a recorded run from its manifest and transcript
//   analyze    aggregate run dirs against human ratings into report tables
//
// Exit codes: 0 on success, 1 when a run had failed questions or a runtime
// error occurred, 2 on configuration or usage errors.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qqeval/analysis.hpp"
#include "qqeval/batch.hpp"
#include "qqeval/dataset.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/run_config.hpp"
#include "qqeval/util.hpp"

namespace {

namespace fs = std::filesystem;
using namespace qqeval;

struct EvaluateFlags {
    std::vector<std::string> dataset_paths;
    std::vector<std::string> dataset_names;
    std::string mode = "strive";
    std::string provider = "mock";
    std::string model = "mock-model";
    std::string endpoint;
    std::string auth_env = "QQEVAL_API_TOKEN";
    double timeout = 60.0;
    int max_retries = 3;
    int rpm = 0;
    std::string cache_dir;
    std::string run_dir;
    bool record = false;
    std::string replay_transcript;
    std::string from_run;
    uint64_t seed = 0;
    int parallelism = 1;
    int candidates = 10;
    std::vector<double> temperatures;
    double judge_temperature = 0.0;
    double baseline_temperature = 0.0;
    int max_iterations = 10;
    int max_output_tokens = 1024;
    int scale_min = 1;
    int scale_max = 5;
    std::string convergence = "cross_module";
    std::string prompt_dir;
    std::string definitions;
    std::string tm2_model;
    std::string tm1_judge_model;
    std::string tm2_judge_model;
};

struct AnalyzeFlags {
    std::vector<std::string> run_dirs;
    std::string ratings_path;
    std::string out_dir;
    int match_sample = 0;
    uint64_t seed = 0;
    std::vector<std::string> match_ids;
    int scale_min = 1;
    int scale_max = 5;
};

std::string path_stem(const std::string& path) {
    std::string stem = fs::path(path).stem().string();
    return stem.empty() ? path : stem;
}

// Every flag both `evaluate` and `replay` understand. `replay` layers its
// transcript handling on top.
void add_evaluate_flags(CLI::App* cmd, EvaluateFlags& f) {
    cmd->add_option("--dataset", f.dataset_paths, "question JSONL file, repeatable")
        ->check(CLI::ExistingFile);
    cmd->add_option("--dataset-name", f.dataset_names,
                    "report label per --dataset, defaults to the file stem");
    cmd->add_option("--mode", f.mode, "baseline | strive")->capture_default_str();
    cmd->add_option("--provider", f.provider, "mock | http | replay")->capture_default_str();
    cmd->add_option("--model", f.model, "model name sent to the provider")
        ->capture_default_str();
    cmd->add_option("--endpoint", f.endpoint, "chat completions URL (http provider)");
    cmd->add_option("--auth-env", f.auth_env,
                    "env var holding the bearer token (the value is never stored)")
        ->capture_default_str();
    cmd->add_option("--timeout", f.timeout, "per-request timeout in seconds")
        ->capture_default_str();
    cmd->add_option("--max-retries", f.max_retries, "retries per request on transient errors")
        ->capture_default_str();
    cmd->add_option("--rpm", f.rpm, "requests-per-minute cap (http provider)");
    cmd->add_option("--cache-dir", f.cache_dir, "response cache directory (http provider)");
    cmd->add_option("--run-dir", f.run_dir, "output directory for this run")->required();
    cmd->add_flag("--record", f.record, "write transcript.jsonl into the run dir");
    cmd->add_option("--replay", f.replay_transcript,
                    "serve completions from this transcript instead of any provider");
    cmd->add_option("--seed", f.seed, "seed for mock providers and sampling")
        ->capture_default_str();
    cmd->add_option("--parallelism", f.parallelism, "questions evaluated concurrently")
        ->capture_default_str();
    cmd->add_option("--candidates", f.candidates, "strength/weakness pairs per module step")
        ->capture_default_str();
    cmd->add_option("--temperatures", f.temperatures,
                    "explicit per-candidate temperatures, comma separated")
        ->delimiter(',');
    cmd->add_option("--judge-temperature", f.judge_temperature, "temperature for judge calls")
        ->capture_default_str();
    cmd->add_option("--baseline-temperature", f.baseline_temperature,
                    "temperature for baseline scoring calls")
        ->capture_default_str();
    cmd->add_option("--max-iterations", f.max_iterations,
                    "iteration cap for the refinement loop")
        ->capture_default_str();
    cmd->add_option("--max-output-tokens", f.max_output_tokens, "completion length cap")
        ->capture_default_str();
    cmd->add_option("--scale-min", f.scale_min, "lowest score on the rating scale")
        ->capture_default_str();
    cmd->add_option("--scale-max", f.scale_max, "highest score on the rating scale")
        ->capture_default_str();
    cmd->add_option("--convergence", f.convergence, "cross_module | per_module")
        ->capture_default_str();
    cmd->add_option("--prompt-dir", f.prompt_dir,
                    "directory with baseline.txt/generate.txt/judge.txt overriding the "
                    "built-in templates")
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--definitions", f.definitions,
                    "JSON file overriding the built-in metric definitions")
        ->check(CLI::ExistingFile);
    cmd->add_option("--tm2-model", f.tm2_model, "model for the second module's generator");
    cmd->add_option("--tm1-judge-model", f.tm1_judge_model,
                    "model for the first module's judge");
    cmd->add_option("--tm2-judge-model", f.tm2_judge_model,
                    "model for the second module's judge");
}

RunConfig build_run_config(const CLI::App* cmd, const EvaluateFlags& f) {
    RunConfig config;

    if (auto mode = run_mode_from_key(f.mode))
        config.mode = *mode;
    else
        throw ConfigError("--mode", "expected baseline or strive, got '" + f.mode + "'");

    if (f.dataset_paths.empty()) throw ConfigError("--dataset", "at least one dataset required");
    if (!f.dataset_names.empty() && f.dataset_names.size() != f.dataset_paths.size())
        throw ConfigError("--dataset-name", "got " + std::to_string(f.dataset_names.size()) +
                                                " names for " +
                                                std::to_string(f.dataset_paths.size()) +
                                                " datasets");
    for (size_t i = 0; i < f.dataset_paths.size(); ++i) {
        DatasetSpec spec;
        spec.path = f.dataset_paths[i];
        spec.name = i < f.dataset_names.size() ? f.dataset_names[i] : path_stem(spec.path);
        config.datasets.push_back(std::move(spec));
    }

    ProviderConfig base;
    if (f.provider == "mock")
        base.kind = ProviderKind::mock;
    else if (f.provider == "http" || f.provider == "http_chat")
        base.kind = ProviderKind::http_chat;
    else if (f.provider == "replay")
        base.kind = ProviderKind::replay;
    else
        throw ConfigError("--provider", "expected mock, http, or replay, got '" + f.provider +
                                            "'");
    base.endpoint = f.endpoint;
    base.model_name = f.model;
    base.auth_token_env = f.auth_env;
    base.timeout_seconds = f.timeout;
    base.max_retries = f.max_retries;
    if (cmd->count("--rpm") > 0) base.requests_per_minute = f.rpm;
    base.cache_dir = f.cache_dir;
    base.seed = f.seed;
    if (base.kind == ProviderKind::replay) base.transcript_path = f.replay_transcript;

    config.tm1 = base;
    auto with_model = [&](const std::string& name) {
        ProviderConfig p = base;
        p.model_name = name;
        return p;
    };
    if (!f.tm2_model.empty()) config.tm2 = with_model(f.tm2_model);
    if (!f.tm1_judge_model.empty()) config.tm1_judge = with_model(f.tm1_judge_model);
    if (!f.tm2_judge_model.empty()) config.tm2_judge = with_model(f.tm2_judge_model);

    config.engine.n = f.candidates;
    config.engine.temperatures = f.temperatures;
    config.engine.judge_temperature = f.judge_temperature;
    config.engine.baseline_temperature = f.baseline_temperature;
    config.engine.max_iterations = f.max_iterations;
    config.engine.max_output_tokens = f.max_output_tokens;
    config.engine.scale = ScaleBounds{f.scale_min, f.scale_max};
    if (auto rule = convergence_rule_from_key(f.convergence))
        config.engine.convergence = *rule;
    else
        throw ConfigError("--convergence", "expected cross_module or per_module, got '" +
                                               f.convergence + "'");

    config.parallelism = f.parallelism;
    config.run_dir = f.run_dir;
    config.record = f.record;
    config.seed = f.seed;
    config.prompt_dir = f.prompt_dir;
    config.definitions_path = f.definitions;

    // --replay on evaluate swaps every provider to the transcript, mirroring
    // the dedicated replay subcommand.
    if (!f.replay_transcript.empty() && base.kind != ProviderKind::replay)
        return replay_variant(config, f.replay_transcript, f.run_dir);
    return config;
}

// Loads the config a previous run recorded into its manifest.
RunConfig config_from_manifest(const std::string& recorded_run_dir) {
    std::string manifest_path = manifest_path_of(recorded_run_dir);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("--from-run", manifest_path + " is not valid JSON: " + e.what());
    }
    if (!manifest.contains("config"))
        throw ConfigError("--from-run", manifest_path + " has no config block");
    return run_config_from_json_text(manifest["config"].dump());
}

int run_evaluate(const RunConfig& config) {
    BatchResult result = run_batch(config, &std::cerr);
    std::cerr << "run " << result.run_dir << ": " << result.evaluated << " evaluated, "
              << result.resumed << " resumed, " << result.failed << " failed\n";
    std::cout << result.run_dir << "\n";
    return result.clean() ? 0 : 1;
}

int run_analyze(const AnalyzeFlags& f, const CLI::App* cmd) {
    std::vector<RunData> runs;
    runs.reserve(f.run_dirs.size());
    for (const std::string& dir : f.run_dirs) runs.push_back(load_run(dir));

    ScaleBounds scale{f.scale_min, f.scale_max};
    HumanIndex ratings(load_human_ratings(f.ratings_path, scale));

    AnalysisOptions options;
    if (cmd->count("--match-sample") > 0) options.match_sample = f.match_sample;
    options.seed = f.seed;
    options.match_ids = f.match_ids;

    AnalysisReport report = analyze(runs, ratings, options);
    std::string text = report_to_text(report);
    if (!f.out_dir.empty()) {
        fs::create_directories(f.out_dir);
        std::string csv_path = (fs::path(f.out_dir) / "report.csv").string();
        std::string text_path = (fs::path(f.out_dir) / "report.txt").string();
        write_text_file(csv_path, report_to_csv(report));
        write_text_file(text_path, text);
        std::cerr << "wrote " << csv_path << " and " << text_path << "\n";
    }
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Question quality scoring with single-shot and feedback-refined LLM "
                 "evaluation"};
    app.require_subcommand(1);
    // one config file serves all commands; flags live in [evaluate] / [replay]
    // / [analyze] sections and explicit CLI flags always win
    app.set_config("--config", "",
                   "INI file with one [subcommand] section per command (CLI flags win)");
    app.allow_config_extras(CLI::config_extras_mode::error);

    EvaluateFlags eval_flags;
    CLI::App* evaluate = app.add_subcommand("evaluate", "score datasets and write a run dir");
    evaluate->configurable()->fallthrough();
    add_evaluate_flags(evaluate, eval_flags);

    EvaluateFlags replay_flags;
    CLI::App* replay =
        app.add_subcommand("replay", "re-execute a recorded run deterministically");
    replay->configurable()->fallthrough();
    add_evaluate_flags(replay, replay_flags);
    replay->add_option("--from-run", replay_flags.from_run,
                       "recorded run dir; takes config and transcript from it")
        ->check(CLI::ExistingDirectory);

    AnalyzeFlags analyze_flags;
    CLI::App* analyze_cmd =
        app.add_subcommand("analyze", "build report tables from run dirs and human ratings");
    analyze_cmd->configurable()->fallthrough();
    analyze_cmd->add_option("--run", analyze_flags.run_dirs, "run directory, repeatable")
        ->required()
        ->check(CLI::ExistingDirectory);
    analyze_cmd->add_option("--ratings", analyze_flags.ratings_path, "human ratings CSV")
        ->required()
        ->check(CLI::ExistingFile);
    analyze_cmd->add_option("--out", analyze_flags.out_dir,
                            "directory for report.csv and report.txt");
    analyze_cmd->add_option("--match-sample", analyze_flags.match_sample,
                            "size of the seeded question sample for the match table");
    analyze_cmd->add_option("--seed", analyze_flags.seed, "seed for --match-sample selection");
    analyze_cmd->add_option("--match-id", analyze_flags.match_ids,
                            "restrict the match table to these question ids, repeatable");
    analyze_cmd->add_option("--scale-min", analyze_flags.scale_min, "lowest valid rating")
        ->capture_default_str();
    analyze_cmd->add_option("--scale-max", analyze_flags.scale_max, "highest valid rating")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    // config file sections may mark other subcommands as parsed; the command
    // actually invoked is the first one in parse order
    CLI::App* invoked = app.get_subcommands().front();
    try {
        if (invoked == evaluate) {
            RunConfig config = build_run_config(evaluate, eval_flags);
            config.validate();
            return run_evaluate(config);
        }
        if (invoked == replay) {
            RunConfig config;
            if (!replay_flags.from_run.empty()) {
                RunConfig recorded = config_from_manifest(replay_flags.from_run);
                std::string transcript = !replay_flags.replay_transcript.empty()
                                             ? replay_flags.replay_transcript
                                             : transcript_path_of(replay_flags.from_run);
                if (!fs::exists(transcript))
                    throw ConfigError("--from-run",
                                      "no transcript at " + transcript +
                                          "; record the run with --record first");
                config = replay_variant(recorded, transcript, replay_flags.run_dir);
                if (replay->count("--parallelism") > 0)
                    config.parallelism = replay_flags.parallelism;
            } else {
                if (replay_flags.replay_transcript.empty())
                    throw ConfigError("--replay",
                                      "replay needs --from-run or --replay <transcript>");
                if (replay_flags.dataset_paths.empty())
                    throw ConfigError("--dataset", "at least one dataset required");
                config = build_run_config(replay, replay_flags);
                config = replay_variant(config, replay_flags.replay_transcript,
                                        replay_flags.run_dir);
            }
            config.validate();
            return run_evaluate(config);
        }
        if (invoked == analyze_cmd) return run_analyze(analyze_flags, analyze_cmd);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IngestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
