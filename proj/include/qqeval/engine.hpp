#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qqeval/prompts.hpp"
#include "qqeval/provider.hpp"
#include "qqeval/types.hpp"

namespace qqeval {

// Which pair of iterations must agree before a run counts as converged.
//   cross_module: TM1 and TM2 emit identical scores in two consecutive
//                 iterations (the default reading).
//   per_module:   each module's scores are stable across two consecutive
//                 iterations (the alternative reading).
enum class ConvergenceRule { cross_module, per_module };

const char* convergence_rule_key(ConvergenceRule rule);
std::optional<ConvergenceRule> convergence_rule_from_key(const std::string& key);

struct EngineOptions {
    int n = 10;                       // candidate pairs per generation step
    std::vector<double> temperatures; // empty = evenly spaced over [0.1, 1.0]
    double judge_temperature = 0.0;
    double baseline_temperature = 0.0;
    int max_iterations = 10;          // full TM2+TM1 iterations, >= 2
    int max_output_tokens = 1024;
    ScaleBounds scale{};
    ConvergenceRule convergence = ConvergenceRule::cross_module;

    void validate() const;              // throws ConfigError naming the field
    std::vector<double> schedule() const;  // resolved temperature list, length n
};

// One generation+judge pass of a Think-and-Improve module, fully recorded.
struct TMStepRecord {
    TmModule module = TmModule::tm1;
    int iteration = 0;
    std::vector<SWPair> candidates;
    JudgeVerdict verdict;
    SWPair best;  // strength from verdict.best_strength_index, weakness from
                  // best_weakness_index; origin follows the strength
    MetricScores scores;
    int generation_attempts = 0;  // completions issued, counting repairs and retries
    int judge_attempts = 0;
};

struct IterationRecord {
    int index = 0;
    std::optional<TMStepRecord> tm2;  // absent at index 0
    std::optional<TMStepRecord> tm1;  // absent only when the run failed mid-iteration
};

struct EvaluationTrace {
    std::string question_id;
    RunMode mode = RunMode::strive;
    int max_iterations = 0;
    bool converged = false;
    int iterations_used = 0;
    std::optional<MetricScores> final_scores;  // absent when failed
    bool failed = false;
    std::string failure_reason;
    std::vector<std::string> failure_raw_texts;  // raw replies behind a terminal parse failure
    std::vector<IterationRecord> iterations;
    ScaleBounds scale;
    std::vector<double> temperatures;
    double judge_temperature = 0.0;
    std::string convergence_rule;
    std::map<std::string, std::string> template_hashes;
    std::vector<std::string> provider_models;  // model names only, no endpoints or secrets
    std::vector<std::string> repair_tags;      // request tags that needed a corrective re-ask
    int baseline_attempts = 0;
};

struct EngineProviders {
    std::shared_ptr<CompletionProvider> tm1;
    std::shared_ptr<CompletionProvider> tm2;        // null = same as tm1
    std::shared_ptr<CompletionProvider> tm1_judge;  // null = tm1
    std::shared_ptr<CompletionProvider> tm2_judge;  // null = tm2
    std::shared_ptr<CompletionProvider> baseline;   // null = tm1

    EngineProviders() = default;
    explicit EngineProviders(std::shared_ptr<CompletionProvider> shared)
        : tm1(std::move(shared)) {}
};

class Engine {
public:
    Engine(PromptLibrary library, MetricDefinitionSet defs, EngineOptions options);

    const EngineOptions& options() const { return options_; }
    const PromptLibrary& library() const { return library_; }
    const MetricDefinitionSet& defs() const { return defs_; }

    // Single-prompt scoring. Failures are captured in the trace (failed,
    // failure_reason), not thrown, so one bad question never kills a batch.
    EvaluationTrace baseline_evaluate(const QuestionRecord& record,
                                      const EngineProviders& providers) const;

    // Iterative refinement. Iteration 0 is a TM1 step with no feedback; each
    // full iteration k >= 1 runs TM2 with TM1's best pair as feedback, then
    // TM1 with TM2's best pair. Stops as soon as the convergence rule holds
    // (earliest k = 2) or after max_iterations, whichever comes first.
    EvaluationTrace strive_evaluate(const QuestionRecord& record,
                                    const EngineProviders& providers) const;

    // Building blocks, exposed for direct testing. These throw on terminal
    // failures (RepairError after the retry budget, transport errors).
    CandidateSet generate_candidates(const QuestionRecord& record,
                                     const std::optional<SWPair>& feedback, TmModule module,
                                     int iteration, CompletionProvider& provider,
                                     int* attempts = nullptr,
                                     std::vector<std::string>* repair_tags = nullptr) const;

    struct JudgeOutcome {
        TMState state;
        JudgeVerdict verdict;
        int attempts = 0;
    };
    JudgeOutcome judge_select(const QuestionRecord& record, const CandidateSet& candidates,
                              CompletionProvider& provider,
                              std::vector<std::string>* repair_tags = nullptr) const;

    TMStepRecord tm_step(const QuestionRecord& record, const std::optional<SWPair>& feedback,
                         TmModule module, int iteration, CompletionProvider& generator,
                         CompletionProvider& judge,
                         std::vector<std::string>* repair_tags = nullptr) const;

private:
    PromptLibrary library_;
    MetricDefinitionSet defs_;
    EngineOptions options_;
};

// True when the stored scores satisfy the rule at full iteration k (k >= 2).
bool trace_converged_at(const EvaluationTrace& trace, int k, ConvergenceRule rule);

// Structural audit of a finished trace: contiguous iteration indices, verdict
// indices in range, best pair drawn from the candidate set, scores within
// scale, converged flag consistent with the recorded score history, and
// iteration bounds. Returns human-readable violations; empty means sound.
std::vector<std::string> verify_trace(const EvaluationTrace& trace);

// Stable JSON rendering (sorted keys, two-space indent) and its inverse.
// Volatile values (latency, cache state, endpoints, file paths) are not part
// of the trace, so a record run and its replay serialize byte-identically.
std::string trace_to_json_text(const EvaluationTrace& trace);
EvaluationTrace trace_from_json_text(const std::string& text);

}  // namespace qqeval
