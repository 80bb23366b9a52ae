#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "qqeval/types.hpp"

namespace qqeval {

struct MetricDefinition {
    std::string name;        // display name, e.g. "Grammaticality"
    std::string definition;  // one-paragraph definition text
    std::string scale_text;  // how to read the scale for this metric
};

// The five metric definitions embedded into every prompt. Construction
// validates that all five are present and non-empty.
class MetricDefinitionSet {
public:
    MetricDefinitionSet(std::array<MetricDefinition, 5> defs, ScaleBounds scale);

    // Built-in one-paragraph definitions on the given scale.
    static MetricDefinitionSet defaults(ScaleBounds scale = ScaleBounds{});

    // Override file: JSON object keyed by metric ("gram".."com"), each value
    // an object with "name", "definition", and optional "scale_text".
    // Metrics absent from the file keep their default text.
    static MetricDefinitionSet load(const std::string& path, ScaleBounds scale = ScaleBounds{});

    const MetricDefinition& at(Metric m) const { return defs_[static_cast<size_t>(m)]; }
    ScaleBounds scale() const { return scale_; }

    // The definitions block as rendered into prompts.
    std::string render_block() const;

private:
    std::array<MetricDefinition, 5> defs_;
    ScaleBounds scale_;
};

enum class TemplateId { baseline = 0, generate, judge };

constexpr const char* template_id_key(TemplateId id) {
    switch (id) {
        case TemplateId::baseline: return "baseline";
        case TemplateId::generate: return "generate";
        case TemplateId::judge: return "judge";
    }
    return "?";
}

// A prompt template with {placeholder} markers. A marker is a brace pair
// wrapping a lowercase identifier; any other brace is literal text.
// Rendering substitutes in a single pass (values are never re-scanned) and
// fails if any placeholder in the body is left unbound.
class PromptTemplate {
public:
    PromptTemplate(TemplateId id, std::string body);

    TemplateId id() const { return id_; }
    const std::string& body() const { return body_; }
    const std::set<std::string>& placeholders() const { return placeholders_; }
    const std::string& content_hash() const { return content_hash_; }

    std::string render(const std::map<std::string, std::string>& bindings) const;

private:
    TemplateId id_;
    std::string body_;
    std::set<std::string> placeholders_;
    std::string content_hash_;
};

// The three prompt families. Defaults are compiled in from assets/prompts/;
// a directory with baseline.txt / generate.txt / judge.txt overrides them.
class PromptLibrary {
public:
    static PromptLibrary builtin();
    static PromptLibrary from_directory(const std::string& dir);

    const PromptTemplate& get(TemplateId id) const { return templates_[static_cast<size_t>(id)]; }

    // template_id -> content hash, recorded in run manifests and traces.
    std::map<std::string, std::string> template_hashes() const;

    std::string render_baseline_prompt(const MetricDefinitionSet& defs,
                                       const QuestionRecord& record) const;

    // `feedback`, when present, is embedded verbatim with an instruction to
    // improve on it; when absent the prompt carries no feedback section.
    std::string render_generation_prompt(const MetricDefinitionSet& defs,
                                         const QuestionRecord& record,
                                         const std::optional<SWPair>& feedback) const;

    // Lists every candidate strength and weakness with stable 1-based indices
    // and asks for the best of each plus the five scores.
    std::string render_judge_prompt(const MetricDefinitionSet& defs, const QuestionRecord& record,
                                    const CandidateSet& candidates) const;

private:
    PromptLibrary(PromptTemplate baseline, PromptTemplate generate, PromptTemplate judge);
    std::array<PromptTemplate, 3> templates_;
};

}  // namespace qqeval
