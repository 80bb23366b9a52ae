#include "qqeval/prompts.hpp"

#include <cctype>
#include <sstream>

#include "json.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/parser.hpp"
#include "qqeval/util.hpp"

namespace qqeval {

// Compiled-in copies of assets/prompts/*.txt, see prompt_defaults.cpp.in.
namespace embedded {
extern const char* const baseline_template;
extern const char* const generate_template;
extern const char* const judge_template;
}  // namespace embedded

MetricDefinitionSet::MetricDefinitionSet(std::array<MetricDefinition, 5> defs, ScaleBounds scale)
    : defs_(std::move(defs)), scale_(scale) {
    for (Metric m : kAllMetrics) {
        const auto& d = defs_[static_cast<size_t>(m)];
        if (d.name.empty())
            throw ConfigError(metric_key(m), "metric definition has an empty name");
        if (d.definition.empty())
            throw ConfigError(metric_key(m), "metric definition text must not be empty");
    }
}

MetricDefinitionSet MetricDefinitionSet::defaults(ScaleBounds scale) {
    auto scale_text = [&](const char* low, const char* high) {
        std::ostringstream out;
        out << "Rate from " << scale.min << " (" << low << ") to " << scale.max << " (" << high
            << ").";
        return out.str();
    };
    std::array<MetricDefinition, 5> defs = {{
        {"Grammaticality",
         "How grammatically well-formed the question is as a piece of English text: syntax, "
         "agreement, word order, and punctuation. Judge the question text alone, not whether "
         "it is a good question.",
         scale_text("severely ungrammatical", "flawless")},
        {"Appropriateness",
         "How suitable the question is for its educational context and level: semantically "
         "sensible, answerable as posed, unambiguous, and pitched at the audience the passage "
         "serves.",
         scale_text("nonsensical or unanswerable", "fully suitable")},
        {"Relevance",
         "How closely the question pertains to the given passage. A relevant question can be "
         "engaged with using the passage content rather than outside material.",
         scale_text("unrelated to the passage", "directly grounded in the passage")},
        {"Novelty",
         "The degree to which the question goes beyond verbatim recall. A novel question "
         "cannot be answered by copying a single phrase from the passage and instead probes "
         "understanding from a fresh angle.",
         scale_text("pure copy of the passage", "genuinely fresh framing")},
        {"Complexity",
         "The depth of thought required to answer well: multi-step reasoning, synthesis of "
         "several parts of the passage, or explanation rather than a one-word lookup.",
         scale_text("trivial lookup", "demands sustained reasoning")},
    }};
    return MetricDefinitionSet(std::move(defs), scale);
}

MetricDefinitionSet MetricDefinitionSet::load(const std::string& path, ScaleBounds scale) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("definitions", std::string("cannot parse ") + path + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("definitions", path + ": expected a JSON object");

    MetricDefinitionSet base = defaults(scale);
    std::array<MetricDefinition, 5> defs;
    for (Metric m : kAllMetrics) defs[static_cast<size_t>(m)] = base.at(m);

    for (auto it = doc.begin(); it != doc.end(); ++it) {
        bool known = false;
        for (Metric m : kAllMetrics) {
            if (it.key() != metric_key(m)) continue;
            known = true;
            const auto& v = it.value();
            if (!v.is_object())
                throw ConfigError(it.key(), path + ": metric entry must be an object");
            auto& d = defs[static_cast<size_t>(m)];
            if (v.contains("name")) d.name = v.at("name").get<std::string>();
            if (v.contains("definition")) d.definition = v.at("definition").get<std::string>();
            if (v.contains("scale_text")) d.scale_text = v.at("scale_text").get<std::string>();
        }
        if (!known)
            throw ConfigError(it.key(), path + ": unknown metric key (expected gram..com)");
    }
    return MetricDefinitionSet(std::move(defs), scale);
}

std::string MetricDefinitionSet::render_block() const {
    std::ostringstream out;
    bool first = true;
    for (Metric m : kAllMetrics) {
        const auto& d = at(m);
        if (!first) out << "\n";
        first = false;
        out << d.name << " (" << metric_label(m) << "): " << d.definition;
        if (!d.scale_text.empty()) out << " " << d.scale_text;
        out << "\n";
    }
    return out.str();
}

namespace {

bool placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Returns the identifier if text[pos] opens a {placeholder}, else nullopt.
std::optional<std::string> placeholder_at(const std::string& text, size_t pos, size_t* end) {
    if (text[pos] != '{') return std::nullopt;
    size_t i = pos + 1;
    while (i < text.size() && placeholder_char(text[i])) ++i;
    if (i == pos + 1 || i >= text.size() || text[i] != '}') return std::nullopt;
    *end = i + 1;
    return text.substr(pos + 1, i - pos - 1);
}

}  // namespace

PromptTemplate::PromptTemplate(TemplateId id, std::string body)
    : id_(id), body_(std::move(body)), content_hash_(hex64(fnv1a64(body_))) {
    for (size_t i = 0; i < body_.size(); ++i) {
        size_t end = 0;
        if (auto name = placeholder_at(body_, i, &end)) {
            placeholders_.insert(*name);
            i = end - 1;
        }
    }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
    // Single pass over the template body; substituted values are emitted
    // verbatim and never re-scanned, so braces inside passage text or
    // feedback cannot be mistaken for placeholders.
    std::string out;
    out.reserve(body_.size() + 256);
    for (size_t i = 0; i < body_.size(); ++i) {
        size_t end = 0;
        auto name = placeholder_at(body_, i, &end);
        if (!name) {
            out.push_back(body_[i]);
            continue;
        }
        auto it = bindings.find(*name);
        if (it == bindings.end())
            throw TemplateError(*name, std::string("unbound placeholder in ") +
                                           template_id_key(id_) + " template");
        out.append(it->second);
        i = end - 1;
    }
    return out;
}

PromptLibrary::PromptLibrary(PromptTemplate baseline, PromptTemplate generate,
                             PromptTemplate judge)
    : templates_{std::move(baseline), std::move(generate), std::move(judge)} {}

PromptLibrary PromptLibrary::builtin() {
    return PromptLibrary(PromptTemplate(TemplateId::baseline, embedded::baseline_template),
                         PromptTemplate(TemplateId::generate, embedded::generate_template),
                         PromptTemplate(TemplateId::judge, embedded::judge_template));
}

PromptLibrary PromptLibrary::from_directory(const std::string& dir) {
    auto read = [&](const char* file) { return read_text_file(dir + "/" + file); };
    return PromptLibrary(PromptTemplate(TemplateId::baseline, read("baseline.txt")),
                         PromptTemplate(TemplateId::generate, read("generate.txt")),
                         PromptTemplate(TemplateId::judge, read("judge.txt")));
}

std::map<std::string, std::string> PromptLibrary::template_hashes() const {
    std::map<std::string, std::string> out;
    for (const auto& t : templates_) out[template_id_key(t.id())] = t.content_hash();
    return out;
}

std::string PromptLibrary::render_baseline_prompt(const MetricDefinitionSet& defs,
                                                  const QuestionRecord& record) const {
    return get(TemplateId::baseline)
        .render({{"metric_definitions", defs.render_block()},
                 {"context", record.context},
                 {"question", record.question},
                 {"format_instructions", score_format_instructions(defs.scale())}});
}

std::string PromptLibrary::render_generation_prompt(const MetricDefinitionSet& defs,
                                                    const QuestionRecord& record,
                                                    const std::optional<SWPair>& feedback) const {
    std::string feedback_section;
    if (feedback) {
        std::ostringstream out;
        out << "\nFeedback from the previous review round:\n"
            << "Strength: " << feedback->strength << "\n"
            << "Weakness: " << feedback->weakness << "\n"
            << "\n"
            << "Build on this feedback: keep what the strength captures, resolve or sharpen "
               "the weakness, and produce a better strength and weakness pair.\n";
        feedback_section = out.str();
    }
    return get(TemplateId::generate)
        .render({{"metric_definitions", defs.render_block()},
                 {"context", record.context},
                 {"question", record.question},
                 {"feedback_section", feedback_section},
                 {"format_instructions", candidate_format_instructions()}});
}

std::string PromptLibrary::render_judge_prompt(const MetricDefinitionSet& defs,
                                               const QuestionRecord& record,
                                               const CandidateSet& candidates) const {
    if (candidates.pairs.empty())
        throw ArgumentError("judge prompt requires a non-empty candidate set");
    std::ostringstream strengths, weaknesses;
    for (size_t i = 0; i < candidates.pairs.size(); ++i) {
        strengths << (i + 1) << ". " << candidates.pairs[i].strength << "\n";
        weaknesses << (i + 1) << ". " << candidates.pairs[i].weakness << "\n";
    }
    int count = static_cast<int>(candidates.pairs.size());
    return get(TemplateId::judge)
        .render({{"metric_definitions", defs.render_block()},
                 {"context", record.context},
                 {"question", record.question},
                 {"candidate_count", std::to_string(count)},
                 {"candidate_strengths", strengths.str()},
                 {"candidate_weaknesses", weaknesses.str()},
                 {"format_instructions", judge_format_instructions(defs.scale(), count)}});
}

}  // namespace qqeval
