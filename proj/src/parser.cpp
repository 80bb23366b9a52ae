#include "qqeval/parser.hpp"

#include <cctype>
#include <map>
#include <sstream>

#include "qqeval/util.hpp"

namespace qqeval {

namespace {

// Normalized label: lowercase, spaces/underscores/hyphens dropped.
// "Best Strength" and "beststrength" both key as "beststrength".
std::string normalize_label(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        if (c == ' ' || c == '\t' || c == '_' || c == '-' || c == '*') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

bool is_strict_integer(std::string_view tok) {
    if (tok.empty()) return false;
    size_t i = (tok[0] == '+' || tok[0] == '-') ? 1 : 0;
    if (i == tok.size()) return false;
    for (; i < tok.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
    return true;
}

// Splits block content into "label: value" segments. Segments are separated
// by newlines or commas, so both one-line and one-per-line replies parse.
// Later occurrences of a label overwrite earlier ones.
std::map<std::string, std::string> scan_labeled_segments(const std::string& block) {
    std::map<std::string, std::string> out;
    std::string segment;
    auto flush = [&]() {
        std::string_view seg = trim_view(segment);
        if (!seg.empty()) {
            size_t colon = seg.find(':');
            if (colon == std::string_view::npos) colon = seg.find('=');
            if (colon != std::string_view::npos && colon > 0) {
                std::string key = normalize_label(seg.substr(0, colon));
                std::string value = trim(seg.substr(colon + 1));
                if (!key.empty()) out[key] = value;
            }
        }
        segment.clear();
    };
    for (char c : block) {
        if (c == '\n' || c == ',') {
            flush();
        } else {
            segment.push_back(c);
        }
    }
    flush();
    return out;
}

int parse_integer_field(const std::map<std::string, std::string>& segments,
                        const std::string& key, const char* display_name) {
    auto it = segments.find(key);
    if (it == segments.end())
        throw FormatError(ParseError::Kind::missing_field, display_name,
                          std::string("missing \"") + display_name + "\" line in score block");
    const std::string& tok = it->second;
    if (!is_strict_integer(tok))
        throw RangeError(ParseError::Kind::bad_value, display_name, tok,
                         std::string(display_name) + ": not an integer: \"" + tok + "\"");
    long long v = 0;
    try {
        v = std::stoll(tok);
    } catch (const std::exception&) {
        throw RangeError(ParseError::Kind::bad_value, display_name, tok,
                         std::string(display_name) + ": integer out of representable range: \"" +
                             tok + "\"");
    }
    if (v < -1000000 || v > 1000000)
        throw RangeError(ParseError::Kind::out_of_range, display_name, tok,
                         std::string(display_name) + ": value " + tok + " is implausibly large");
    return static_cast<int>(v);
}

MetricScores parse_scores_from_segments(const std::map<std::string, std::string>& segments,
                                        ScaleBounds scale) {
    MetricScores scores;
    for (Metric m : kAllMetrics) {
        const int v = parse_integer_field(segments, metric_key(m), metric_label(m));
        if (!scale.contains(v)) {
            auto tok = segments.at(metric_key(m));
            throw RangeError(ParseError::Kind::out_of_range, metric_label(m), tok,
                             std::string(metric_label(m)) + ": score " + tok + " outside scale " +
                                 std::to_string(scale.min) + "-" + std::to_string(scale.max));
        }
        scores.set(m, v);
    }
    return scores;
}

bool is_fence_line(std::string_view line) {
    return trim_view(line).substr(0, 3) == "```";
}

// Word-boundary search for "<label>:" ignoring case. Returns the position of
// the label start, or npos.
size_t find_section_label(const std::string& lower_text, const std::string& label,
                          size_t from = 0) {
    size_t pos = from;
    while (true) {
        pos = lower_text.find(label, pos);
        if (pos == std::string::npos) return std::string::npos;
        const bool boundary_ok =
            pos == 0 || !std::isalnum(static_cast<unsigned char>(lower_text[pos - 1]));
        // Require a colon after the label (spaces allowed).
        size_t after = pos + label.size();
        while (after < lower_text.size() &&
               (lower_text[after] == ' ' || lower_text[after] == '\t'))
            ++after;
        if (boundary_ok && after < lower_text.size() && lower_text[after] == ':')
            return pos;
        pos += label.size();
    }
}

size_t section_content_start(const std::string& lower_text, size_t label_pos,
                             const std::string& label) {
    size_t p = label_pos + label.size();
    while (p < lower_text.size() && (lower_text[p] == ' ' || lower_text[p] == '\t')) ++p;
    return p + 1;  // past the ':'
}

}  // namespace

std::string score_format_instructions(ScaleBounds scale) {
    std::ostringstream out;
    out << "End your reply with a fenced block giving your scores, exactly in this form:\n"
        << "\n"
        << "```\n";
    for (Metric m : kAllMetrics) out << metric_label(m) << ": <integer>\n";
    out << "```\n"
        << "\n"
        << "Every value must be an integer from " << scale.min << " to " << scale.max
        << ". Output nothing after the closing fence.";
    return out.str();
}

std::string judge_format_instructions(ScaleBounds scale, int candidate_count) {
    std::ostringstream out;
    out << "End your reply with a fenced block giving your selection and scores, exactly in "
           "this form:\n"
        << "\n"
        << "```\n"
        << "BestStrength: <index from 1 to " << candidate_count << ">\n"
        << "BestWeakness: <index from 1 to " << candidate_count << ">\n";
    for (Metric m : kAllMetrics) out << metric_label(m) << ": <integer>\n";
    out << "```\n"
        << "\n"
        << "Every score must be an integer from " << scale.min << " to " << scale.max
        << ". Output nothing after the closing fence.";
    return out.str();
}

std::string candidate_format_instructions() {
    return "Reply with exactly two labeled sections, in this form:\n"
           "\n"
           "Strength: <the single most important strength of the question>\n"
           "Weakness: <the single most important weakness of the question>\n"
           "\n"
           "Both sections are required and must not be empty.";
}

std::string format_scores_block(const MetricScores& scores) {
    std::ostringstream out;
    out << "```\n";
    for (Metric m : kAllMetrics) out << metric_label(m) << ": " << scores.get(m) << "\n";
    out << "```";
    return out.str();
}

std::string format_judge_block(const JudgeVerdict& verdict) {
    std::ostringstream out;
    out << "```\n"
        << "BestStrength: " << verdict.best_strength_index << "\n"
        << "BestWeakness: " << verdict.best_weakness_index << "\n";
    for (Metric m : kAllMetrics) out << metric_label(m) << ": " << verdict.scores.get(m) << "\n";
    out << "```";
    return out.str();
}

std::optional<std::string> last_fenced_block(const std::string& text) {
    std::optional<std::string> last_complete;
    std::string current;
    bool inside = false;
    size_t start = 0;
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        const bool at_end = (end == std::string::npos);
        std::string_view line(text.data() + start, (at_end ? text.size() : end) - start);
        if (is_fence_line(line)) {
            if (inside) {
                last_complete = current;
                current.clear();
                inside = false;
            } else {
                inside = true;
                current.clear();
            }
        } else if (inside) {
            current.append(line);
            current.push_back('\n');
        }
        if (at_end) break;
        start = end + 1;
    }
    // An unterminated trailing fence still counts as the final block.
    if (inside) return current;
    return last_complete;
}

MetricScores parse_scores(const std::string& text, ScaleBounds scale) {
    auto block = last_fenced_block(text);
    if (!block)
        throw FormatError(ParseError::Kind::missing_block, "",
                          "no fenced score block found in reply");
    return parse_scores_from_segments(scan_labeled_segments(*block), scale);
}

SWPair parse_candidate(const std::string& text) {
    const std::string lower = to_lower(text);

    const size_t s_label = find_section_label(lower, "strength");
    const size_t w_label = find_section_label(lower, "weakness");
    if (s_label == std::string::npos)
        throw FormatError(ParseError::Kind::missing_field, "Strength",
                          "missing \"Strength:\" section");
    if (w_label == std::string::npos)
        throw FormatError(ParseError::Kind::missing_field, "Weakness",
                          "missing \"Weakness:\" section");

    auto section_text = [&](size_t label_pos, const std::string& label,
                            size_t other_label_pos) -> std::string {
        const size_t begin = section_content_start(lower, label_pos, label);
        size_t end = text.size();
        if (other_label_pos != std::string::npos && other_label_pos > label_pos)
            end = other_label_pos;
        // Stop at a fence so a trailing score block is never swallowed.
        size_t fence = lower.find("```", begin);
        if (fence != std::string::npos && fence < end) end = fence;
        if (begin >= end) return "";
        return trim(std::string_view(text).substr(begin, end - begin));
    };

    SWPair pair;
    pair.strength = section_text(s_label, "strength", w_label);
    pair.weakness = section_text(w_label, "weakness", s_label);
    if (pair.strength.empty())
        throw FormatError(ParseError::Kind::empty_section, "Strength",
                          "\"Strength:\" section is empty");
    if (pair.weakness.empty())
        throw FormatError(ParseError::Kind::empty_section, "Weakness",
                          "\"Weakness:\" section is empty");
    return pair;
}

JudgeVerdict parse_judge_verdict(const std::string& text, int candidate_count,
                                 ScaleBounds scale) {
    if (candidate_count < 1)
        throw ArgumentError("parse_judge_verdict: candidate_count must be >= 1");

    auto block = last_fenced_block(text);
    if (!block)
        throw FormatError(ParseError::Kind::missing_block, "",
                          "no fenced verdict block found in reply");
    auto segments = scan_labeled_segments(*block);

    JudgeVerdict verdict;
    verdict.best_strength_index = parse_integer_field(segments, "beststrength", "BestStrength");
    verdict.best_weakness_index = parse_integer_field(segments, "bestweakness", "BestWeakness");
    for (const auto& [name, index] :
         {std::pair<const char*, int>{"BestStrength", verdict.best_strength_index},
          std::pair<const char*, int>{"BestWeakness", verdict.best_weakness_index}}) {
        if (index < 1 || index > candidate_count)
            throw RangeError(ParseError::Kind::out_of_range, name, std::to_string(index),
                             std::string(name) + ": index " + std::to_string(index) +
                                 " outside 1.." + std::to_string(candidate_count));
    }
    verdict.scores = parse_scores_from_segments(segments, scale);
    return verdict;
}

}  // namespace qqeval
