#pragma once

#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "qqeval/errors.hpp"
#include "qqeval/types.hpp"

namespace qqeval {

// ---------------------------------------------------------------------------
// Output-format contract
//
// Models are instructed to end every scoring reply with a fenced block
// (``` lines) containing one labeled integer per line:
//
//   ```
//   Gram: 5
//   App: 4
//   Rel: 4
//   Nov: 3
//   Com: 3
//   ```
//
// Judge replies carry two extra lines inside the same block:
//
//   BestStrength: <1-based candidate index>
//   BestWeakness: <1-based candidate index>
//
// Candidate-generation replies are not fenced; they use two labeled sections:
//
//   Strength: <free text>
//   Weakness: <free text>
//
// Parsing rules: only the FINAL fenced block of a reply is read (an opening
// fence without a closing fence at end-of-text still counts as a block);
// labels are case-insensitive and tolerate spaces/underscores; value tokens
// must be strict integers. See docs/output_format.md.
// ---------------------------------------------------------------------------

// Instruction blocks embedded into prompts. Prompt rendering and parsing
// must agree on these, so they live here with the parsers.
std::string score_format_instructions(ScaleBounds scale);
std::string judge_format_instructions(ScaleBounds scale, int candidate_count);
std::string candidate_format_instructions();

// Canonical renderings of parsed values; parsing them back is the identity.
std::string format_scores_block(const MetricScores& scores);
std::string format_judge_block(const JudgeVerdict& verdict);

// Content of the final fenced block, or nullopt when no fence line exists.
std::optional<std::string> last_fenced_block(const std::string& text);

// Extracts the five metric scores from the final fenced block.
// Throws FormatError (no block / metric line missing) or RangeError
// (non-integer or out-of-scale value, naming the metric and raw token).
MetricScores parse_scores(const std::string& text, ScaleBounds scale = ScaleBounds{});

// Extracts the Strength/Weakness sections (any order, label-driven).
// The returned pair has a default origin; callers attach the real one.
// Throws FormatError naming the missing or empty section.
SWPair parse_candidate(const std::string& text);

// Extracts BestStrength/BestWeakness indices plus the five scores.
// Indices must fall in 1..candidate_count. Throws ArgumentError when
// candidate_count < 1, otherwise FormatError/RangeError as above.
JudgeVerdict parse_judge_verdict(const std::string& text, int candidate_count,
                                 ScaleBounds scale = ScaleBounds{});

template <typename T>
struct RepairOutcome {
    T value;
    int attempts = 1;      // 1 = parsed first time, 2 = repair re-ask used
    bool repaired = false;
};

// One-shot repair driver: if `parser` rejects `first_text`, issues exactly one
// re-ask through `reask` (passing a corrective instruction that names the
// fault) and parses the second reply. A second failure is terminal and throws
// RepairError carrying both raw texts.
template <typename Reask, typename Parser,
          typename T = std::invoke_result_t<Parser&, const std::string&>>
RepairOutcome<T> parse_with_repair(const std::string& first_text, Reask&& reask,
                                   Parser&& parser) {
    try {
        return RepairOutcome<T>{parser(first_text), 1, false};
    } catch (const ParseError& first_err) {
        const std::string correction =
            std::string("Your previous reply could not be parsed (") + first_err.what() +
            "). Reply again and follow the required output format exactly.";
        const std::string second_text = reask(correction);
        try {
            return RepairOutcome<T>{parser(second_text), 2, true};
        } catch (const ParseError& second_err) {
            throw RepairError(second_err, {first_text, second_text});
        }
    }
}

}  // namespace qqeval
