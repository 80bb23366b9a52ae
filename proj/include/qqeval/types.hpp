#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace qqeval {

// The five quality metrics, in the order used by every table, prompt, and
// score block in this project.
enum class Metric { gram = 0, app, rel, nov, com };

inline constexpr std::array<Metric, 5> kAllMetrics = {
    Metric::gram, Metric::app, Metric::rel, Metric::nov, Metric::com};

constexpr const char* metric_label(Metric m) {
    switch (m) {
        case Metric::gram: return "Gram";
        case Metric::app: return "App";
        case Metric::rel: return "Rel";
        case Metric::nov: return "Nov";
        case Metric::com: return "Com";
    }
    return "?";
}

// Lowercase key used in files (JSON fields, CSV headers).
constexpr const char* metric_key(Metric m) {
    switch (m) {
        case Metric::gram: return "gram";
        case Metric::app: return "app";
        case Metric::rel: return "rel";
        case Metric::nov: return "nov";
        case Metric::com: return "com";
    }
    return "?";
}

// Inclusive integer bounds of the Likert scale.
struct ScaleBounds {
    int min = 1;
    int max = 5;

    bool contains(int v) const { return v >= min && v <= max; }
    int span() const { return max - min + 1; }
    bool operator==(const ScaleBounds&) const = default;
};

// One integer score per metric. Field-wise exact equality is what the
// refinement loop means by "the two modules agree".
struct MetricScores {
    int gram = 0;
    int app = 0;
    int rel = 0;
    int nov = 0;
    int com = 0;

    int get(Metric m) const {
        switch (m) {
            case Metric::gram: return gram;
            case Metric::app: return app;
            case Metric::rel: return rel;
            case Metric::nov: return nov;
            case Metric::com: return com;
        }
        return 0;
    }

    void set(Metric m, int v) {
        switch (m) {
            case Metric::gram: gram = v; return;
            case Metric::app: app = v; return;
            case Metric::rel: rel = v; return;
            case Metric::nov: nov = v; return;
            case Metric::com: com = v; return;
        }
    }

    bool within(const ScaleBounds& scale) const {
        for (Metric m : kAllMetrics)
            if (!scale.contains(get(m))) return false;
        return true;
    }

    bool operator==(const MetricScores&) const = default;
};

// One <context, question> pair as loaded from a dataset file.
struct QuestionRecord {
    std::string id;
    std::string dataset;
    std::optional<std::string> subject;
    std::string context;
    std::string question;

    bool operator==(const QuestionRecord&) const = default;
};

// One expert rating row for a question.
struct HumanRating {
    std::string question_id;
    std::string rater_id;
    MetricScores scores;

    bool operator==(const HumanRating&) const = default;
};

enum class TmModule { tm1 = 0, tm2 };

constexpr const char* tm_module_key(TmModule m) {
    return m == TmModule::tm1 ? "tm1" : "tm2";
}

// Where a strength/weakness pair came from.
struct Origin {
    TmModule module = TmModule::tm1;
    int iteration = 0;
    int candidate_index = 1;  // 1-based within the candidate set
    double temperature = 0.0;

    bool operator==(const Origin&) const = default;
};

// A strength/weakness critique of one question. The unit exchanged as
// feedback between the two reviewing modules.
struct SWPair {
    std::string strength;
    std::string weakness;
    Origin origin;

    bool operator==(const SWPair&) const = default;
};

// The pool of candidate critiques produced by one generation step.
struct CandidateSet {
    std::vector<SWPair> pairs;  // indices 1..n, stable
    int iteration = 0;
    TmModule module = TmModule::tm1;

    int size() const { return static_cast<int>(pairs.size()); }
    const SWPair& at(int one_based) const { return pairs.at(static_cast<size_t>(one_based - 1)); }
};

// What the judge call returns: which candidates won, plus the scores.
struct JudgeVerdict {
    int best_strength_index = 1;  // 1-based
    int best_weakness_index = 1;  // 1-based
    MetricScores scores;

    bool operator==(const JudgeVerdict&) const = default;
};

// Result of one full generate-then-judge step of a module.
struct TMState {
    TmModule module = TmModule::tm1;
    SWPair best;  // strength and weakness may come from different candidates
    MetricScores scores;
    int iteration = 0;
};

enum class RunMode { baseline = 0, strive };

constexpr const char* run_mode_key(RunMode m) {
    return m == RunMode::baseline ? "baseline" : "strive";
}

inline std::optional<RunMode> run_mode_from_key(const std::string& key) {
    if (key == "baseline") return RunMode::baseline;
    if (key == "strive") return RunMode::strive;
    return std::nullopt;
}

}  // namespace qqeval
