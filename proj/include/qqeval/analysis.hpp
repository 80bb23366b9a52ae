#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qqeval/types.hpp"

namespace qqeval {

// One summary.csv line from a finished run directory.
struct SummaryRow {
    std::string question_id;
    std::string dataset;
    bool ok = false;
    MetricScores scores;  // meaningful only when ok
    bool converged = false;
    int iterations_used = 0;
    std::string failure_reason;
};

struct RunData {
    std::string run_dir;
    RunMode mode = RunMode::strive;
    std::string model;  // TM1 model name from the manifest, labels report rows
    std::vector<SummaryRow> rows;
};

RunData load_run(const std::string& run_dir);

// Human ratings grouped by question. Several raters may rate one question;
// correlation uses the per-question mean, exact match the per-question mode
// with ties broken toward the lower score.
class HumanIndex {
public:
    HumanIndex() = default;
    explicit HumanIndex(const std::vector<HumanRating>& ratings);

    bool empty() const { return by_question_.empty(); }
    size_t question_count() const { return by_question_.size(); }
    bool has(const std::string& question_id) const;
    std::optional<std::array<double, 5>> mean_of(const std::string& question_id) const;
    std::optional<MetricScores> mode_low_of(const std::string& question_id) const;

private:
    std::map<std::string, std::vector<MetricScores>> by_question_;
};

// Sample Pearson correlation. Throws ArgumentError on length mismatch or
// n < 2; returns nullopt when either side has zero variance (reported as
// undefined downstream, never coerced to 0). Exactly colinear inputs give
// exactly +1.0 or -1.0.
std::optional<double> pearson_r(const std::vector<double>& x, const std::vector<double>& y);

struct ReportCell {
    double value = 0.0;
    bool defined = false;
};

struct ReportRow {
    std::string label;
    std::array<ReportCell, 5> cells;  // Gram, App, Rel, Nov, Com
    int n = 0;
};

// kind: "means", "correlation", "match", or "delta".
struct ReportTable {
    std::string kind;
    std::string dataset;
    std::vector<ReportRow> rows;
    std::vector<std::string> notes;
};

struct AnalysisReport {
    std::vector<ReportTable> tables;
    std::vector<std::string> warnings;
};

struct AnalysisOptions {
    std::optional<int> match_sample;    // sample size for the match analysis
    uint64_t seed = 0;                  // drives the sample selection
    std::vector<std::string> match_ids; // explicit id list; overrides sampling
};

// Mean of integer score vectors; n = count. Throws ArgumentError when empty.
ReportRow mean_row(const std::string& label, const std::vector<MetricScores>& scores);

// Exact-match percentages over joined (machine, human) integer score pairs,
// 100 * matches / n per metric. Throws ArgumentError when the join is empty.
ReportRow exact_match_rate(const std::string& label,
                           const std::vector<std::pair<MetricScores, MetricScores>>& joined);

// Builds every report table: per dataset a means table (Human Baseline row
// plus one row per run), a correlation table, a match table, and, when a
// model appears in both modes, a baseline-to-feedback delta table. Throws
// ArgumentError when runs and ratings share no question id at all.
AnalysisReport analyze(const std::vector<RunData>& runs, const HumanIndex& ratings,
                       const AnalysisOptions& options = {});

// Machine-readable (one csv, full precision, "n/a" for undefined cells) and
// human-readable (aligned columns, two decimals) renderings.
std::string report_to_csv(const AnalysisReport& report);
std::string report_to_text(const AnalysisReport& report);

}  // namespace qqeval
