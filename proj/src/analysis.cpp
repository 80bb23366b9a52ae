#include "qqeval/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/util.hpp"

namespace qqeval {

using nlohmann::json;

namespace {

constexpr const char* kSummaryHeader =
    "question_id,dataset,status,gram,app,rel,nov,com,converged,iterations_used,failure_reason";

int parse_int_field(const std::string& token, const std::string& what) {
    try {
        size_t used = 0;
        int v = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw Error("summary field " + what + " is not an integer: '" + token + "'");
    }
}

}  // namespace

RunData load_run(const std::string& run_dir) {
    RunData out;
    out.run_dir = run_dir;

    json manifest;
    try {
        manifest = json::parse(read_text_file(run_dir + "/manifest.json"));
    } catch (const json::exception& e) {
        throw Error(run_dir + "/manifest.json is not valid JSON: " + e.what());
    }
    try {
        const json& cfg = manifest.at("config");
        std::string mode = cfg.at("mode").get<std::string>();
        if (mode == "baseline")
            out.mode = RunMode::baseline;
        else if (mode == "strive")
            out.mode = RunMode::strive;
        else
            throw Error("unknown mode in manifest: " + mode);
        out.model = cfg.at("providers").at("tm1").at("model_name").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(run_dir + "/manifest.json is missing fields: " + e.what());
    }

    std::string text = read_text_file(run_dir + "/summary.csv");
    std::vector<std::string> lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != kSummaryHeader)
        throw Error(run_dir + "/summary.csv has an unexpected header");
    for (size_t i = 1; i < lines.size(); ++i) {
        if (trim_view(lines[i]).empty()) continue;
        std::vector<std::string> f = parse_csv_line(lines[i]);
        if (f.size() != 11)
            throw Error(run_dir + "/summary.csv line " + std::to_string(i + 1) +
                        ": expected 11 fields, found " + std::to_string(f.size()));
        SummaryRow row;
        row.question_id = f[0];
        row.dataset = f[1];
        row.ok = f[2] == "ok";
        if (row.ok) {
            for (Metric m : kAllMetrics)
                row.scores.set(m, parse_int_field(f[3 + static_cast<size_t>(m)],
                                                  metric_key(m)));
        }
        row.converged = f[8] == "true";
        row.iterations_used = parse_int_field(f[9], "iterations_used");
        row.failure_reason = f[10];
        out.rows.push_back(std::move(row));
    }
    return out;
}

HumanIndex::HumanIndex(const std::vector<HumanRating>& ratings) {
    for (const HumanRating& r : ratings) by_question_[r.question_id].push_back(r.scores);
}

bool HumanIndex::has(const std::string& question_id) const {
    return by_question_.count(question_id) != 0;
}

std::optional<std::array<double, 5>> HumanIndex::mean_of(const std::string& question_id) const {
    auto it = by_question_.find(question_id);
    if (it == by_question_.end()) return std::nullopt;
    std::array<double, 5> out{};
    for (const MetricScores& s : it->second)
        for (Metric m : kAllMetrics) out[static_cast<size_t>(m)] += s.get(m);
    for (double& v : out) v /= static_cast<double>(it->second.size());
    return out;
}

std::optional<MetricScores> HumanIndex::mode_low_of(const std::string& question_id) const {
    auto it = by_question_.find(question_id);
    if (it == by_question_.end()) return std::nullopt;
    MetricScores out;
    for (Metric m : kAllMetrics) {
        std::map<int, int> counts;  // ordered, so ties resolve to the lower score
        for (const MetricScores& s : it->second) counts[s.get(m)] += 1;
        int best_value = 0;
        int best_count = 0;
        for (const auto& [value, count] : counts) {
            if (count > best_count) {
                best_count = count;
                best_value = value;
            }
        }
        out.set(m, best_value);
    }
    return out;
}

std::optional<double> pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ArgumentError("pearson_r needs equal-length samples, got " +
                            std::to_string(x.size()) + " and " + std::to_string(y.size()));
    size_t n = x.size();
    if (n < 2) throw ArgumentError("pearson_r needs at least two pairs");

    bool x_const = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    bool y_const = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (x_const || y_const) return std::nullopt;

    // Exactly colinear data snaps to +-1.0 instead of accumulating rounding.
    {
        size_t j = 0;
        while (j < n && x[j] == x[0]) ++j;
        double a = (y[j] - y[0]) / (x[j] - x[0]);
        double b = y[0] - a * x[0];
        bool colinear = a != 0.0;
        for (size_t i = 0; colinear && i < n; ++i)
            if (y[i] != a * x[i] + b) colinear = false;
        if (colinear) return a > 0 ? 1.0 : -1.0;
    }

    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

namespace {

const char* approach_label(RunMode mode) {
    return mode == RunMode::baseline ? "Baseline Approach" : "Feedback-based Approach";
}

ReportRow mean_row_doubles(const std::string& label,
                           const std::vector<std::array<double, 5>>& values) {
    if (values.empty()) throw ArgumentError("mean over an empty group: " + label);
    ReportRow row;
    row.label = label;
    row.n = static_cast<int>(values.size());
    for (size_t m = 0; m < 5; ++m) {
        double sum = 0.0;
        for (const auto& v : values) sum += v[m];
        row.cells[m] = ReportCell{sum / static_cast<double>(values.size()), true};
    }
    return row;
}

uint64_t next_rand(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seeded pick of k ids out of a sorted list; self-contained so the selection
// is identical across platforms and runs.
std::vector<std::string> sample_ids(std::vector<std::string> ids, int k, uint64_t seed) {
    uint64_t state = seed ^ 0x6a09e667f3bcc909ULL;
    for (size_t i = ids.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(next_rand(state) % i);
        std::swap(ids[i - 1], ids[j]);
    }
    if (k >= 0 && static_cast<size_t>(k) < ids.size()) ids.resize(static_cast<size_t>(k));
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

ReportRow mean_row(const std::string& label, const std::vector<MetricScores>& scores) {
    if (scores.empty()) throw ArgumentError("mean over an empty group: " + label);
    std::vector<std::array<double, 5>> values;
    values.reserve(scores.size());
    for (const MetricScores& s : scores) {
        std::array<double, 5> v{};
        for (Metric m : kAllMetrics) v[static_cast<size_t>(m)] = s.get(m);
        values.push_back(v);
    }
    return mean_row_doubles(label, values);
}

ReportRow exact_match_rate(const std::string& label,
                           const std::vector<std::pair<MetricScores, MetricScores>>& joined) {
    if (joined.empty()) throw ArgumentError("exact match over an empty join: " + label);
    ReportRow row;
    row.label = label;
    row.n = static_cast<int>(joined.size());
    for (Metric m : kAllMetrics) {
        int matches = 0;
        for (const auto& [a, b] : joined)
            if (a.get(m) == b.get(m)) ++matches;
        row.cells[static_cast<size_t>(m)] =
            ReportCell{100.0 * matches / static_cast<double>(joined.size()), true};
    }
    return row;
}

AnalysisReport analyze(const std::vector<RunData>& runs, const HumanIndex& ratings,
                       const AnalysisOptions& options) {
    if (runs.empty()) throw ArgumentError("analysis needs at least one run");
    if (ratings.empty()) throw ArgumentError("analysis needs human ratings");

    std::vector<std::string> datasets;
    for (const RunData& run : runs)
        for (const SummaryRow& row : run.rows)
            if (std::find(datasets.begin(), datasets.end(), row.dataset) == datasets.end())
                datasets.push_back(row.dataset);

    AnalysisReport rep;
    size_t total_overlap = 0;

    for (const std::string& dataset : datasets) {
        ReportTable means{"means", dataset, {}, {}};
        ReportTable corr{"correlation", dataset, {}, {}};
        ReportTable match{"match", dataset, {}, {}};

        // Human Baseline: every rated question of this dataset, one mean
        // rating vector per question.
        {
            std::set<std::string> qids;
            for (const RunData& run : runs)
                for (const SummaryRow& row : run.rows)
                    if (row.dataset == dataset) qids.insert(row.question_id);
            std::vector<std::array<double, 5>> human;
            for (const std::string& qid : qids)
                if (auto m = ratings.mean_of(qid)) human.push_back(*m);
            if (!human.empty())
                means.rows.push_back(mean_row_doubles("Human Baseline", human));
            else
                rep.warnings.push_back("dataset " + dataset +
                                       ": no rated questions, Human Baseline row omitted");
        }

        for (const RunData& run : runs) {
            std::string label = run.model + " (" + approach_label(run.mode) + ")";

            std::vector<MetricScores> scored;
            std::vector<const SummaryRow*> ok_rows;
            for (const SummaryRow& row : run.rows) {
                if (row.dataset != dataset || !row.ok) continue;
                scored.push_back(row.scores);
                ok_rows.push_back(&row);
            }
            if (scored.empty()) {
                rep.warnings.push_back("dataset " + dataset + ": no scored questions for " +
                                       label + ", rows omitted");
                continue;
            }
            means.rows.push_back(mean_row(label, scored));

            // Correlation against per-question mean ratings.
            std::array<std::vector<double>, 5> xs, ys;
            int joined = 0;
            for (const SummaryRow* row : ok_rows) {
                auto human = ratings.mean_of(row->question_id);
                if (!human) continue;
                ++joined;
                for (Metric m : kAllMetrics) {
                    xs[static_cast<size_t>(m)].push_back(row->scores.get(m));
                    ys[static_cast<size_t>(m)].push_back((*human)[static_cast<size_t>(m)]);
                }
            }
            total_overlap += static_cast<size_t>(joined);
            if (joined >= 2) {
                ReportRow row;
                row.label = label;
                row.n = joined;
                bool any_undefined = false;
                for (size_t m = 0; m < 5; ++m) {
                    auto r = pearson_r(xs[m], ys[m]);
                    row.cells[m] = r ? ReportCell{*r, true} : ReportCell{0.0, false};
                    any_undefined |= !r;
                }
                if (any_undefined &&
                    std::find(corr.notes.begin(), corr.notes.end(),
                              "n/a: correlation undefined (a sample has zero variance)") ==
                        corr.notes.end())
                    corr.notes.push_back(
                        "n/a: correlation undefined (a sample has zero variance)");
                corr.rows.push_back(std::move(row));
            } else {
                rep.warnings.push_back("dataset " + dataset + ": fewer than two rated questions "
                                                              "for " +
                                       label + ", correlation row omitted");
            }

            // Exact match against per-question mode ratings, optionally on a
            // sample of the joined ids.
            std::vector<std::string> ids;
            for (const SummaryRow* row : ok_rows)
                if (ratings.has(row->question_id)) ids.push_back(row->question_id);
            std::sort(ids.begin(), ids.end());
            if (!options.match_ids.empty()) {
                std::set<std::string> wanted(options.match_ids.begin(),
                                             options.match_ids.end());
                std::vector<std::string> kept;
                for (const std::string& id : ids)
                    if (wanted.count(id)) kept.push_back(id);
                ids = std::move(kept);
            } else if (options.match_sample) {
                ids = sample_ids(std::move(ids), *options.match_sample, options.seed);
            }
            if (!ids.empty()) {
                std::set<std::string> chosen(ids.begin(), ids.end());
                std::vector<std::pair<MetricScores, MetricScores>> joined_scores;
                for (const SummaryRow* row : ok_rows)
                    if (chosen.count(row->question_id))
                        joined_scores.emplace_back(row->scores,
                                                   *ratings.mode_low_of(row->question_id));
                match.rows.push_back(exact_match_rate(label, joined_scores));
            } else {
                rep.warnings.push_back("dataset " + dataset + ": no rated questions for " +
                                       label + ", match row omitted");
            }
        }

        // Feedback-minus-baseline correlation deltas for models that ran both
        // modes on this dataset.
        ReportTable delta{"delta", dataset, {}, {}};
        {
            std::vector<std::string> models;
            for (const RunData& run : runs)
                if (std::find(models.begin(), models.end(), run.model) == models.end())
                    models.push_back(run.model);
            for (const std::string& model : models) {
                const ReportRow* base = nullptr;
                const ReportRow* feedback = nullptr;
                for (const ReportRow& row : corr.rows) {
                    if (row.label == model + " (Baseline Approach)" && !base) base = &row;
                    if (row.label == model + " (Feedback-based Approach)" && !feedback)
                        feedback = &row;
                }
                if (!base || !feedback) continue;
                ReportRow row;
                row.label = model + " (feedback - baseline)";
                row.n = feedback->n;
                for (size_t m = 0; m < 5; ++m) {
                    if (base->cells[m].defined && feedback->cells[m].defined)
                        row.cells[m] =
                            ReportCell{feedback->cells[m].value - base->cells[m].value, true};
                    else
                        row.cells[m] = ReportCell{0.0, false};
                }
                delta.rows.push_back(std::move(row));
            }
        }

        if (!means.rows.empty()) rep.tables.push_back(std::move(means));
        if (!corr.rows.empty()) rep.tables.push_back(std::move(corr));
        if (!match.rows.empty()) rep.tables.push_back(std::move(match));
        if (!delta.rows.empty()) rep.tables.push_back(std::move(delta));
    }

    if (total_overlap == 0)
        throw ArgumentError("runs and ratings share no question ids; nothing to analyze");
    return rep;
}

namespace {

const char* table_title(const std::string& kind) {
    if (kind == "means") return "Mean scores";
    if (kind == "correlation") return "Pearson correlation vs human ratings";
    if (kind == "match") return "Exact score matches vs human ratings (%)";
    if (kind == "delta") return "Correlation delta (feedback - baseline)";
    return kind.c_str();
}

}  // namespace

std::string report_to_csv(const AnalysisReport& report) {
    std::ostringstream out;
    out << "table,dataset,row,gram,app,rel,nov,com,n\n";
    for (const ReportTable& table : report.tables) {
        for (const ReportRow& row : table.rows) {
            out << table.kind << "," << csv_escape(table.dataset) << "," << csv_escape(row.label);
            for (const ReportCell& cell : row.cells)
                out << "," << (cell.defined ? format_double_full(cell.value) : "n/a");
            out << "," << row.n << "\n";
        }
    }
    return out.str();
}

std::string report_to_text(const AnalysisReport& report) {
    std::ostringstream out;
    for (const ReportTable& table : report.tables) {
        out << "== " << table_title(table.kind) << " [" << table.dataset << "] ==\n";
        size_t width = 0;
        for (const ReportRow& row : table.rows) width = std::max(width, row.label.size());
        width += 2;
        out << std::string(width, ' ');
        for (Metric m : kAllMetrics) {
            std::string label = metric_label(m);
            out << std::string(7 - label.size(), ' ') << label;
        }
        out << "      n\n";
        for (const ReportRow& row : table.rows) {
            out << row.label << std::string(width - row.label.size(), ' ');
            for (const ReportCell& cell : row.cells) {
                std::string text = cell.defined ? format_double(cell.value, 2) : "n/a";
                out << std::string(text.size() < 7 ? 7 - text.size() : 1, ' ') << text;
            }
            std::string n = std::to_string(row.n);
            out << std::string(n.size() < 7 ? 7 - n.size() : 1, ' ') << n << "\n";
        }
        for (const std::string& note : table.notes) out << "note: " << note << "\n";
        out << "\n";
    }
    if (!report.warnings.empty()) {
        out << "warnings:\n";
        for (const std::string& w : report.warnings) out << "- " << w << "\n";
    }
    return out.str();
}

}  // namespace qqeval
