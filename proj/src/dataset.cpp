#include "qqeval/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qqeval/errors.hpp"
#include "qqeval/util.hpp"

namespace qqeval {

namespace {

using nlohmann::json;

std::string synth_id(const std::string& tag, int row) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d", row);
    return tag + "-" + buf;
}

// Pulls a string field, trimming surrounding whitespace. No other
// normalization: the text goes to the model as-is.
std::string require_text(const json& obj, const char* field, int row) {
    if (!obj.contains(field))
        throw IngestError(row, field, "missing field \"" + std::string(field) + "\"");
    const json& v = obj.at(field);
    if (!v.is_string())
        throw IngestError(row, field, "field \"" + std::string(field) + "\" is not a string");
    std::string text = trim(v.get<std::string>());
    if (text.empty())
        throw IngestError(row, field, "field \"" + std::string(field) + "\" is empty");
    return text;
}

}  // namespace

std::vector<QuestionRecord> load_pairs(const std::string& path, const std::string& dataset_tag) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pair file: " + path);

    std::vector<QuestionRecord> records;
    std::set<std::string> seen_ids;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim_view(line).empty()) continue;  // blank lines tolerated, rows still counted

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw IngestError(row, "", std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw IngestError(row, "", "line is not a JSON object");

        QuestionRecord rec;
        rec.dataset = dataset_tag;
        rec.context = require_text(obj, "context", row);
        rec.question = require_text(obj, "question", row);
        if (obj.contains("id")) {
            if (!obj.at("id").is_string())
                throw IngestError(row, "id", "field \"id\" is not a string");
            rec.id = trim(obj.at("id").get<std::string>());
            if (rec.id.empty()) throw IngestError(row, "id", "field \"id\" is empty");
        } else {
            rec.id = synth_id(dataset_tag, row);
        }
        if (obj.contains("subject") && !obj.at("subject").is_null()) {
            if (!obj.at("subject").is_string())
                throw IngestError(row, "subject", "field \"subject\" is not a string");
            rec.subject = trim(obj.at("subject").get<std::string>());
        }

        if (!seen_ids.insert(rec.id).second)
            throw IngestError(row, "id", "duplicate id \"" + rec.id + "\"");
        records.push_back(std::move(rec));
    }
    return records;
}

void save_pairs(const std::vector<QuestionRecord>& records, const std::string& path) {
    std::ostringstream out;
    for (const auto& rec : records) {
        json obj;
        obj["id"] = rec.id;
        obj["context"] = rec.context;
        obj["question"] = rec.question;
        if (rec.subject) obj["subject"] = *rec.subject;
        out << obj.dump() << "\n";
    }
    write_text_file(path, out.str());
}

std::vector<HumanRating> load_human_ratings(const std::string& path, ScaleBounds scale) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ratings file: " + path);

    static constexpr const char* kHeader = "question_id,rater_id,gram,app,rel,nov,com";

    std::vector<HumanRating> ratings;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    int row = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_view(line).empty()) continue;
        if (!have_header) {
            if (trim(line) != kHeader)
                throw IngestError(row, "", std::string("expected header \"") + kHeader + "\"");
            have_header = true;
            continue;
        }

        auto fields = split(line, ',');
        if (fields.size() != 7)
            throw IngestError(row, "", "expected 7 comma-separated fields, got " +
                                           std::to_string(fields.size()));

        HumanRating r;
        r.question_id = trim(fields[0]);
        r.rater_id = trim(fields[1]);
        if (r.question_id.empty()) throw IngestError(row, "question_id", "empty question_id");
        if (r.rater_id.empty()) throw IngestError(row, "rater_id", "empty rater_id");

        for (size_t i = 0; i < kAllMetrics.size(); ++i) {
            const Metric m = kAllMetrics[i];
            const std::string tok = trim(fields[i + 2]);
            size_t consumed = 0;
            int value = 0;
            try {
                value = std::stoi(tok, &consumed);
            } catch (const std::exception&) {
                consumed = 0;
            }
            if (tok.empty() || consumed != tok.size())
                throw IngestError(row, metric_label(m),
                                  std::string(metric_label(m)) + ": not an integer: \"" + tok + "\"");
            if (!scale.contains(value))
                throw IngestError(row, metric_label(m),
                                  std::string(metric_label(m)) + ": score " + tok +
                                      " outside scale " + std::to_string(scale.min) + "-" +
                                      std::to_string(scale.max));
            r.scores.set(m, value);
        }

        if (!seen.insert({r.question_id, r.rater_id}).second)
            throw IngestError(row, "question_id",
                              "duplicate rating for (" + r.question_id + ", " + r.rater_id + ")");
        ratings.push_back(std::move(r));
    }
    if (!have_header) throw IngestError(1, "", "empty ratings file: header line required");
    return ratings;
}

void save_human_ratings(const std::vector<HumanRating>& ratings, const std::string& path) {
    std::ostringstream out;
    out << "question_id,rater_id,gram,app,rel,nov,com\n";
    for (const auto& r : ratings) {
        out << r.question_id << "," << r.rater_id;
        for (Metric m : kAllMetrics) out << "," << r.scores.get(m);
        out << "\n";
    }
    write_text_file(path, out.str());
}

}  // namespace qqeval
