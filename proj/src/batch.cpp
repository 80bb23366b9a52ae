#include "qqeval/batch.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "qqeval/dataset.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/util.hpp"

namespace qqeval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string manifest_path_of(const std::string& run_dir) { return run_dir + "/manifest.json"; }
std::string summary_path_of(const std::string& run_dir) { return run_dir + "/summary.csv"; }
std::string transcript_path_of(const std::string& run_dir) {
    return run_dir + "/transcript.jsonl";
}

std::string sanitize_id(const std::string& question_id) {
    std::string out = question_id;
    for (char& c : out) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '_' || c == '-';
        if (!ok) c = '_';
    }
    return out;
}

std::string trace_path_of(const std::string& run_dir, const std::string& question_id) {
    return run_dir + "/traces/" + sanitize_id(question_id) + ".json";
}

namespace {

void write_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    write_text_file(tmp, content);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

std::string manifest_text(const RunConfig& config, const PromptLibrary& library) {
    json j{{"schema", "qqeval-manifest-v1"},
           {"config", json::parse(run_config_to_json_text(config))},
           {"config_hash", run_config_hash(config)},
           {"template_hashes", library.template_hashes()},
           {"temperature_schedule", config.engine.schedule()},
           {"seed_note",
            "seed fixes mock providers and analysis sampling only; remote models stay "
            "nondeterministic"}};
    return j.dump(2) + "\n";
}

std::string summary_text(const std::vector<QuestionRecord>& records,
                         const std::vector<EvaluationTrace>& traces) {
    std::ostringstream out;
    out << "question_id,dataset,status,gram,app,rel,nov,com,converged,iterations_used,"
           "failure_reason\n";
    for (size_t i = 0; i < records.size(); ++i) {
        const QuestionRecord& rec = records[i];
        const EvaluationTrace& t = traces[i];
        out << csv_escape(rec.id) << "," << csv_escape(rec.dataset) << ",";
        if (t.failed) {
            std::string reason = t.failure_reason;
            for (char& c : reason)
                if (c == '\n' || c == '\r') c = ' ';
            out << "failed,,,,,," << (t.converged ? "true" : "false") << ","
                << t.iterations_used << "," << csv_escape(reason) << "\n";
        } else {
            const MetricScores& s = *t.final_scores;
            out << "ok";
            for (Metric m : kAllMetrics) out << "," << s.get(m);
            out << "," << (t.converged ? "true" : "false") << "," << t.iterations_used << ",\n";
        }
    }
    return out.str();
}

}  // namespace

BatchResult run_batch(const RunConfig& config, std::ostream* progress) {
    config.validate();

    std::vector<QuestionRecord> records;
    {
        std::set<std::string> ids;
        std::map<std::string, std::string> owners;  // sanitized name -> id
        for (const DatasetSpec& spec : config.datasets) {
            std::vector<QuestionRecord> part = load_pairs(spec.path, spec.name);
            for (QuestionRecord& rec : part) {
                if (!ids.insert(rec.id).second)
                    throw ConfigError("--dataset",
                                      "duplicate question id across datasets: " + rec.id);
                auto claimed = owners.emplace(sanitize_id(rec.id), rec.id);
                if (!claimed.second)
                    throw ConfigError("--dataset", "ids '" + claimed.first->second + "' and '" +
                                                       rec.id +
                                                       "' collide as trace file names");
                records.push_back(std::move(rec));
            }
        }
    }

    PromptLibrary library = config.prompt_dir.empty() ? PromptLibrary::builtin()
                                                      : PromptLibrary::from_directory(
                                                            config.prompt_dir);
    MetricDefinitionSet defs =
        config.definitions_path.empty()
            ? MetricDefinitionSet::defaults(config.engine.scale)
            : MetricDefinitionSet::load(config.definitions_path, config.engine.scale);

    BatchResult result;
    result.run_dir = config.run_dir;
    result.manifest_path = manifest_path_of(config.run_dir);
    result.summary_path = summary_path_of(config.run_dir);

    bool resuming = fs::exists(result.manifest_path);
    if (resuming) {
        json manifest;
        try {
            manifest = json::parse(read_text_file(result.manifest_path));
        } catch (const json::exception& e) {
            throw ConfigError("--run-dir",
                              std::string("existing manifest is unreadable: ") + e.what());
        }
        std::string previous = manifest.value("config_hash", "");
        std::string current = run_config_hash(config);
        if (previous != current)
            throw ConfigError("--run-dir", "directory holds a run with a different config (" +
                                               previous + " vs " + current +
                                               "); resume with the same config or use a fresh "
                                               "directory");
    } else if (fs::exists(config.run_dir) && !fs::is_empty(config.run_dir)) {
        throw ConfigError("--run-dir",
                          "directory exists, is not empty, and has no manifest; refusing to "
                          "write into it: " + config.run_dir);
    }

    std::error_code ec;
    fs::create_directories(config.run_dir + "/traces", ec);
    if (ec) throw IoError("cannot create run directory: " + ec.message());

    // The manifest lands before any evaluation so an interrupted run can be
    // resumed (or replayed) from what is on disk.
    if (!resuming) write_file_atomic(result.manifest_path, manifest_text(config, library));

    Engine engine(library, defs, config.engine);
    ProviderFactory factory;
    EngineProviders providers;
    providers.tm1 = factory.get(config.tm1);
    if (config.tm2) providers.tm2 = factory.get(*config.tm2);
    if (config.tm1_judge) providers.tm1_judge = factory.get(*config.tm1_judge);
    if (config.tm2_judge) providers.tm2_judge = factory.get(*config.tm2_judge);
    if (config.record) {
        result.transcript_path = transcript_path_of(config.run_dir);
        auto writer = std::make_shared<TranscriptWriter>(result.transcript_path);
        providers.tm1 = with_recording(providers.tm1, writer);
        if (providers.tm2) providers.tm2 = with_recording(providers.tm2, writer);
        if (providers.tm1_judge) providers.tm1_judge = with_recording(providers.tm1_judge, writer);
        if (providers.tm2_judge) providers.tm2_judge = with_recording(providers.tm2_judge, writer);
    }

    std::vector<EvaluationTrace> traces(records.size());
    std::vector<size_t> pending;
    for (size_t i = 0; i < records.size(); ++i) {
        std::string path = trace_path_of(config.run_dir, records[i].id);
        if (resuming && fs::exists(path)) {
            try {
                EvaluationTrace t = trace_from_json_text(read_text_file(path));
                if (t.question_id == records[i].id) {
                    traces[i] = std::move(t);
                    result.resumed += 1;
                    continue;
                }
            } catch (const Error&) {
                // fall through: a half-written trace is redone
            }
        }
        pending.push_back(i);
    }

    std::atomic<size_t> cursor{0};
    std::atomic<size_t> done{0};
    std::atomic<bool> abort{false};
    std::mutex fail_mu;
    std::exception_ptr failure;
    std::mutex progress_mu;

    auto worker = [&]() {
        for (;;) {
            if (abort.load()) return;
            size_t slot = cursor.fetch_add(1);
            if (slot >= pending.size()) return;
            size_t i = pending[slot];
            const QuestionRecord& rec = records[i];
            try {
                EvaluationTrace t = config.mode == RunMode::baseline
                                        ? engine.baseline_evaluate(rec, providers)
                                        : engine.strive_evaluate(rec, providers);
                write_file_atomic(trace_path_of(config.run_dir, rec.id),
                                  trace_to_json_text(t));
                if (progress) {
                    std::lock_guard<std::mutex> lock(progress_mu);
                    *progress << "[" << done.fetch_add(1) + 1 + result.resumed << "/"
                              << records.size() << "] " << rec.id << " "
                              << (t.failed ? "failed" : t.converged ? "converged" : "capped");
                    if (!t.failed && t.mode == RunMode::strive)
                        *progress << " after " << t.iterations_used << " iterations";
                    *progress << "\n";
                }
                traces[i] = std::move(t);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fail_mu);
                if (!failure) failure = std::current_exception();
                abort.store(true);
                return;
            }
        }
    };

    size_t workers = std::min<size_t>(static_cast<size_t>(config.parallelism), pending.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    result.evaluated = static_cast<int>(pending.size());
    for (const auto& t : traces)
        if (t.failed) result.failed += 1;

    write_file_atomic(result.summary_path, summary_text(records, traces));
    return result;
}

}  // namespace qqeval
