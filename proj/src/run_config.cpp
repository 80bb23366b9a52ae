#include "qqeval/run_config.hpp"

#include <map>
#include <set>

#include "json.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/util.hpp"

namespace qqeval {

using nlohmann::json;

namespace {

// Validation below surfaces through the CLI, so errors name the flag a user
// would actually change rather than the struct field.
std::string flag_for_field(const std::string& field) {
    static const std::map<std::string, std::string> flags = {
        {"model_name", "--model"},
        {"endpoint", "--endpoint"},
        {"auth_token_env", "--auth-env"},
        {"timeout_seconds", "--timeout"},
        {"max_retries", "--max-retries"},
        {"requests_per_minute", "--rpm"},
        {"transcript_path", "--replay"},
        {"cache_dir", "--cache-dir"},
        {"n", "--candidates"},
        {"temperatures", "--temperatures"},
        {"judge_temperature", "--judge-temperature"},
        {"baseline_temperature", "--baseline-temperature"},
        {"max_iterations", "--max-iterations"},
        {"max_output_tokens", "--max-output-tokens"},
        {"scale", "--scale-min"},
        {"convergence", "--convergence"},
    };
    auto it = flags.find(field);
    return it != flags.end() ? it->second : field;
}

}  // namespace

void RunConfig::validate() const {
    if (datasets.empty()) throw ConfigError("--dataset", "at least one dataset file is required");
    std::set<std::string> names;
    for (const auto& d : datasets) {
        if (d.path.empty()) throw ConfigError("--dataset", "dataset path must not be empty");
        if (d.name.empty()) throw ConfigError("--dataset-name", "dataset name must not be empty");
        if (!names.insert(d.name).second)
            throw ConfigError("--dataset-name", "duplicate dataset name: " + d.name);
    }
    if (run_dir.empty()) throw ConfigError("--run-dir", "a run directory is required");
    if (parallelism < 1) throw ConfigError("--parallelism", "must be >= 1");
    try {
        tm1.validate();
        if (tm2) tm2->validate();
        if (tm1_judge) tm1_judge->validate();
        if (tm2_judge) tm2_judge->validate();
        engine.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(flag_for_field(e.field()), e.detail());
    }
}

namespace {

json provider_to_json(const ProviderConfig& p) {
    json j{{"kind", provider_kind_key(p.kind)},
           {"endpoint", p.endpoint},
           {"model_name", p.model_name},
           {"auth_token_env", p.auth_token_env},
           {"timeout_seconds", p.timeout_seconds},
           {"max_retries", p.max_retries},
           {"requests_per_minute",
            p.requests_per_minute ? json(*p.requests_per_minute) : json(nullptr)},
           {"transcript_path", p.transcript_path},
           {"cache_dir", p.cache_dir},
           {"seed", p.seed}};
    return j;
}

ProviderConfig provider_from_json(const json& j) {
    ProviderConfig p;
    auto kind = provider_kind_from_key(j.at("kind").get<std::string>());
    if (!kind) throw ConfigError("--provider", "unknown kind: " + j.at("kind").get<std::string>());
    p.kind = *kind;
    p.endpoint = j.at("endpoint").get<std::string>();
    p.model_name = j.at("model_name").get<std::string>();
    p.auth_token_env = j.at("auth_token_env").get<std::string>();
    p.timeout_seconds = j.at("timeout_seconds").get<double>();
    p.max_retries = j.at("max_retries").get<int>();
    if (!j.at("requests_per_minute").is_null())
        p.requests_per_minute = j.at("requests_per_minute").get<int>();
    p.transcript_path = j.at("transcript_path").get<std::string>();
    p.cache_dir = j.at("cache_dir").get<std::string>();
    p.seed = j.at("seed").get<uint64_t>();
    return p;
}

constexpr const char* kRunSchema = "qqeval-run-v1";

}  // namespace

std::string run_config_to_json_text(const RunConfig& config) {
    json datasets = json::array();
    for (const auto& d : config.datasets)
        datasets.push_back(json{{"path", d.path}, {"name", d.name}});
    json j{{"schema", kRunSchema},
           {"mode", run_mode_key(config.mode)},
           {"datasets", std::move(datasets)},
           {"providers",
            {{"tm1", provider_to_json(config.tm1)},
             {"tm2", config.tm2 ? provider_to_json(*config.tm2) : json(nullptr)},
             {"tm1_judge", config.tm1_judge ? provider_to_json(*config.tm1_judge) : json(nullptr)},
             {"tm2_judge",
              config.tm2_judge ? provider_to_json(*config.tm2_judge) : json(nullptr)}}},
           {"engine",
            {{"n", config.engine.n},
             {"temperatures", config.engine.temperatures},
             {"judge_temperature", config.engine.judge_temperature},
             {"baseline_temperature", config.engine.baseline_temperature},
             {"max_iterations", config.engine.max_iterations},
             {"max_output_tokens", config.engine.max_output_tokens},
             {"scale", {{"min", config.engine.scale.min}, {"max", config.engine.scale.max}}},
             {"convergence_rule", convergence_rule_key(config.engine.convergence)}}},
           {"parallelism", config.parallelism},
           {"run_dir", config.run_dir},
           {"record", config.record},
           {"seed", config.seed},
           {"prompt_dir", config.prompt_dir},
           {"definitions_path", config.definitions_path}};
    return j.dump(2) + "\n";
}

RunConfig run_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("--from-manifest", std::string("not valid JSON: ") + e.what());
    }
    try {
        if (j.at("schema").get<std::string>() != kRunSchema)
            throw ConfigError("--from-manifest",
                              "unsupported config schema: " + j.at("schema").get<std::string>());
        RunConfig c;
        std::string mode = j.at("mode").get<std::string>();
        if (mode == "baseline")
            c.mode = RunMode::baseline;
        else if (mode == "strive")
            c.mode = RunMode::strive;
        else
            throw ConfigError("--mode", "unknown mode: " + mode);
        for (const auto& d : j.at("datasets"))
            c.datasets.push_back(
                DatasetSpec{d.at("path").get<std::string>(), d.at("name").get<std::string>()});
        const json& p = j.at("providers");
        c.tm1 = provider_from_json(p.at("tm1"));
        if (!p.at("tm2").is_null()) c.tm2 = provider_from_json(p.at("tm2"));
        if (!p.at("tm1_judge").is_null()) c.tm1_judge = provider_from_json(p.at("tm1_judge"));
        if (!p.at("tm2_judge").is_null()) c.tm2_judge = provider_from_json(p.at("tm2_judge"));
        const json& e = j.at("engine");
        c.engine.n = e.at("n").get<int>();
        c.engine.temperatures = e.at("temperatures").get<std::vector<double>>();
        c.engine.judge_temperature = e.at("judge_temperature").get<double>();
        c.engine.baseline_temperature = e.at("baseline_temperature").get<double>();
        c.engine.max_iterations = e.at("max_iterations").get<int>();
        c.engine.max_output_tokens = e.at("max_output_tokens").get<int>();
        c.engine.scale.min = e.at("scale").at("min").get<int>();
        c.engine.scale.max = e.at("scale").at("max").get<int>();
        auto rule = convergence_rule_from_key(e.at("convergence_rule").get<std::string>());
        if (!rule)
            throw ConfigError("--convergence",
                              "unknown rule: " + e.at("convergence_rule").get<std::string>());
        c.engine.convergence = *rule;
        c.parallelism = j.at("parallelism").get<int>();
        c.run_dir = j.at("run_dir").get<std::string>();
        c.record = j.at("record").get<bool>();
        c.seed = j.at("seed").get<uint64_t>();
        c.prompt_dir = j.at("prompt_dir").get<std::string>();
        c.definitions_path = j.at("definitions_path").get<std::string>();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError("--from-manifest", std::string("missing config fields: ") + e.what());
    }
}

std::string run_config_hash(const RunConfig& config) {
    return hex64(fnv1a64(run_config_to_json_text(config)));
}

RunConfig replay_variant(const RunConfig& config, const std::string& transcript_path,
                         const std::string& run_dir) {
    RunConfig out = config;
    auto swap = [&](ProviderConfig& p) {
        p.kind = ProviderKind::replay;
        p.endpoint.clear();
        p.transcript_path = transcript_path;
        p.cache_dir.clear();
        p.requests_per_minute.reset();
    };
    swap(out.tm1);
    if (out.tm2) swap(*out.tm2);
    if (out.tm1_judge) swap(*out.tm1_judge);
    if (out.tm2_judge) swap(*out.tm2_judge);
    out.record = false;
    out.run_dir = run_dir;
    return out;
}

}  // namespace qqeval
