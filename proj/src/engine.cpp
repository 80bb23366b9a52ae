#include "qqeval/engine.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/parser.hpp"
#include "qqeval/util.hpp"

namespace qqeval {

using nlohmann::json;

const char* convergence_rule_key(ConvergenceRule rule) {
    switch (rule) {
        case ConvergenceRule::cross_module: return "cross_module";
        case ConvergenceRule::per_module: return "per_module";
    }
    return "?";
}

std::optional<ConvergenceRule> convergence_rule_from_key(const std::string& key) {
    if (key == "cross_module") return ConvergenceRule::cross_module;
    if (key == "per_module") return ConvergenceRule::per_module;
    return std::nullopt;
}

void EngineOptions::validate() const {
    if (n < 1) throw ConfigError("n", "candidate count must be >= 1");
    if (!temperatures.empty() && static_cast<int>(temperatures.size()) != n)
        throw ConfigError("temperatures", "need exactly n=" + std::to_string(n) +
                                              " values, got " +
                                              std::to_string(temperatures.size()));
    for (double t : temperatures)
        if (t < 0.0 || t > 2.0)
            throw ConfigError("temperatures", "value " + format_double(t, 3) + " outside [0, 2]");
    if (judge_temperature < 0.0 || judge_temperature > 2.0)
        throw ConfigError("judge_temperature", "outside [0, 2]");
    if (baseline_temperature < 0.0 || baseline_temperature > 2.0)
        throw ConfigError("baseline_temperature", "outside [0, 2]");
    if (max_iterations < 2)
        throw ConfigError("max_iterations", "convergence needs at least 2 full iterations");
    if (max_output_tokens <= 0) throw ConfigError("max_output_tokens", "must be positive");
    if (scale.min >= scale.max) throw ConfigError("scale", "min must be below max");
}

std::vector<double> EngineOptions::schedule() const {
    if (!temperatures.empty()) return temperatures;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(n));
    if (n == 1) {
        out.push_back(0.1);
        return out;
    }
    for (int i = 0; i < n; ++i)
        out.push_back(0.1 + 0.9 * static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

Engine::Engine(PromptLibrary library, MetricDefinitionSet defs, EngineOptions options)
    : library_(std::move(library)), defs_(std::move(defs)), options_(std::move(options)) {
    options_.validate();
    if (!(defs_.scale() == options_.scale))
        throw ConfigError("scale", "metric definitions and engine options disagree on bounds");
}

namespace {

std::string gen_tag(const std::string& qid, int iteration, TmModule module, int index) {
    std::ostringstream out;
    out << "gen/" << qid << "/iter" << iteration << "/" << tm_module_key(module) << "/cand"
        << index;
    return out.str();
}

std::string judge_tag(const std::string& qid, int iteration, TmModule module) {
    std::ostringstream out;
    out << "judge/" << qid << "/iter" << iteration << "/" << tm_module_key(module);
    return out.str();
}

CompletionProvider& resolve(const std::shared_ptr<CompletionProvider>& preferred,
                            const std::shared_ptr<CompletionProvider>& fallback) {
    if (preferred) return *preferred;
    if (fallback) return *fallback;
    throw ArgumentError("no provider configured for this role");
}

// One completion plus at most one corrective re-ask, parsed by `parser`.
template <typename Parser>
auto ask(CompletionProvider& provider, const std::string& prompt, double temperature,
         int max_tokens, const std::string& tag, Parser parser, int* attempts,
         std::vector<std::string>* repair_tags) {
    if (attempts) ++*attempts;
    std::string first = provider.complete({prompt, temperature, max_tokens, tag}).text;
    auto outcome = parse_with_repair(
        first,
        [&](const std::string& correction) {
            if (attempts) ++*attempts;
            return provider.complete({prompt + "\n\n" + correction, temperature, max_tokens,
                                      tag + "/fix"})
                .text;
        },
        parser);
    if (outcome.repaired && repair_tags) repair_tags->push_back(tag);
    return std::move(outcome.value);
}

const TMStepRecord* step_at(const EvaluationTrace& trace, int index, TmModule module) {
    for (const auto& rec : trace.iterations) {
        if (rec.index != index) continue;
        const auto& step = module == TmModule::tm1 ? rec.tm1 : rec.tm2;
        return step ? &*step : nullptr;
    }
    return nullptr;
}

}  // namespace

CandidateSet Engine::generate_candidates(const QuestionRecord& record,
                                         const std::optional<SWPair>& feedback, TmModule module,
                                         int iteration, CompletionProvider& provider,
                                         int* attempts,
                                         std::vector<std::string>* repair_tags) const {
    std::vector<double> temps = options_.schedule();
    std::string prompt = library_.render_generation_prompt(defs_, record, feedback);
    CandidateSet set;
    set.iteration = iteration;
    set.module = module;
    for (int i = 1; i <= options_.n; ++i) {
        double temp = temps[static_cast<size_t>(i - 1)];
        std::string tag = gen_tag(record.id, iteration, module, i);
        SWPair pair;
        try {
            pair = ask(provider, prompt, temp, options_.max_output_tokens, tag, parse_candidate,
                       attempts, repair_tags);
        } catch (const RepairError&) {
            // One fresh generation for this slot, same temperature, new tag.
            // A second terminal failure propagates and fails the question.
            pair = ask(provider, prompt, temp, options_.max_output_tokens, tag + "/r2",
                       parse_candidate, attempts, repair_tags);
        }
        pair.origin = Origin{module, iteration, i, temp};
        set.pairs.push_back(std::move(pair));
    }
    return set;
}

Engine::JudgeOutcome Engine::judge_select(const QuestionRecord& record,
                                          const CandidateSet& candidates,
                                          CompletionProvider& provider,
                                          std::vector<std::string>* repair_tags) const {
    if (candidates.pairs.empty()) throw ArgumentError("judge_select needs candidates");
    std::string prompt = library_.render_judge_prompt(defs_, record, candidates);
    std::string tag = judge_tag(record.id, candidates.iteration, candidates.module);
    int count = static_cast<int>(candidates.pairs.size());

    JudgeOutcome out;
    out.verdict = ask(
        provider, prompt, options_.judge_temperature, options_.max_output_tokens, tag,
        [&](const std::string& text) { return parse_judge_verdict(text, count, options_.scale); },
        &out.attempts, repair_tags);

    const SWPair& s = candidates.pairs[static_cast<size_t>(out.verdict.best_strength_index - 1)];
    const SWPair& w = candidates.pairs[static_cast<size_t>(out.verdict.best_weakness_index - 1)];
    out.state.module = candidates.module;
    out.state.iteration = candidates.iteration;
    out.state.scores = out.verdict.scores;
    out.state.best = SWPair{s.strength, w.weakness, s.origin};
    return out;
}

TMStepRecord Engine::tm_step(const QuestionRecord& record, const std::optional<SWPair>& feedback,
                             TmModule module, int iteration, CompletionProvider& generator,
                             CompletionProvider& judge,
                             std::vector<std::string>* repair_tags) const {
    TMStepRecord step;
    step.module = module;
    step.iteration = iteration;
    CandidateSet set = generate_candidates(record, feedback, module, iteration, generator,
                                           &step.generation_attempts, repair_tags);
    JudgeOutcome outcome = judge_select(record, set, judge, repair_tags);
    step.candidates = std::move(set.pairs);
    step.verdict = outcome.verdict;
    step.best = outcome.state.best;
    step.scores = outcome.state.scores;
    step.judge_attempts = outcome.attempts;
    return step;
}

namespace {

void mark_failed(EvaluationTrace& trace, const std::string& reason,
                 std::vector<std::string> raw_texts) {
    trace.failed = true;
    trace.converged = false;
    trace.failure_reason = reason;
    trace.failure_raw_texts = std::move(raw_texts);
    trace.final_scores.reset();
    int completed = 0;
    for (const auto& rec : trace.iterations)
        if (rec.index >= 1 && rec.tm1 && rec.tm2) completed = std::max(completed, rec.index);
    trace.iterations_used = completed;
}

}  // namespace

EvaluationTrace Engine::baseline_evaluate(const QuestionRecord& record,
                                          const EngineProviders& providers) const {
    EvaluationTrace trace;
    trace.question_id = record.id;
    trace.mode = RunMode::baseline;
    trace.max_iterations = 1;
    trace.scale = options_.scale;
    trace.judge_temperature = options_.judge_temperature;
    trace.convergence_rule = convergence_rule_key(options_.convergence);
    trace.template_hashes = library_.template_hashes();

    try {
        CompletionProvider& provider = resolve(providers.baseline, providers.tm1);
        trace.provider_models = {provider.model_name()};
        std::string prompt = library_.render_baseline_prompt(defs_, record);
        MetricScores scores = ask(
            provider, prompt, options_.baseline_temperature, options_.max_output_tokens,
            "base/" + record.id,
            [&](const std::string& text) { return parse_scores(text, options_.scale); },
            &trace.baseline_attempts, &trace.repair_tags);
        trace.final_scores = scores;
        trace.converged = true;
        trace.iterations_used = 1;
    } catch (const RepairError& e) {
        mark_failed(trace, e.what(), e.raw_texts());
    } catch (const Error& e) {
        mark_failed(trace, e.what(), {});
    }
    return trace;
}

EvaluationTrace Engine::strive_evaluate(const QuestionRecord& record,
                                        const EngineProviders& providers) const {
    EvaluationTrace trace;
    trace.question_id = record.id;
    trace.mode = RunMode::strive;
    trace.max_iterations = options_.max_iterations;
    trace.scale = options_.scale;
    trace.temperatures = options_.schedule();
    trace.judge_temperature = options_.judge_temperature;
    trace.convergence_rule = convergence_rule_key(options_.convergence);
    trace.template_hashes = library_.template_hashes();

    try {
        CompletionProvider& tm1_gen = resolve(providers.tm1, nullptr);
        CompletionProvider& tm2_gen = resolve(providers.tm2, providers.tm1);
        CompletionProvider& tm1_judge = resolve(providers.tm1_judge, providers.tm1);
        CompletionProvider& tm2_judge =
            resolve(providers.tm2_judge, providers.tm2 ? providers.tm2 : providers.tm1);
        {
            std::set<std::string> models{tm1_gen.model_name(), tm2_gen.model_name(),
                                         tm1_judge.model_name(), tm2_judge.model_name()};
            trace.provider_models.assign(models.begin(), models.end());
        }

        TMStepRecord step0 = tm_step(record, std::nullopt, TmModule::tm1, 0, tm1_gen, tm1_judge,
                                     &trace.repair_tags);
        SWPair tm1_best = step0.best;
        trace.iterations.push_back(IterationRecord{0, std::nullopt, std::move(step0)});

        for (int k = 1; k <= options_.max_iterations; ++k) {
            IterationRecord rec;
            rec.index = k;
            rec.tm2 = tm_step(record, tm1_best, TmModule::tm2, k, tm2_gen, tm2_judge,
                              &trace.repair_tags);
            try {
                rec.tm1 = tm_step(record, rec.tm2->best, TmModule::tm1, k, tm1_gen, tm1_judge,
                                  &trace.repair_tags);
            } catch (...) {
                trace.iterations.push_back(std::move(rec));  // keep the finished half
                throw;
            }
            tm1_best = rec.tm1->best;
            MetricScores tm1_scores = rec.tm1->scores;
            trace.iterations.push_back(std::move(rec));

            if (k >= 2 && trace_converged_at(trace, k, options_.convergence)) {
                trace.converged = true;
                trace.iterations_used = k;
                trace.final_scores = tm1_scores;
                break;
            }
        }
        if (!trace.converged) {
            trace.iterations_used = options_.max_iterations;
            trace.final_scores = trace.iterations.back().tm1->scores;
        }
    } catch (const RepairError& e) {
        mark_failed(trace, e.what(), e.raw_texts());
    } catch (const Error& e) {
        mark_failed(trace, e.what(), {});
    }
    return trace;
}

bool trace_converged_at(const EvaluationTrace& trace, int k, ConvergenceRule rule) {
    if (k < 2) return false;
    const TMStepRecord* v1_now = step_at(trace, k, TmModule::tm1);
    const TMStepRecord* v2_now = step_at(trace, k, TmModule::tm2);
    const TMStepRecord* v1_prev = step_at(trace, k - 1, TmModule::tm1);
    const TMStepRecord* v2_prev = step_at(trace, k - 1, TmModule::tm2);
    if (!v1_now || !v2_now || !v1_prev || !v2_prev) return false;
    if (rule == ConvergenceRule::cross_module)
        return v1_now->scores == v2_now->scores && v1_prev->scores == v2_prev->scores;
    return v1_now->scores == v1_prev->scores && v2_now->scores == v2_prev->scores;
}

namespace {

void verify_step(const EvaluationTrace& trace, const TMStepRecord& step, TmModule module,
                 int index, std::vector<std::string>* out) {
    auto fail = [&](const std::string& what) {
        std::ostringstream msg;
        msg << "iteration " << index << " " << tm_module_key(module) << ": " << what;
        out->push_back(msg.str());
    };
    if (step.module != module) fail("module mismatch");
    if (step.iteration != index) fail("iteration mismatch");
    size_t n = trace.temperatures.size();
    if (n != 0 && step.candidates.size() != n)
        fail("expected " + std::to_string(n) + " candidates, found " +
             std::to_string(step.candidates.size()));
    int count = static_cast<int>(step.candidates.size());
    if (step.verdict.best_strength_index < 1 || step.verdict.best_strength_index > count ||
        step.verdict.best_weakness_index < 1 || step.verdict.best_weakness_index > count) {
        fail("verdict index out of range");
        return;
    }
    const SWPair& s = step.candidates[static_cast<size_t>(step.verdict.best_strength_index - 1)];
    const SWPair& w = step.candidates[static_cast<size_t>(step.verdict.best_weakness_index - 1)];
    if (step.best.strength != s.strength) fail("best strength not drawn from its candidate");
    if (step.best.weakness != w.weakness) fail("best weakness not drawn from its candidate");
    if (!(step.scores == step.verdict.scores)) fail("step scores differ from verdict scores");
    if (!step.scores.within(trace.scale)) fail("scores outside scale");
    for (size_t i = 0; i < step.candidates.size(); ++i) {
        const Origin& origin = step.candidates[i].origin;
        if (origin.module != module || origin.iteration != index ||
            origin.candidate_index != static_cast<int>(i + 1)) {
            fail("candidate " + std::to_string(i + 1) + " origin mismatch");
            break;
        }
        if (i < trace.temperatures.size() && origin.temperature != trace.temperatures[i]) {
            fail("candidate " + std::to_string(i + 1) + " temperature off schedule");
            break;
        }
    }
}

}  // namespace

std::vector<std::string> verify_trace(const EvaluationTrace& trace) {
    std::vector<std::string> out;
    auto fail = [&](const std::string& what) { out.push_back(what); };

    if (trace.iterations_used > trace.max_iterations) fail("iterations_used beyond cap");
    if (trace.failed) {
        if (trace.final_scores) fail("failed run carries final scores");
        if (trace.failure_reason.empty()) fail("failed run without a reason");
    } else if (!trace.final_scores) {
        fail("finished run without final scores");
    }

    if (trace.mode == RunMode::baseline) {
        if (!trace.iterations.empty()) fail("baseline trace with iteration records");
        if (!trace.failed && trace.iterations_used != 1) fail("baseline iterations_used != 1");
        if (!trace.failed && !trace.converged) fail("baseline run not marked converged");
        return out;
    }

    for (size_t i = 0; i < trace.iterations.size(); ++i) {
        const IterationRecord& rec = trace.iterations[i];
        if (rec.index != static_cast<int>(i)) {
            fail("iteration indices not contiguous at position " + std::to_string(i));
            break;
        }
        bool last = i + 1 == trace.iterations.size();
        if (rec.index == 0) {
            if (rec.tm2) fail("iteration 0 has a TM2 step");
            if (!rec.tm1) fail("iteration 0 missing its TM1 step");
        } else {
            if (!rec.tm2) fail("iteration " + std::to_string(rec.index) + " missing TM2");
            if (!rec.tm1 && !(trace.failed && last))
                fail("iteration " + std::to_string(rec.index) + " missing TM1");
        }
        if (rec.tm1) verify_step(trace, *rec.tm1, TmModule::tm1, rec.index, &out);
        if (rec.tm2) verify_step(trace, *rec.tm2, TmModule::tm2, rec.index, &out);
    }

    auto rule = convergence_rule_from_key(trace.convergence_rule);
    if (!rule) {
        fail("unknown convergence rule: " + trace.convergence_rule);
        return out;
    }
    if (!trace.failed) {
        if (trace.converged) {
            if (trace.iterations_used < 2) fail("converged before two full iterations");
            if (!trace_converged_at(trace, trace.iterations_used, *rule))
                fail("converged flag set but predicate fails at iterations_used");
            if (static_cast<int>(trace.iterations.size()) != trace.iterations_used + 1)
                fail("trace continues past convergence");
            const TMStepRecord* v1 = step_at(trace, trace.iterations_used, TmModule::tm1);
            if (v1 && trace.final_scores && !(*trace.final_scores == v1->scores))
                fail("final scores differ from converged TM1 scores");
        } else {
            if (trace.iterations_used != trace.max_iterations)
                fail("non-converged run stopped early");
            const TMStepRecord* v1 = step_at(trace, trace.iterations_used, TmModule::tm1);
            if (v1 && trace.final_scores && !(*trace.final_scores == v1->scores))
                fail("final scores differ from last TM1 scores");
        }
        // The loop stops at the first iteration satisfying the rule, so no
        // earlier window may satisfy it.
        int last_full = trace.converged ? trace.iterations_used - 1 : trace.iterations_used;
        for (int k = 2; k <= last_full; ++k)
            if (trace_converged_at(trace, k, *rule))
                fail("predicate already held at iteration " + std::to_string(k));
    }
    return out;
}

// ---- JSON round trip -------------------------------------------------------

namespace {

json scores_to_json(const MetricScores& scores) {
    json j;
    for (Metric m : kAllMetrics) j[metric_key(m)] = scores.get(m);
    return j;
}

MetricScores scores_from_json(const json& j) {
    MetricScores s;
    for (Metric m : kAllMetrics) s.set(m, j.at(metric_key(m)).get<int>());
    return s;
}

json pair_to_json(const SWPair& pair) {
    return json{{"strength", pair.strength},
                {"weakness", pair.weakness},
                {"origin",
                 {{"module", tm_module_key(pair.origin.module)},
                  {"iteration", pair.origin.iteration},
                  {"candidate_index", pair.origin.candidate_index},
                  {"temperature", pair.origin.temperature}}}};
}

TmModule module_from_key(const std::string& key) {
    if (key == "tm1") return TmModule::tm1;
    if (key == "tm2") return TmModule::tm2;
    throw Error("unknown module key: " + key);
}

SWPair pair_from_json(const json& j) {
    SWPair p;
    p.strength = j.at("strength").get<std::string>();
    p.weakness = j.at("weakness").get<std::string>();
    const json& o = j.at("origin");
    p.origin.module = module_from_key(o.at("module").get<std::string>());
    p.origin.iteration = o.at("iteration").get<int>();
    p.origin.candidate_index = o.at("candidate_index").get<int>();
    p.origin.temperature = o.at("temperature").get<double>();
    return p;
}

json step_to_json(const TMStepRecord& step) {
    json candidates = json::array();
    for (const auto& c : step.candidates) candidates.push_back(pair_to_json(c));
    return json{{"module", tm_module_key(step.module)},
                {"iteration", step.iteration},
                {"candidates", std::move(candidates)},
                {"verdict",
                 {{"best_strength", step.verdict.best_strength_index},
                  {"best_weakness", step.verdict.best_weakness_index},
                  {"scores", scores_to_json(step.verdict.scores)}}},
                {"best", pair_to_json(step.best)},
                {"scores", scores_to_json(step.scores)},
                {"generation_attempts", step.generation_attempts},
                {"judge_attempts", step.judge_attempts}};
}

TMStepRecord step_from_json(const json& j) {
    TMStepRecord step;
    step.module = module_from_key(j.at("module").get<std::string>());
    step.iteration = j.at("iteration").get<int>();
    for (const auto& c : j.at("candidates")) step.candidates.push_back(pair_from_json(c));
    const json& v = j.at("verdict");
    step.verdict.best_strength_index = v.at("best_strength").get<int>();
    step.verdict.best_weakness_index = v.at("best_weakness").get<int>();
    step.verdict.scores = scores_from_json(v.at("scores"));
    step.best = pair_from_json(j.at("best"));
    step.scores = scores_from_json(j.at("scores"));
    step.generation_attempts = j.at("generation_attempts").get<int>();
    step.judge_attempts = j.at("judge_attempts").get<int>();
    return step;
}

constexpr const char* kTraceSchema = "qqeval-trace-v1";

}  // namespace

std::string trace_to_json_text(const EvaluationTrace& trace) {
    json iterations = json::array();
    for (const auto& rec : trace.iterations) {
        json r{{"index", rec.index}};
        r["tm2"] = rec.tm2 ? step_to_json(*rec.tm2) : json(nullptr);
        r["tm1"] = rec.tm1 ? step_to_json(*rec.tm1) : json(nullptr);
        iterations.push_back(std::move(r));
    }
    json j{{"schema", kTraceSchema},
           {"question_id", trace.question_id},
           {"mode", run_mode_key(trace.mode)},
           {"max_iterations", trace.max_iterations},
           {"converged", trace.converged},
           {"iterations_used", trace.iterations_used},
           {"final_scores",
            trace.final_scores ? scores_to_json(*trace.final_scores) : json(nullptr)},
           {"failed", trace.failed},
           {"failure_reason", trace.failure_reason},
           {"failure_raw_texts", trace.failure_raw_texts},
           {"scale", {{"min", trace.scale.min}, {"max", trace.scale.max}}},
           {"temperatures", trace.temperatures},
           {"judge_temperature", trace.judge_temperature},
           {"convergence_rule", trace.convergence_rule},
           {"template_hashes", trace.template_hashes},
           {"provider_models", trace.provider_models},
           {"repair_tags", trace.repair_tags},
           {"baseline_attempts", trace.baseline_attempts},
           {"iterations", std::move(iterations)}};
    return j.dump(2) + "\n";
}

EvaluationTrace trace_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("trace is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("schema").get<std::string>() != kTraceSchema)
            throw Error("unsupported trace schema: " + j.at("schema").get<std::string>());
        EvaluationTrace trace;
        trace.question_id = j.at("question_id").get<std::string>();
        std::string mode = j.at("mode").get<std::string>();
        if (mode == "baseline")
            trace.mode = RunMode::baseline;
        else if (mode == "strive")
            trace.mode = RunMode::strive;
        else
            throw Error("unknown trace mode: " + mode);
        trace.max_iterations = j.at("max_iterations").get<int>();
        trace.converged = j.at("converged").get<bool>();
        trace.iterations_used = j.at("iterations_used").get<int>();
        if (!j.at("final_scores").is_null())
            trace.final_scores = scores_from_json(j.at("final_scores"));
        trace.failed = j.at("failed").get<bool>();
        trace.failure_reason = j.at("failure_reason").get<std::string>();
        trace.failure_raw_texts = j.at("failure_raw_texts").get<std::vector<std::string>>();
        trace.scale.min = j.at("scale").at("min").get<int>();
        trace.scale.max = j.at("scale").at("max").get<int>();
        trace.temperatures = j.at("temperatures").get<std::vector<double>>();
        trace.judge_temperature = j.at("judge_temperature").get<double>();
        trace.convergence_rule = j.at("convergence_rule").get<std::string>();
        trace.template_hashes =
            j.at("template_hashes").get<std::map<std::string, std::string>>();
        trace.provider_models = j.at("provider_models").get<std::vector<std::string>>();
        trace.repair_tags = j.at("repair_tags").get<std::vector<std::string>>();
        trace.baseline_attempts = j.at("baseline_attempts").get<int>();
        for (const auto& r : j.at("iterations")) {
            IterationRecord rec;
            rec.index = r.at("index").get<int>();
            if (!r.at("tm2").is_null()) rec.tm2 = step_from_json(r.at("tm2"));
            if (!r.at("tm1").is_null()) rec.tm1 = step_from_json(r.at("tm1"));
            trace.iterations.push_back(std::move(rec));
        }
        return trace;
    } catch (const json::exception& e) {
        throw Error(std::string("trace JSON missing fields: ") + e.what());
    }
}

}  // namespace qqeval
